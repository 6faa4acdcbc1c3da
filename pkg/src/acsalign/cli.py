"""Command-line entry point (``acsalign`` / ``python3 -m acsalign``).

Successful commands exit with 0. Failures print a JSON object with ``error``
and ``message`` keys (plus any diagnostic details) on stderr and exit
nonzero: 2 for invalid input, 3 for numerical failures, 4 for I/O errors.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .alignment import build_block_system, chain_spec, format_support, support_system, zero_propagation
from .basis_change import cross_residuals, apply_cb, build_cb, equivalent_channels, format_pattern
from .channel import ExtensionMode, Scheme, draw_channels
from .errors import AcsAlignError, ConfigError, OutputError
from .harness import SimConfig, emit, parse_schemes, parse_snr_grid, render, run_sweep
from .verification import elimination_p2_acs, elimination_p2_noacs, summarize, verify_claims

log = logging.getLogger(__name__)


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _p(text: str) -> int:
    v = int(text)
    if v < 2:
        raise argparse.ArgumentTypeError("p must be >= 2")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _write(text: str, out: str | None) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
        return
    try:
        Path(out).write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write output: {exc.strerror}", path=out) from exc


def cmd_simulate(args) -> int:
    start, stop, step = parse_snr_grid(args.snr)
    cfg = SimConfig(
        p=args.p,
        schemes=parse_schemes(args.schemes),
        snr_start_db=start,
        snr_stop_db=stop,
        snr_step_db=step,
        drops=args.drops,
        seed=args.seed,
        output_path=args.out,
        output_format=args.format,
        slope_window=tuple(args.slope_window),
    )
    result = run_sweep(cfg, workers=args.workers)
    if args.out and args.out != "-":
        emit(result, cfg.output_format, args.out)
    else:
        sys.stdout.write(render(result, cfg.output_format))
    for s in cfg.schemes:
        try:
            log.info("%s: per-user DoF estimate %.4f", s.value, result.dof_per_user(s))
        except ConfigError:
            pass
    return 0


def cmd_verify(args) -> int:
    reports = verify_claims(args.p, args.trials, args.seed, args.mode)
    summary = summarize(reports, args.seed)
    if args.details:
        summary["draws"] = [r.to_dict() for r in reports]
    _write(json.dumps(summary, indent=2) + "\n", args.out)
    return 0


def cmd_zp_trace(args) -> int:
    p, k = args.p, args.chain
    chain = chain_spec(p, k)
    draw = draw_channels(p, args.seed)
    sc = apply_cb(draw, build_cb(draw), ExtensionMode.acs(p))
    numeric = build_block_system(chain, sc)
    structural = support_system(chain)
    if not np.array_equal(numeric.E_support, structural.E_support):
        raise AcsAlignError("channel support differs from the structural pattern", p=p, chain=k)
    out = [
        f"chain {k}, p={p}: users {list(chain.users)}, receivers {list(chain.receivers)}",
        "initial block support (rows: condition x antenna row, columns: sub-block x antenna row)",
        format_support(structural.E_support),
    ]
    result = zero_propagation(structural)
    for n, (r, c) in enumerate(result.trace, 1):
        user, occ, row = structural.F_labels[c]
        out.append(
            f"step {n}: block row {r + 1} has a single entry, in column {c + 1}"
            f" -> F_{c + 1} = 0 (user {user}, sub-block {occ}, antenna row {row})"
        )
    out.append("final support (last line: 0 = zeroed block)")
    out.append(format_support(result.E_support, result.F_zeroed))
    out.append(f"zeroed blocks: {result.zeroed_blocks()}")
    sys.stdout.write("\n".join(out) + "\n")
    return 0


def cmd_cb_check(args) -> int:
    draw = draw_channels(args.p, args.seed)
    cb = build_cb(draw)
    G = equivalent_channels(draw, cb)
    res = cross_residuals(G, cb.pattern)
    out = [f"p={args.p} seed={args.seed}  (X nonzero, . zero, ! forbidden entry above tolerance)"]
    for j in (1, 2, 3):
        out.append(format_pattern(G, cb.pattern, j))
        out.append(f"  max relative forbidden entry: {res[j - 1]:.3e}")
    out.append(f"pattern residual: {res.max():.3e}")
    sys.stdout.write("\n".join(out) + "\n")
    return 0


def cmd_elim_demo(args) -> int:
    draw = draw_channels(2, args.seed)
    cb = build_cb(draw)
    sc = apply_cb(draw, cb, ExtensionMode.acs(2))
    acs = elimination_p2_acs(sc, args.receiver)
    noacs = elimination_p2_noacs(sc, args.receiver)
    with np.printoptions(precision=4, suppress=True, linewidth=120):
        out = [
            f"p=2 seed={args.seed} receiver {args.receiver}",
            "with ACS (real):",
            str(acs.matrix),
            f"null space dimension: {acs.null_dim}",
            "without ACS (complex):",
            str(noacs.matrix),
            f"null space dimension: {noacs.null_dim}",
        ]
    sys.stdout.write("\n".join(out) + "\n")
    return 0


class _Parser(argparse.ArgumentParser):
    """Argument parser that raises instead of printing usage text and exiting."""

    def error(self, message):
        raise ConfigError(message, prog=self.prog)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="acsalign", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("simulate", help="Monte Carlo sum rate versus SNR")
    sp.add_argument("--p", type=_p, required=True)
    sp.add_argument("--schemes", default="acs,time-only")
    sp.add_argument("--snr", default="0:100:5", help="start:stop:step in dB")
    sp.add_argument("--drops", type=_positive, default=50)
    sp.add_argument("--seed", type=_u64, default=0)
    sp.add_argument("--out", default=None, help="output file (stdout if omitted)")
    sp.add_argument("--format", choices=["csv", "json"], default="csv")
    sp.add_argument("--slope-window", type=float, nargs=2, default=(80.0, 100.0), metavar=("LO", "HI"))
    sp.add_argument("--workers", type=_positive, default=1)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("verify", help="rank and DoF checks over seeded draws")
    sp.add_argument("--p", type=_p, required=True)
    sp.add_argument("--trials", type=_positive, default=100)
    sp.add_argument("--seed", type=_u64, default=0)
    sp.add_argument("--mode", choices=[s.value for s in Scheme], default=Scheme.ACS_REAL.value)
    sp.add_argument("--out", default=None)
    sp.add_argument("--details", action="store_true", help="include per-draw reports")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("zp-trace", help="step through zero propagation on one chain")
    sp.add_argument("--p", type=_p, required=True)
    sp.add_argument("--chain", type=int, choices=[1, 2, 3], default=1)
    sp.add_argument("--seed", type=_u64, default=0)
    sp.set_defaults(func=cmd_zp_trace)

    sp = sub.add_parser("cb-check", help="zero pattern achieved by the change of basis")
    sp.add_argument("--p", type=_p, required=True)
    sp.add_argument("--seed", type=_u64, default=0)
    sp.set_defaults(func=cmd_cb_check)

    sp = sub.add_parser("elim-demo", help="p=2 elimination matrices with and without ACS")
    sp.add_argument("--seed", type=_u64, default=0)
    sp.add_argument("--receiver", type=int, choices=[1, 2, 3], default=1)
    sp.set_defaults(func=cmd_elim_demo)
    return ap


def _fail(payload: dict, code: int) -> int:
    sys.stderr.write(json.dumps(payload, default=str) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        return _fail(exc.to_dict(), 2)
    except SystemExit as exc:  # --help and --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(exc.to_dict(), 2)
    except OutputError as exc:
        return _fail(exc.to_dict(), 4)
    except AcsAlignError as exc:
        return _fail(exc.to_dict(), 3)
    except ValueError as exc:
        return _fail({"error": "invalid_input", "message": str(exc)}, 2)
