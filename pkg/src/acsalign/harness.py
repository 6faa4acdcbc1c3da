"""Monte Carlo SNR sweeps, high-SNR slope fits and result files.

Every drop is a deterministic function of ``(seed, drop index)``: filters are
designed once per drop and evaluated on the whole SNR grid. Drops may run in
worker processes; results are always stacked in drop-index order before any
statistic is computed, so serial and parallel runs agree bit for bit.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .channel import Scheme
from .detection import rate_eigenvalues, rate_from_eigenvalues
from .errors import ConfigError, DegenerateDrawError, OutputError
from .pipeline import design_drop

log = logging.getLogger(__name__)

CSV_HEADER = (
    "scheme",
    "p",
    "snr_db",
    "drops",
    "sum_rate_mean_bpcu",
    "sum_rate_std",
    "rate_u1",
    "rate_u2",
    "rate_u3",
)
#: Largest tolerated share of discarded (degenerate) draws.
MAX_DEGENERATE_FRACTION = 0.01


class OutputFormat(enum.Enum):
    CSV = "csv"
    JSON = "json"


def parse_snr_grid(text: str) -> tuple[float, float, float]:
    """Parse ``"start:stop:step"`` (dB)."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"SNR grid must look like start:stop:step, got {text!r}")
    try:
        return tuple(float(x) for x in parts)  # type: ignore[return-value]
    except ValueError as exc:
        raise ConfigError(f"non-numeric SNR grid {text!r}") from exc


def parse_schemes(text: str | Sequence) -> tuple[Scheme, ...]:
    items = text.split(",") if isinstance(text, str) else list(text)
    try:
        out = tuple(dict.fromkeys(Scheme(s.strip()) if isinstance(s, str) else Scheme(s) for s in items))
    except ValueError as exc:
        raise ConfigError(f"unknown scheme in {text!r}; use acs and/or time-only") from exc
    if not out:
        raise ConfigError("at least one scheme is required")
    return out


@dataclass(frozen=True)
class SimConfig:
    p: int
    schemes: tuple[Scheme, ...] = (Scheme.ACS_REAL, Scheme.TIME_ONLY_COMPLEX)
    snr_start_db: float = 0.0
    snr_stop_db: float = 100.0
    snr_step_db: float = 5.0
    drops: int = 50
    seed: int = 0
    output_path: str | None = None
    output_format: OutputFormat = OutputFormat.CSV
    slope_window: tuple[float, float] = (80.0, 100.0)

    def __post_init__(self):
        object.__setattr__(self, "schemes", parse_schemes(self.schemes))
        object.__setattr__(self, "output_format", OutputFormat(self.output_format))
        if self.p < 2:
            raise ConfigError(f"p must be >= 2, got {self.p}")
        if self.snr_step_db <= 0:
            raise ConfigError("SNR step must be positive")
        if self.snr_start_db > self.snr_stop_db:
            raise ConfigError("SNR start exceeds SNR stop")
        if self.drops < 1:
            raise ConfigError("drops must be >= 1")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    @property
    def snr_grid(self) -> np.ndarray:
        n = int(np.floor((self.snr_stop_db - self.snr_start_db) / self.snr_step_db + 1e-9)) + 1
        return self.snr_start_db + self.snr_step_db * np.arange(n)

    def to_dict(self) -> dict[str, Any]:
        return {
            "p": self.p,
            "schemes": [s.value for s in self.schemes],
            "snr_start_db": self.snr_start_db,
            "snr_stop_db": self.snr_stop_db,
            "snr_step_db": self.snr_step_db,
            "drops": self.drops,
            "seed": self.seed,
            "output_path": self.output_path,
            "output_format": self.output_format.value,
            "slope_window": list(self.slope_window),
        }


@dataclass(frozen=True)
class SchemeCurve:
    """Statistics of one scheme over the SNR grid."""

    sum_rate_mean: np.ndarray
    sum_rate_std: np.ndarray
    user_rate_mean: np.ndarray  # (n_snr, 3)


@dataclass(frozen=True, eq=False)
class SimResult:
    config: SimConfig
    snr_db: np.ndarray
    curves: dict[Scheme, SchemeCurve]
    discarded: int
    per_drop: np.ndarray = field(repr=False)  # (drops, n_schemes, n_snr, 3)

    def slope(self, scheme: Scheme | str, window: tuple[float, float] | None = None) -> float:
        lo, hi = window or self.config.slope_window
        return dof_slope(self, scheme, lo, hi)

    def dof_per_user(self, scheme: Scheme | str, window: tuple[float, float] | None = None) -> float:
        return self.slope(scheme, window) / 3.0

    def to_dict(self) -> dict[str, Any]:
        schemes = {}
        for s, c in self.curves.items():
            schemes[s.value] = {
                "snr_db": self.snr_db.tolist(),
                "sum_rate_mean_bpcu": c.sum_rate_mean.tolist(),
                "sum_rate_std": c.sum_rate_std.tolist(),
                "user_rate_mean": c.user_rate_mean.tolist(),
                "slope_window_db": list(self.config.slope_window),
                "slope": self.slope(s) if _window_ok(self.snr_db, self.config.slope_window) else None,
                "dof_per_user": (
                    self.dof_per_user(s) if _window_ok(self.snr_db, self.config.slope_window) else None
                ),
            }
        return {
            "version": __version__,
            "config": self.config.to_dict(),
            "drops": self.config.drops,
            "discarded_draws": self.discarded,
            "schemes": schemes,
        }


def _window_ok(snr_db: np.ndarray, window) -> bool:
    lo, hi = window
    return int(np.count_nonzero((snr_db >= lo) & (snr_db <= hi))) >= 2


def _drop_rates(args) -> tuple[np.ndarray, int]:
    """Per-user rates of one drop, shape ``(n_schemes, n_snr, 3)``."""
    p, seed, index, schemes, snr_db = args
    designs, discarded = design_drop(p, seed, index, schemes)
    out = np.empty((len(schemes), len(snr_db), 3))
    for a, s in enumerate(schemes):
        d = designs[s]
        for j in (1, 2, 3):
            eigs = rate_eigenvalues(j, d.v_eff, d.w_eff, d.draw, d.mode)
            out[a, :, j - 1] = rate_from_eigenvalues(eigs, snr_db, d.mode)
    return out, discarded


def run_sweep(cfg: SimConfig, workers: int = 1) -> SimResult:
    """Average per-user and sum rates over ``cfg.drops`` drops.

    Raises
    ------
    DegenerateDrawError
        If more than 1% of all draws had to be discarded.
    """
    snr = cfg.snr_grid
    jobs = [(cfg.p, cfg.seed, k, cfg.schemes, snr) for k in range(cfg.drops)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_drop_rates, jobs))
    else:
        results = [_drop_rates(job) for job in jobs]
    per_drop = np.stack([r[0] for r in results])
    discarded = sum(r[1] for r in results)
    total = cfg.drops + discarded
    if discarded / total > MAX_DEGENERATE_FRACTION:
        raise DegenerateDrawError(
            "too many degenerate draws",
            p=cfg.p,
            seed=cfg.seed,
            discarded=discarded,
            total=total,
            drops=[k for k, r in enumerate(results) if r[1]],
        )
    if discarded:
        log.info("discarded %d degenerate draws out of %d", discarded, total)
    sums = per_drop.sum(axis=-1)  # (drops, n_schemes, n_snr)
    ddof = 1 if cfg.drops > 1 else 0
    curves = {
        s: SchemeCurve(
            sum_rate_mean=sums[:, a].mean(axis=0),
            sum_rate_std=sums[:, a].std(axis=0, ddof=ddof),
            user_rate_mean=per_drop[:, a].mean(axis=0),
        )
        for a, s in enumerate(cfg.schemes)
    }
    return SimResult(cfg, snr, curves, discarded, per_drop)


def dof_slope(result: SimResult, scheme: Scheme | str, window_lo_db: float, window_hi_db: float) -> float:
    """Least-squares slope of the mean sum rate against ``log2`` of the linear SNR."""
    scheme = Scheme(scheme)
    if scheme not in result.curves:
        raise ConfigError(f"scheme {scheme.value} was not simulated")
    sel = (result.snr_db >= window_lo_db) & (result.snr_db <= window_hi_db)
    if np.count_nonzero(sel) < 2:
        raise ConfigError(
            f"slope window [{window_lo_db}, {window_hi_db}] dB holds fewer than two grid points"
        )
    x = result.snr_db[sel] / 10.0 * np.log2(10.0)
    y = result.curves[scheme].sum_rate_mean[sel]
    return float(np.polyfit(x, y, 1)[0])


def csv_rows(result: SimResult) -> list[list]:
    rows = []
    for s, c in result.curves.items():
        for n, snr in enumerate(result.snr_db):
            rows.append(
                [
                    s.value,
                    result.config.p,
                    float(snr),
                    result.config.drops,
                    float(c.sum_rate_mean[n]),
                    float(c.sum_rate_std[n]),
                    *(float(x) for x in c.user_rate_mean[n]),
                ]
            )
    return rows


def render(result: SimResult, fmt: OutputFormat | str) -> str:
    """Text of ``result`` in CSV or JSON form."""
    if OutputFormat(fmt) is OutputFormat.CSV:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_HEADER)
        w.writerows(csv_rows(result))
        return buf.getvalue()
    return json.dumps(result.to_dict(), indent=2) + "\n"


def emit(result: SimResult, fmt: OutputFormat | str, path: str | Path) -> Path:
    """Write ``result`` as CSV or JSON to ``path``."""
    path = Path(path)
    text = render(result, fmt)
    try:
        path.write_text(text)
    except OSError as exc:
        raise OutputError(f"cannot write results: {exc.strerror}", path=str(path)) from exc
    return path
