import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acsalign.channel import ExtensionMode, lift_matrix
from acsalign.detection import (
    interference_matrix,
    rate_eigenvalues,
    rate_from_eigenvalues,
    rate_point,
    streams,
    user_rate,
    zf_filter,
)
from acsalign.errors import FilterError
from acsalign.linalg import numerical_rank


@pytest.mark.parametrize("p,rank", [(2, 18), (3, 32), (5, 72)])
def test_interference_dimension(design, p, rank):
    # Alignment packs 2 * 2p(p+1) interfering columns into 2(p+1)^2 dimensions.
    d = design(p, 0)
    assert d.filters.interference_rank == (rank,) * 3
    assert rank == 2 * (p + 1) ** 2


@pytest.mark.parametrize("p,shape", [(2, (12, 30)), (3, (24, 56))])
def test_filter_shapes(design, p, shape):
    d = design(p, 0)
    assert all(W.shape == shape for W in d.filters.W)


@pytest.mark.parametrize("p", [2, 3, 6])
def test_leakage_in_structured_domain(design, p):
    d = design(p, 3)
    assert max(d.filters.leakage) <= 1e-8
    for j in (1, 2, 3):
        W = d.filters.W[j - 1]
        assert np.allclose(W @ W.conj().T, np.eye(W.shape[0]), atol=1e-12)


@pytest.mark.parametrize("p", [2, 3, 6])
def test_leakage_in_original_domain(design, p):
    d = design(p, 3)
    for j in (1, 2, 3):
        W = d.w_eff[j - 1]
        for i in (j - 1, j + 1):
            x = lift_matrix(d.draw.channel(j, i), d.mode) @ d.v_eff[(i - 1) % 3]
            scale = np.linalg.norm(W, 2) * np.linalg.norm(x)
            assert np.linalg.norm(W @ x) <= 1e-8 * scale


@pytest.mark.parametrize("scheme", ["acs", "time-only"])
def test_effective_precoders_have_unit_columns(design, scheme):
    d = design(3, 2, scheme)
    for v in d.v_eff:
        assert np.allclose(np.linalg.norm(v, axis=0), 1.0, atol=1e-12)


@pytest.mark.parametrize("p", [2, 3, 4])
def test_desired_signal_keeps_full_rank(design, p):
    d = design(p, 5)
    for j in (1, 2, 3):
        M = d.w_eff[j - 1] @ lift_matrix(d.draw.channel(j, j), d.mode) @ d.v_eff[j - 1]
        assert numerical_rank(M) == 2 * p * (p + 1)


def test_stream_counts(design):
    assert streams(2, design(2, 0).mode) == 12
    assert streams(2, design(2, 0, "time-only").mode) == 6


def test_filter_rejects_unaligned_precoders(design):
    d = design(2, 0)
    rng = np.random.default_rng(0)
    V = tuple(rng.standard_normal(v.shape) for v in d.prec.V)
    broken = dataclasses.replace(d.prec, V=V)
    assert numerical_rank(interference_matrix(1, broken, d.sc)) == 24
    with pytest.raises(FilterError) as exc:
        zf_filter(1, broken, d.sc)
    assert exc.value.details["receiver"] == 1


# -- rates ---------------------------------------------------------------------


def test_rate_matches_log_det_oracle(design):
    # Oracle: log2 det(I + rho Q^{-1} M M^H) / 2T evaluated directly.
    d = design(2, 4)
    j, snr = 2, 30.0
    W = d.w_eff[j - 1]
    M = W @ lift_matrix(d.draw.channel(j, j), d.mode) @ d.v_eff[j - 1]
    Q = W @ W.T
    rho = 10 ** (snr / 10)
    _, logdet = np.linalg.slogdet(np.eye(Q.shape[0]) + rho * np.linalg.solve(Q, M @ M.T))
    expected = logdet / np.log(2) / (2 * d.mode.T)
    assert np.isclose(user_rate(j, d.v_eff, d.w_eff, d.draw, snr, d.mode), expected, rtol=1e-10)


def test_time_only_rate_matches_log_det_oracle(design):
    d = design(2, 4, "time-only")
    W = d.w_eff[0]
    M = W @ lift_matrix(d.draw.channel(1, 1), d.mode) @ d.v_eff[0]
    Q = W @ W.conj().T
    _, logdet = np.linalg.slogdet(np.eye(Q.shape[0]) + 100.0 * np.linalg.solve(Q, M @ M.conj().T))
    expected = logdet / np.log(2) / d.mode.T
    assert np.isclose(user_rate(1, d.v_eff, d.w_eff, d.draw, 20.0, d.mode), expected, rtol=1e-10)


def test_rate_vanishes_at_low_snr(design):
    d = design(2, 1)
    assert user_rate(1, d.v_eff, d.w_eff, d.draw, -200.0, d.mode) < 1e-15


@settings(max_examples=50)
@given(st.lists(st.floats(-30.0, 120.0), min_size=2, max_size=8))
def test_rate_is_nondecreasing_in_snr(snrs):
    eigs = np.array([1e-3, 0.5, 2.0, 7.0])
    r = rate_from_eigenvalues(eigs, sorted(snrs), ExtensionMode.acs(2))
    assert np.all(np.diff(r) >= -1e-12)


@pytest.mark.parametrize("p", [2, 3])
def test_high_snr_slope_per_user(design, p):
    d = design(p, 6)
    target = p * (p + 1) / (2 * p + 1)
    for j in (1, 2, 3):
        eigs = rate_eigenvalues(j, d.v_eff, d.w_eff, d.draw, d.mode)
        r80, r100 = rate_from_eigenvalues(eigs, [80.0, 100.0], d.mode)
        slope = (r100 - r80) / np.log2(10.0**2)
        assert abs(slope - target) <= 0.03 * target


def test_rate_offset_under_power_scaling(design):
    # rate(c rho) - rate(rho) -> (rank / 2T) log2 c at high SNR.
    d = design(3, 2)
    eigs = rate_eigenvalues(1, d.v_eff, d.w_eff, d.draw, d.mode)
    r = rate_from_eigenvalues(eigs, [80.0, 100.0], d.mode)
    expected = 24 / 14 * np.log2(100.0)
    assert abs((r[1] - r[0]) - expected) <= 0.03 * expected


def test_rate_point_sums_users(design):
    d = design(2, 0)
    pt = rate_point(d.v_eff, d.w_eff, d.draw, 40.0, d.mode)
    assert pt.snr_db == 40.0 and len(pt.rate) == 3
    assert np.isclose(pt.sum_rate, sum(pt.rate))


def test_time_only_slope_is_lower(design):
    acs, tonly = design(2, 3), design(2, 3, "time-only")

    def slope(d):
        eigs = rate_eigenvalues(1, d.v_eff, d.w_eff, d.draw, d.mode)
        r = rate_from_eigenvalues(eigs, [80.0, 100.0], d.mode)
        return (r[1] - r[0]) / np.log2(100.0)

    assert slope(tonly) < slope(acs)
