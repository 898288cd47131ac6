import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jacobi_ist.direct import Coefficients, forward
from jacobi_ist.marchenko import (
    DataNotInClass,
    MarchenkoKernel,
    build_kernel,
    choose_truncation,
    inverse,
    kernel_decay_check,
    kernel_difference_check,
    profile_from_coefficients,
    solve_glm,
)
from jacobi_ist.oracle import OracleDivergence, glm_iterative

from conftest import FIXTURES, FREE, STEPLIKE, scattering


def rank_one_kernel(c, x, lo=0, hi=240, side=1):
    """F(n, m) = c x^(n+m): the kernel of a single bound state without reflection."""
    s = np.arange(2 * lo, 2 * hi + 1)
    return MarchenkoKernel.from_reduced(side, lo, hi, c * x ** s.astype(float))


@pytest.mark.parametrize("c, x", [(0.5, 0.4), (1.3, 0.7), (0.05, 0.85)])
@pytest.mark.parametrize("n", [0, 3, 10])
def test_rank_one_closed_form(c, x, n):
    F = rank_one_kernel(c, x)
    sol = solve_glm(F, n)
    tail = c * x ** (2 * n + 2) / (1 - x ** 2)
    for m in (n + 1, n + 2, n + 7):
        assert abs(sol.kappa_at(m) + c * x ** (n + m) / (1 + tail)) < 1e-10
    # K(n, n)^-2 = 1 + F(n, n) / (1 + tail)
    assert abs(sol.K ** -2 - (1 + c * x ** (2 * n) / (1 + tail))) < 1e-10


@pytest.mark.parametrize("name", ["one", "two_site", "step_nest", "step_over", "p2", "p2_step"])
def test_direct_solve_matches_neumann(name):
    S = scattering(name)
    for side in (1, -1):
        lo, hi = (-3, 200) if side == 1 else (-200, 3)
        F = build_kernel(S, side, lo, hi)
        for n in (-2, 0, 2):
            sol = solve_glm(F, n)
            try:
                row, K = glm_iterative(F, n, sol.N)
            except OracleDivergence:
                continue
            assert max(abs(row[m] - sol.kappa_at(m)) for m in row) < 1e-9
            assert abs(K - sol.K) < 1e-9


def test_neumann_oracle_detects_non_contraction():
    F = rank_one_kernel(-0.9, 0.95)
    with pytest.raises(OracleDivergence):
        glm_iterative(F, 0, 40)


def test_non_positive_system_rejected():
    F = rank_one_kernel(-5.0, 0.5)
    with pytest.raises(DataNotInClass):
        solve_glm(F, 0)


def test_truncation_cap_warns():
    from jacobi_ist.marchenko import TruncationWarning
    with pytest.warns(TruncationWarning):
        choose_truncation(rank_one_kernel(1.0, 0.97), 0)


def test_truncation_grows_with_slow_decay():
    fast = choose_truncation(rank_one_kernel(1.0, 0.3), 0)
    slow = choose_truncation(rank_one_kernel(1.0, 0.85), 0)
    assert fast == 32 and slow > fast


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_roundtrip(name):
    c = FIXTURES[name]
    lo, hi = min(c.n_min - 1, -2), max(c.n_max + 1, 2)
    rec = inverse(scattering(name), lo, hi).reconstruction
    n = rec.sites
    err = np.maximum(np.abs(rec.a() - c.a(n)), np.abs(rec.b() - c.b(n)))
    assert err.max() < 1e-8
    assert rec.agreement < 1e-6


@pytest.mark.parametrize("name", sorted(set(FIXTURES) - set(STEPLIKE)))
def test_one_sided_reconstructions_agree_far_out(name):
    rec = inverse(scattering(name), -6, 6).reconstruction
    assert rec.agreement < 1e-8


@pytest.mark.parametrize("name", ["free", "one", "two_site", "step_over", "step_disj", "step_nest"])
def test_kernel_differences_converge(name):
    S = scattering(name)
    res = inverse(S, -1, 1)
    for F, bg in ((res.F_plus, S.bg_plus), (res.F_minus, S.bg_minus)):
        rep = kernel_difference_check(F, 2, bg, start=40)
        assert rep.converged, rep.tails


def test_harmonic_tail_is_not_convergent():
    s = np.arange(0, 801)
    F = MarchenkoKernel.from_reduced(1, 0, 400, 1.0 / (1.0 + s))
    rep = kernel_difference_check(F, 1, FREE, start=40)
    assert not rep.converged
    assert rep.tails["reduced"] > 1.0


@pytest.mark.parametrize("name", ["one", "two_site", "step_nest"])
def test_kernel_respects_decay_majorant(name):
    c = FIXTURES[name]
    res = inverse(scattering(name), -1, 1)
    for side, F in ((1, res.F_plus), (-1, res.F_minus)):
        prof = profile_from_coefficients(c, side, sites=range(F.lo - 2, F.hi + 3))
        assert kernel_decay_check(F, prof).passed


def test_kernel_is_symmetric_and_real():
    res = inverse(scattering("p2"), -1, 1)
    for F in (res.F_plus, res.F_minus):
        assert np.allclose(F.values, F.values.T, atol=1e-14)
        assert F.imag_residue < 1e-10


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_random_roundtrip(seed):
    rng = np.random.default_rng(seed)
    sites = range(-2, 3)
    c = Coefficients.from_sites(FREE, FREE,
                                {n: float(rng.uniform(-0.15, 0.15)) for n in sites},
                                {n: float(rng.uniform(-0.3, 0.3)) for n in sites})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        S = forward(c, 256, n_scan=1024)
        rec = inverse(S, -3, 3).reconstruction
    n = rec.sites
    assert np.max(np.abs(rec.a() - c.a(n))) < 1e-7
    assert np.max(np.abs(rec.b() - c.b(n))) < 1e-7


@pytest.mark.parametrize("name", ["p2", "p2_step"])
def test_periodic_kernel_has_no_noise_floor(name):
    # nodes sit within 1e-13 of band edges; the Bloch multiplier there must keep
    # full relative accuracy or F(n, n) picks up a non-decaying residue
    F = build_kernel(scattering(name), 1, 0, 160)
    d = np.diag(F.values)
    assert np.max(np.abs(np.diff(d[40:]))) < 1e-13
