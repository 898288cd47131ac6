import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from jacobi_ist.background import UPPER, ConstantBackground, joukowski, quadrature_grid
from jacobi_ist.direct import (
    Coefficients,
    InvalidCoefficients,
    find_eigenvalues,
    forward,
    jost,
    jost_pair,
    norming_constants,
    recurrence_residual,
    reflection_by_linear_solve,
    scattering_matrix,
    transformation_kernel_matrix,
    wronskian_at,
    wronskian_derivative,
    wronskian_deviation,
)
from jacobi_ist.marchenko import inverse
from jacobi_ist.oracle import isolated_eigenvalues, series_jost
from jacobi_ist.validate import check_property_I

from conftest import FIXTURES, FREE, scattering, random_coefficients


def one_site(beta):
    return Coefficients.from_sites(FREE, FREE, b_dev={0: beta})


def test_window_must_contain_zero():
    with pytest.raises(InvalidCoefficients):
        Coefficients(FREE, FREE, 1, 2, (0.0, 0.0), (0.0, 0.0))


def test_nonpositive_a_rejected():
    with pytest.raises(InvalidCoefficients):
        Coefficients.from_sites(FREE, FREE, a_dev={2: -0.5})


def test_deviation_length_checked():
    with pytest.raises(InvalidCoefficients):
        Coefficients(FREE, FREE, -1, 1, (0.0,), (0.0, 0.0, 0.0))


def test_coefficients_follow_the_owning_background():
    c = Coefficients.from_sites(FREE, ConstantBackground(0.3, 2.0), b_dev={0: 0.1})
    assert c.a(5) == 0.5 and c.a(-5) == 0.3
    assert c.b(0) == 0.1 and c.b(-1) == 2.0


@pytest.mark.parametrize("beta", [1.0, -1.0, 0.5, -0.3, 2.5])
def test_one_site_closed_forms(beta):
    c = one_site(beta)
    grid = quadrature_grid(FREE.spectrum(), 64)
    sm = scattering_matrix(c, grid, grid)
    z = joukowski(FREE, grid.lam, UPPER)
    d = z - 1 / z
    W = wronskian_at(c, grid.lam.astype(complex))
    assert np.allclose(W, (d + 2 * beta) / 2, atol=1e-13)
    assert np.allclose(sm["T_plus"], d / (d + 2 * beta), atol=1e-13)
    assert np.allclose(sm["R_plus"], -2 * beta / (d + 2 * beta), atol=1e-13)
    assert np.allclose(sm["R_minus"], sm["R_plus"], atol=1e-13)
    assert np.allclose(np.abs(sm["R_plus"]) ** 2 + np.abs(sm["T_plus"]) ** 2, 1, atol=1e-13)


@pytest.mark.parametrize("beta", [1.0, -1.0, 0.4, 3.0])
def test_one_site_bound_state(beta):
    # W = 0 <=> z^2 + 2 beta z - 1 = 0 with |z| < 1
    z = -beta + np.sign(beta) * np.sqrt(beta ** 2 + 1)
    lam = (z + 1 / z) / 2
    c = one_site(beta)
    ev = find_eigenvalues(c)
    assert len(ev) == 1 and abs(ev[0] - lam) < 1e-12
    # phi_+(n) = z^|n| at the eigenvalue, so ||phi||^2 = (1 + z^2) / (1 - z^2)
    gp, gm = norming_constants(c, ev)
    assert abs(gp[0] - (1 - z ** 2) / (1 + z ** 2)) < 1e-10
    assert abs(gm[0] - gp[0]) < 1e-10


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_eigenvalues_against_finite_section(name):
    c = FIXTURES[name]
    S = scattering(name)
    fs = isolated_eigenvalues(c, 300)
    assert len(fs) == len(S.eigenvalues)
    assert np.allclose(np.sort(fs), S.eigenvalues, atol=1e-8)


@pytest.mark.parametrize("name", ["one", "two_site", "step_over", "step_nest", "p2", "p2_step"])
@pytest.mark.parametrize("lam", [0.37, -0.81 + 0.05j, 2.2])
def test_jost_against_series_oracle(name, lam):
    c = FIXTURES[name]
    n = np.arange(-4, 5)
    for side in (1, -1):
        ref = series_jost(c, side, lam, n)
        got = jost(c, side, complex(lam), -6, 6).at(n)
        assert np.allclose(got, ref, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_wronskian_is_site_independent(name):
    c = FIXTURES[name]
    lam = np.array([0.13, 0.77, -0.42, 1.6, -2.1], dtype=complex)
    pm, pp = jost_pair(c, lam, UPPER, lo=c.n_min - 4, hi=c.n_max + 4)
    assert wronskian_deviation(c, pm, pp) < 1e-12
    assert recurrence_residual(c, pp) < 1e-10
    assert recurrence_residual(c, pm) < 1e-10


@pytest.mark.parametrize("name", ["two_site", "step_over", "step_nest", "p2_step"])
def test_reflection_cramer_matches_linear_solve(name):
    c = FIXTURES[name]
    S = scattering(name)
    for side, grid, R, T in ((1, S.grid_plus, S.R_plus, S.T_plus), (-1, S.grid_minus, S.R_minus, S.T_minus)):
        for k in range(0, len(grid), 97):
            T2, R2 = reflection_by_linear_solve(c, side, complex(grid.lam[k]), 3)
            assert abs(T2 - T[k]) < 1e-10 and abs(R2 - R[k]) < 1e-10


@pytest.mark.parametrize("name", ["one", "two_site", "step_nest", "p2", "p2_step"])
def test_wronskian_derivative_identity(name):
    c = FIXTURES[name]
    S = scattering(name)
    for lam, gp, gm in zip(S.eigenvalues, S.gamma_plus, S.gamma_minus):
        Wp = wronskian_derivative(c, lam)
        assert abs(Wp ** 2 * gp * gm - 1) < 1e-6


def test_one_site_derivative_value():
    assert abs(wronskian_derivative(one_site(1.0), np.sqrt(2)) + np.sqrt(2)) < 1e-9


@pytest.mark.parametrize("name", ["one", "step_over", "p2"])
def test_transformation_kernel_matches_glm(name):
    c = FIXTURES[name]
    K = transformation_kernel_matrix(c, 1, [0, 1], [0, 1, 2])
    rec = inverse(scattering(name), -1, 1).reconstruction
    for n in (0, 1):
        assert abs(K[n, n] - rec.K_plus[n]) < 1e-8
        assert abs(K[n, n + 1] / K[n, n] - rec.kappa_plus[n][n + 1]) < 1e-8


def test_transmission_tends_to_one():
    S = scattering("step_over")
    (_, tp, tm), (_, tp2, tm2) = S.T_infinity
    assert abs(tp2 - 1) < abs(tp - 1) + 1e-15 and abs(tp2 - 1) < 1e-3


def test_free_operator_has_no_scattering():
    S = scattering("free")
    assert np.max(np.abs(S.R_plus)) < 1e-12 and np.max(np.abs(S.T_plus - 1)) < 1e-12
    assert len(S.eigenvalues) == 0


@pytest.mark.parametrize("name", sorted(FIXTURES))
def test_lower_rim_is_conjugate(name):
    S = scattering(name)
    assert np.allclose(S.lower["R_plus"], np.conj(S.R_plus), atol=1e-13)
    assert np.allclose(S.lower["T_minus"], np.conj(S.T_minus), atol=1e-13)


cases = st.sampled_from([ConstantBackground(0.5, 1.0), ConstantBackground(0.25, 0.0), ConstantBackground(0.5, 3.0)])


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), cases)
def test_random_perturbations_satisfy_property_I(seed, bm):
    c = random_coefficients(FREE, bm, seed)
    S = forward(c, 64, n_scan=512, refine=False)
    for rep in check_property_I(S):
        assert rep.verdict == "pass", (rep.property_id, rep.max_residual)
