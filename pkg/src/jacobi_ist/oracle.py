"""Independent reference computations used by the test-suite.

These are deliberately simple and slow: finite sections of the operator,
Jost solutions from a Volterra summation equation, and a Neumann-series
solution of the GLM equation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal

from .background import UPPER, _side
from .direct import Coefficients
from .marchenko import MarchenkoKernel, choose_truncation


class OracleDivergence(RuntimeError):
    pass


@dataclass
class FiniteSection:
    sites: np.ndarray
    diagonal: np.ndarray
    offdiagonal: np.ndarray

    @property
    def size(self) -> int:
        return len(self.sites)

    def matrix(self) -> np.ndarray:
        return np.diag(self.diagonal) + np.diag(self.offdiagonal, 1) + np.diag(self.offdiagonal, -1)


def finite_section(coeffs: Coefficients, N: int) -> FiniteSection:
    """Dirichlet truncation of H to the sites -N..N."""
    sites = np.arange(-N, N + 1)
    return FiniteSection(sites, np.asarray(coeffs.b(sites), float), np.asarray(coeffs.a(sites[:-1]), float))


def finite_section_eigen(coeffs: Coefficients, N: int = 200) -> np.ndarray:
    """All eigenvalues of the (2N+1)-site section, ascending."""
    fs = finite_section(coeffs, N)
    return eigvalsh_tridiagonal(fs.diagonal, fs.offdiagonal)


def isolated_eigenvalues(coeffs: Coefficients, N: int = 200, margin: float = 1e-6) -> np.ndarray:
    """Finite-section eigenvalues lying outside the essential spectrum by more than ``margin``."""
    ev = finite_section_eigen(coeffs, N)
    sig = coeffs.bg_plus.spectrum().union(coeffs.bg_minus.spectrum())
    inside = sig.contains(ev, margin)
    return ev[~inside]


def series_jost(coeffs: Coefficients, side, lam, n, terms: int = 500, tol: float = 1e-12, rim: str = UPPER):
    """Jost solution from the summation equation against the full-line background.

    With H^s the periodic background of the chosen side and h(m) the
    perturbation term (H - H^s) phi at site m,
        phi(n) = psi(n) - sum_{m beyond n} k(n, m) h(m),
    k(n, m) = (psi(m) chi(n) - chi(m) psi(n)) / w, where psi (recessive)
    and chi are the two background Weyl solutions and w their Wronskian.
    The coupling of phi(n) to itself through h(n +- 1) is moved to the
    left-hand side, and the equation is solved by successive
    approximations seeded with psi.  Returns phi at the requested sites.
    """
    side = _side(side)
    bg = coeffs.bg_plus if side == 1 else coeffs.bg_minus
    lam = complex(lam)
    n = np.atleast_1d(np.asarray(n, dtype=int))
    lo = min(int(n.min()), coeffs.n_min - 2)
    hi = max(int(n.max()), coeffs.n_max + 2)
    sites = np.arange(lo - 1, hi + 2)
    psi = bg.weyl(lam, sites, side, rim)
    chi = bg.weyl(lam, sites, -side, rim)
    w = bg.a(0) * (chi[sites == 0][0] * psi[sites == 1][0] - chi[sites == 1][0] * psi[sites == 0][0])
    if w == 0:
        raise OracleDivergence("background Weyl solutions are linearly dependent (band edge)")
    da = coeffs.a(sites) - bg.a(sites)
    db = coeffs.b(sites) - bg.b(sites)
    idx = {int(s): i for i, s in enumerate(sites)}

    def kern(i, j):
        return (psi[j] * chi[i] - chi[j] * psi[i]) / w

    def sweep(phi):
        new = phi.copy()
        order = range(len(sites) - 2, 0, -1) if side == 1 else range(1, len(sites) - 1)
        for i in order:
            # perturbation term h(m) = da(m-1) phi(m-1) + db(m) phi(m) + da(m) phi(m+1)
            acc = 0j
            self_coef = 0j
            ms = range(i + 1, len(sites) - 1) if side == 1 else range(i - 1, 0, -1)
            for j in ms:
                k = kern(i, j) if side == 1 else -kern(i, j)
                # contributions of phi(i) itself appear at m = i +- 1 through the bond i, i+-1
                if side == 1 and j == i + 1:
                    self_coef += k * da[i]
                    acc += k * (db[j] * phi[j] + da[j] * phi[j + 1])
                elif side == -1 and j == i - 1:
                    self_coef += k * da[j]
                    acc += k * (da[j - 1] * phi[j - 1] + db[j] * phi[j])
                else:
                    acc += k * (da[j - 1] * phi[j - 1] + db[j] * phi[j] + da[j] * phi[j + 1])
            new[i] = (psi[i] - acc) / (1.0 + self_coef)
        return new

    phi = psi.copy()
    for _ in range(terms):
        new = sweep(phi)
        inc = float(np.max(np.abs(new - phi)))
        phi = new
        if inc < tol * max(1.0, float(np.max(np.abs(phi)))):
            break
    else:
        raise OracleDivergence(f"successive approximations did not settle within {terms} sweeps")
    out = np.array([phi[idx[int(k)]] for k in n])
    return out if out.size > 1 else out[0]


def glm_iterative(F: MarchenkoKernel, n: int, N: int = None, max_iter: int = 2000, tol: float = 1e-14):
    """Neumann series for kappa(n, .) + F(n, .) + kappa(n, .) F = 0; returns (kappa_row, K(n, n)).

    Raises :class:`OracleDivergence` when the truncated kernel is not a
    contraction or the iteration fails to settle.
    """
    side = F.side
    if N is None:
        N = choose_truncation(F, n)
    m = n + side * np.arange(1, N + 1)
    i = m - F.lo
    A = F.values[np.ix_(i, i)]
    f = F.values[n - F.lo, i]
    radius = float(np.max(np.abs(np.linalg.eigvalsh(A)))) if N else 0.0
    if radius >= 1:
        raise OracleDivergence(f"truncated kernel is not a contraction (spectral radius {radius:.3g})")
    kappa = -f
    for _ in range(max_iter):
        new = -f - kappa @ A
        if np.max(np.abs(new - kappa)) < tol:
            kappa = new
            break
        kappa = new
    else:
        raise OracleDivergence("Neumann iteration did not converge")
    radicand = 1.0 + F.values[n - F.lo, n - F.lo] + kappa @ F.values[i, n - F.lo]
    if radicand <= 0:
        raise OracleDivergence("non-positive radicand")
    return {int(k): float(v) for k, v in zip(m, kappa)}, float(radicand ** -0.5)
