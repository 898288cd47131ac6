"""Marchenko kernels, the discrete GLM equations and coefficient recovery."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .background import (
    TOL_QUAD,
    Background,
    ConstantBackground,
    _side,
    delta_factors,
    spectral_density,
)
from .direct import ScatteringData

log = logging.getLogger(__name__)

TOL_TAIL = 1e-10
MIN_TRUNCATION = 32
MAX_TRUNCATION = 160
COND_WARN = 1e12


class GridTooCoarse(RuntimeError):
    pass


class DataNotInClass(ValueError):
    pass


class IllConditionedWarning(RuntimeWarning):
    pass


class TruncationWarning(RuntimeWarning):
    pass


@dataclass
class MarchenkoKernel:
    """F_side(n, m) for n, m in [lo, hi], stored as a dense symmetric matrix."""

    side: int
    lo: int
    hi: int
    values: np.ndarray
    reduced: Optional[np.ndarray] = None  # F(s) for s = 2 lo .. 2 hi (constant backgrounds)
    imag_residue: float = 0.0

    @property
    def index_range(self) -> tuple:
        return self.lo, self.hi

    def __call__(self, n, m):
        return self.values[np.asarray(n) - self.lo, np.asarray(m) - self.lo]

    def F_reduced(self, s):
        if self.reduced is None:
            raise ValueError("kernel has no reduced (n+m) form")
        return self.reduced[np.asarray(s) - 2 * self.lo]

    @classmethod
    def from_reduced(cls, side, lo, hi, reduced) -> "MarchenkoKernel":
        reduced = np.asarray(reduced, dtype=float)
        i = np.arange(hi - lo + 1)
        return cls(_side(side), lo, hi, reduced[i[:, None] + i[None, :]], reduced)

    @classmethod
    def zero(cls, side, lo, hi) -> "MarchenkoKernel":
        return cls.from_reduced(side, lo, hi, np.zeros(2 * (hi - lo) + 1))


def _regular_weyl(bg: Background, side: int, lam: float, n: np.ndarray) -> np.ndarray:
    """delta(lam) psi^side(lam, n) at a real point, finite also at divisor poles."""

    def f(x):
        d, _ = delta_factors(bg.divisor(), complex(x), side)
        return d * bg.weyl(complex(x), n, side)

    v = f(lam)
    if not np.all(np.isfinite(v)):
        eps = 1e-5
        v = 0.5 * (f(lam + eps) + f(lam - eps))
    return np.real(v)


def build_kernel(S: ScatteringData, side, lo: int, hi: int, tol_quad: float = TOL_QUAD) -> MarchenkoKernel:
    """F_side(n, m), n, m in [lo, hi], from the scattering data.

    F_+ = two-rim integral over sigma_+ of R_+ psi^+ psi^+ d omega_+
          + upper-rim integral over sigma_-^(1) of |T_-|^2 psi^+ psi^+ d omega_-
          + sum_k gamma_{+,k} psi~^+(lam_k, n) psi~^+(lam_k, m),
    and symmetrically for F_-.
    """
    side = _side(side)
    if side == 1:
        bg, bgo, grid, gridg, R, Tother, gam = (S.bg_plus, S.bg_minus, S.grid_plus, S.grid_minus,
                                                S.R_plus, S.T_minus, S.gamma_plus)
        Rl = S.lower_values("R_plus")
        sig1 = S.sets["sigma1_minus"]
    else:
        bg, bgo, grid, gridg, R, Tother, gam = (S.bg_minus, S.bg_plus, S.grid_minus, S.grid_plus,
                                                S.R_minus, S.T_plus, S.gamma_minus)
        Rl = S.lower_values("R_minus")
        sig1 = S.sets["sigma1_plus"]
    constant = isinstance(bg, ConstantBackground)
    from .background import LOWER, UPPER

    # reflection term over both rims
    gu = bg.green(grid.lam, UPPER)
    gl = bg.green(grid.lam, LOWER)
    cu = grid.weight * R * gu / (2j * np.pi)
    cl = grid.weight * Rl * gl / (2j * np.pi)
    if constant:
        s = np.arange(2 * lo, 2 * hi + 1)
        zu = bg.weyl(grid.lam, s, side, UPPER)
        zl = bg.weyl(grid.lam, s, side, LOWER)
        term1 = cu @ zu - cl @ zl
    else:
        n = np.arange(lo, hi + 1)
        pu = bg.weyl(grid.lam, n, side, UPPER)
        pl = bg.weyl(grid.lam, n, side, LOWER)
        term1 = (pu.T * cu) @ pu - (pl.T * cl) @ pl
    scale = max(1.0, float(np.max(np.abs(term1)))) if term1.size else 1.0
    resid = float(np.max(np.abs(term1.imag))) / scale if term1.size else 0.0
    if resid > 10 * tol_quad:
        raise GridTooCoarse(f"imaginary residue {resid:.3e} of the reflection term exceeds 10 tol_quad")
    if resid > 0:
        log.debug("dropping imaginary residue %.3e", resid)
    term = np.real(term1)

    # transmission term over sigma_other^(1), upper rim only
    mask = gridg.mask_in(sig1) if len(gridg) else np.zeros(0, bool)
    if np.any(mask):
        lam = gridg.lam[mask]
        c = gridg.weight[mask] * np.abs(Tother[mask]) ** 2 * spectral_density(bgo, lam)
        if constant:
            psi = np.real(bg.weyl(lam, s, side))
            term = term + c @ psi
        else:
            psi = np.real(bg.weyl(lam, n, side))
            term = term + (psi.T * c) @ psi

    # discrete spectrum
    for lam_k, g_k in zip(S.eigenvalues, gam):
        if constant:
            z = np.real(bg.weyl(complex(lam_k), np.array([1]), side))[0]
            term = term + g_k * z ** s
        else:
            v = _regular_weyl(bg, side, float(lam_k), n)
            term = term + g_k * np.outer(v, v)

    if constant:
        K = MarchenkoKernel.from_reduced(side, lo, hi, term)
    else:
        term = 0.5 * (term + term.T)
        K = MarchenkoKernel(side, lo, hi, term)
    K.imag_residue = resid
    return K


# ---------------------------------------------------------------------------
# GLM solve
# ---------------------------------------------------------------------------

@dataclass
class GLMSolution:
    side: int
    n: int
    N: int
    m: np.ndarray
    kappa: np.ndarray
    K: float
    cond: float
    min_eig: float
    residual: float = 0.0

    @property
    def kappa_row(self) -> dict:
        return {int(m): float(k) for m, k in zip(self.m, self.kappa)}

    def kappa_at(self, m: int) -> float:
        i = self.side * (m - self.n) - 1
        return float(self.kappa[i]) if 0 <= i < len(self.kappa) else 0.0


def _tail(F: MarchenkoKernel, n: int, N: int) -> float:
    """Largest |F(l, m)| with l on the solver's side of n and m beyond the truncation."""
    side = F.side
    if side == 1:
        cut = n + N + 1
        if cut > F.hi:
            return np.inf
        return float(np.max(np.abs(F.values[n - F.lo:, cut - F.lo:])))
    cut = n - N - 1
    if cut < F.lo:
        return np.inf
    return float(np.max(np.abs(F.values[: n - F.lo + 1, : cut - F.lo + 1])))


def choose_truncation(F: MarchenkoKernel, n: int, tol_tail: float = TOL_TAIL) -> int:
    room = (F.hi - n) if F.side == 1 else (n - F.lo)
    N = MIN_TRUNCATION
    best = min(room, MAX_TRUNCATION)
    while N <= best:
        if _tail(F, n, N) < tol_tail:
            return N
        N += 8
    warnings.warn(f"kernel tail above tol_tail at the truncation cap (n={n})", TruncationWarning, stacklevel=2)
    return best


def solve_glm(F: MarchenkoKernel, n: int, N: Optional[int] = None, tol_tail: float = TOL_TAIL,
              use_column: bool = False) -> GLMSolution:
    """Solve kappa(n, m) + F(n, m) + sum_l kappa(n, l) F(l, m) = 0 for m beyond n.

    The sum and m run over n+1..n+N (``+``) or n-1..n-N (``-``).
    K(n, n) = (1 + F(n, n) + sum_l kappa(n, l) F(l, n))^(-1/2).
    """
    side = F.side
    if N is None:
        N = choose_truncation(F, n, tol_tail)
    m = n + side * np.arange(1, N + 1)
    if np.any(m < F.lo) or np.any(m > F.hi) or not F.lo <= n <= F.hi:
        raise ValueError(f"kernel range [{F.lo}, {F.hi}] too small for n={n}, N={N}")
    i = m - F.lo
    A = np.eye(N) + F.values[np.ix_(i, i)]
    rhs = -(F.values[i, n - F.lo] if use_column else F.values[n - F.lo, i])
    ev = np.linalg.eigvalsh(A)
    min_eig = float(ev[0])
    if min_eig <= 0:
        raise DataNotInClass(f"I + F is not positive definite at n={n} (min eigenvalue {min_eig:.3e})")
    cond = float(ev[-1] / ev[0])
    if cond > COND_WARN:
        warnings.warn(f"GLM system ill-conditioned at n={n} (cond {cond:.2e})", IllConditionedWarning, stacklevel=2)
    kappa = cho_solve(cho_factor(A), rhs)
    radicand = 1.0 + F.values[n - F.lo, n - F.lo] + kappa @ F.values[i, n - F.lo]
    if not radicand > 0:
        raise DataNotInClass(f"GLM radicand {radicand:.3e} <= 0 at n={n}")
    residual = float(np.max(np.abs(A @ kappa - rhs))) if N else 0.0
    return GLMSolution(side, n, N, m, kappa, float(radicand ** -0.5), cond, min_eig, residual)


# ---------------------------------------------------------------------------
# Reconstruction
# ---------------------------------------------------------------------------

@dataclass
class ReconstructionResult:
    """One-sided and combined coefficient sequences on ``sites``.

    Each one-sided sequence is computed on its own half-axis plus the
    overlap window around the origin; elsewhere it is NaN.
    """

    sites: np.ndarray
    a_plus: np.ndarray
    b_plus: np.ndarray
    a_minus: np.ndarray
    b_minus: np.ndarray
    K_plus: dict
    K_minus: dict
    kappa_plus: dict = field(default_factory=dict)
    kappa_minus: dict = field(default_factory=dict)
    agreement: float = 0.0
    overlap: tuple = (0, 0)

    def a(self):
        """Combined sequence: a_+ on n >= 0, a_- on n < 0."""
        return np.where(self.sites >= 0, self.a_plus, self.a_minus)

    def b(self):
        return np.where(self.sites >= 0, self.b_plus, self.b_minus)

    def to_dict(self) -> dict:
        def col(x):
            return [None if np.isnan(v) else float(v) for v in x]

        return {
            "sites": [int(x) for x in self.sites],
            "a": col(self.a()),
            "b": col(self.b()),
            "a_plus": col(self.a_plus),
            "b_plus": col(self.b_plus),
            "a_minus": col(self.a_minus),
            "b_minus": col(self.b_minus),
            "K_plus": {str(k): float(v) for k, v in sorted(self.K_plus.items())},
            "K_minus": {str(k): float(v) for k, v in sorted(self.K_minus.items())},
            "agreement": float(self.agreement),
            "agreement_range": [int(x) for x in self.overlap],
        }


def reconstruct(sol_plus: dict, sol_minus: dict, bg_plus: Background, bg_minus: Background,
                lo: int, hi: int) -> ReconstructionResult:
    """Coefficients on [lo, hi] from the available GLM solutions.

    a_+(n) = a^+(n) K_+(n+1, n+1) / K_+(n, n)
    b_+(n) = b^+(n) + a^+(n) kappa_+(n, n+1) - a^+(n-1) kappa_+(n-1, n)
    a_-(n) = a^-(n) K_-(n, n) / K_-(n+1, n+1)
    b_-(n) = b^-(n) + a^-(n-1) kappa_-(n, n-1) - a^-(n) kappa_-(n+1, n)

    A one-sided value is produced wherever the solutions it needs (n-1, n,
    n+1) are present.  Agreement is the largest |a_+ - a_-| + |b_+ - b_-|
    over sites where both exist.
    """
    sites = np.arange(lo, hi + 1)
    ap, bp, am, bm = (np.full(len(sites), np.nan) for _ in range(4))
    P, M = sol_plus, sol_minus
    for i, n in enumerate(sites):
        if all(k in P for k in (n - 1, n, n + 1)):
            ap[i] = bg_plus.a(n) * P[n + 1].K / P[n].K
            bp[i] = bg_plus.b(n) + bg_plus.a(n) * P[n].kappa_at(n + 1) - bg_plus.a(n - 1) * P[n - 1].kappa_at(n)
        if all(k in M for k in (n - 1, n, n + 1)):
            am[i] = bg_minus.a(n) * M[n].K / M[n + 1].K
            bm[i] = bg_minus.b(n) + bg_minus.a(n - 1) * M[n].kappa_at(n - 1) - bg_minus.a(n) * M[n + 1].kappa_at(n)
    if np.any(ap <= 0) or np.any(am <= 0):
        raise DataNotInClass("reconstructed a(n) is not positive")
    both = ~np.isnan(ap) & ~np.isnan(am)
    agreement = float(np.max(np.abs(ap - am) + np.abs(bp - bm), where=both, initial=0.0))
    overlap = (int(sites[both].min()), int(sites[both].max())) if both.any() else (0, -1)
    return ReconstructionResult(
        sites, ap, bp, am, bm,
        {n: s.K for n, s in sol_plus.items()}, {n: s.K for n, s in sol_minus.items()},
        {n: s.kappa_row for n, s in sol_plus.items()}, {n: s.kappa_row for n, s in sol_minus.items()},
        agreement, overlap,
    )


@dataclass
class InverseResult:
    reconstruction: ReconstructionResult
    F_plus: MarchenkoKernel
    F_minus: MarchenkoKernel
    truncations: dict


def inverse(S: ScatteringData, lo: int, hi: int, N: Optional[int] = None, tol_tail: float = TOL_TAIL,
            tol_quad: float = TOL_QUAD, overlap: Optional[int] = None) -> InverseResult:
    """Kernels on both sides, GLM solves, reconstruction on [lo, hi].

    The ``+`` equation is solved for sites n >= -overlap and the ``-``
    equation for n <= overlap: on a steplike background each one-sided
    system loses conditioning geometrically on the opposite half-axis, so
    the two sequences are compared on [-overlap, overlap] only.  The
    combined sequence needs nothing beyond the origin.  The default overlap
    is 2 for steplike data and the whole range otherwise.
    """
    if overlap is None:
        overlap = 2 if S.bg_plus != S.bg_minus else max(abs(lo), abs(hi))
    extra = (N if N is not None else MAX_TRUNCATION) + 2
    p_lo, m_hi = max(lo, -overlap), min(hi, overlap)
    Fp = build_kernel(S, 1, min(p_lo, hi) - 1, hi + 1 + extra, tol_quad)
    Fm = build_kernel(S, -1, lo - 1 - extra, max(m_hi, lo) + 1, tol_quad)
    sp = {n: solve_glm(Fp, n, N, tol_tail) for n in range(min(p_lo, hi) - 1, hi + 2)}
    sm = {n: solve_glm(Fm, n, N, tol_tail) for n in range(lo - 1, max(m_hi, lo) + 2)}
    rec = reconstruct(sp, sm, S.bg_plus, S.bg_minus, lo, hi)
    trunc = {"plus": {n: s.N for n, s in sp.items()}, "minus": {n: s.N for n, s in sm.items()}}
    return InverseResult(rec, Fp, Fm, trunc)


# ---------------------------------------------------------------------------
# Kernel diagnostics
# ---------------------------------------------------------------------------

@dataclass
class DecayProfile:
    p: dict
    C: dict
    q: int = 1


def profile_from_coefficients(coeffs, side, q: int = 1, C0: float = 10.0, sites=None) -> DecayProfile:
    """Majorant built from the coefficient deviations from the given side's background.

    p(n) = |a(n) - a^s(n)| + |a(n-1) - a^s(n-1)| + |b(n) - b^s(n)| and
    C(n) = C0 exp(sum over j beyond n of (1 + |j|) p(j)), which is
    non-increasing toward the side's infinity.
    """
    side = _side(side)
    bg = coeffs.bg_plus if side == 1 else coeffs.bg_minus
    if sites is None:
        sites = range(coeffs.n_min - 3, coeffs.n_max + 4)
    sites = sorted(int(k) for k in sites)
    p = {}
    for n in sites:
        p[n] = (abs(float(coeffs.a(n) - bg.a(n))) + abs(float(coeffs.a(n - 1) - bg.a(n - 1)))
                + abs(float(coeffs.b(n) - bg.b(n))))
    C = {}
    for n in sites:
        tail = sum((1 + abs(j)) * p[j] for j in sites if side * (j - n) >= 0)
        C[n] = C0 * float(np.exp(tail))
    return DecayProfile(p, C, q)


@dataclass
class DecayReport:
    passed: bool
    worst_ratio: float
    decay_rate: float
    details: dict = field(default_factory=dict)


def kernel_decay_check(F: MarchenkoKernel, profile: Optional[DecayProfile] = None,
                       tol: float = 1e-8) -> DecayReport:
    """|F(n, m)| <= C(n) sum_{j beyond floor((n+m)/2)} p(j) over the stored range.

    Also fits log|F| along the anti-diagonal (as a function of n+m) to give
    an empirical geometric decay rate per unit of n+m.
    """
    side = F.side
    n = np.arange(F.lo, F.hi + 1)
    worst = 0.0
    passed = True
    if profile is not None:
        psites = np.array(sorted(profile.p))
        pv = np.array([profile.p[k] for k in psites])

        def C_of(k):
            if k in profile.C:
                return profile.C[k]
            # beyond the profile the majorant constant is its value at the nearest end
            ends = sorted(profile.C)
            return profile.C[ends[0]] if k < ends[0] else profile.C[ends[-1]]

        for a in range(len(n)):
            for b in range(a, len(n)):
                s = n[a] + n[b]
                start = s // 2 if side == 1 else -((-s) // 2)
                tail = float(np.sum(pv[side * (psites - start) >= 0]))
                nn = n[a] if side == 1 else n[b]
                bound = C_of(int(nn)) * tail
                v = abs(F.values[a, b])
                if v > bound + tol:
                    passed = False
                if v > tol:
                    worst = max(worst, v / bound if bound > 0 else np.inf)
    # empirical decay along the anti-diagonal
    if F.reduced is not None:
        s = np.arange(2 * F.lo, 2 * F.hi + 1)
        vals = np.abs(F.reduced)
    else:
        s = 2 * n
        vals = np.abs(np.diag(F.values))
    order = side * s
    keep = vals > 1e-13
    rate = float("nan")
    if np.count_nonzero(keep) >= 3:
        x, y = order[keep], np.log(vals[keep])
        slope = np.polyfit(x, y, 1)[0]
        rate = float(np.exp(slope))
    elif not np.any(vals > 0):
        rate = 0.0
    return DecayReport(passed, worst, rate, {"n_entries": int(len(n) ** 2)})


@dataclass
class DifferenceReport:
    converged: bool
    sums: dict
    tails: dict
    start: int


def kernel_difference_check(F: MarchenkoKernel, alpha: int, bg: Background, start: int = 40,
                            tol: float = 1e-8, noise_floor: float = 0.0) -> DifferenceReport:
    """Partial sums of the weighted kernel differences and their tails beyond ``start``.

    diag:     sum |n|^alpha |F(n, n) - F(n+s, n+s)|
    offdiag:  sum |n|^alpha |a(n) F(n, n+1) - a(n-1) F(n-1, n)|
    reduced:  sum |n| |F(n+2s) - F(n)| (constant backgrounds only)
    with s = +-1 the side.  ``tails`` holds the sums over indices beyond
    ``start`` (toward the side's infinity); convergence means every tail is
    below ``tol``.  Entries with modulus below ``noise_floor`` are treated as
    zero (quadrature noise of the kernel itself).
    """
    side = F.side
    n = np.arange(F.lo, F.hi + 1)
    vals = np.where(np.abs(F.values) < noise_floor, 0.0, F.values)
    red = None if F.reduced is None else np.where(np.abs(F.reduced) < noise_floor, 0.0, F.reduced)
    d = np.diag(vals)
    sums, tails = {}, {}
    w = np.abs(n[:-1] if side == 1 else n[1:]).astype(float) ** alpha
    dd = np.abs(np.diff(d))
    idx = n[:-1] if side == 1 else n[1:]
    sums["diag"] = float(np.sum(w * dd))
    tails["diag"] = float(np.sum((w * dd)[side * idx > start]))
    nn = n[1:-1]
    off = np.abs(bg.a(nn) * vals[1:-1, 2:].diagonal() - bg.a(nn - 1) * vals[:-2, 1:-1].diagonal())
    wo = np.abs(nn).astype(float) ** alpha
    sums["offdiag"] = float(np.sum(wo * off))
    tails["offdiag"] = float(np.sum((wo * off)[side * nn > start]))
    if red is not None:
        s = np.arange(2 * F.lo, 2 * F.hi + 1)
        r = red
        diff = np.abs(r[2:] - r[:-2])
        ks = s[:-2] if side == 1 else s[2:]
        term = np.abs(ks) * diff
        sums["reduced"] = float(np.sum(term))
        tails["reduced"] = float(np.sum(term[side * ks > start]))
    converged = all(t < tol for t in tails.values())
    return DifferenceReport(converged, sums, tails, start)
