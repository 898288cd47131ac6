"""Forward map: coefficients -> Jost solutions -> scattering data.

The perturbed operator has coefficients equal to the ``+`` background on
sites/bonds n >= 0 and to the ``-`` background for n < 0, plus deviations on a
finite window [n_min, n_max] containing 0.  Jost solutions are seeded with
exact background Weyl values beyond the window on their own side and
continued by the three-term recurrence toward the other side; this is the
growth direction of the recessive solution and therefore stable.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .background import (
    LOWER,
    TOL_EDGE,
    TOL_QUAD,
    TOL_RESID,
    UPPER,
    Background,
    BandSet,
    ConstantBackground,
    Grid,
    _side,
    contour_integral,
    delta_factors,
    quadrature_grid,
    spectral_density,
    spectral_sets,
)

log = logging.getLogger(__name__)

TOL_ROOT = 1e-12


class InvalidCoefficients(ValueError):
    pass


class SpectralSingularity(RuntimeError):
    pass


class QuadratureError(RuntimeError):
    def __init__(self, msg, trace=()):
        super().__init__(msg)
        self.trace = list(trace)


# ---------------------------------------------------------------------------
# Coefficients
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Coefficients:
    """Perturbed Jacobi coefficients over two backgrounds.

    ``a_dev[i]`` and ``b_dev[i]`` are the deviations at site n_min + i from
    the background that owns that site (``+`` for n >= 0, ``-`` for n < 0).
    """

    bg_plus: Background
    bg_minus: Background
    n_min: int = 0
    n_max: int = 0
    a_dev: tuple = (0.0,)
    b_dev: tuple = (0.0,)

    def __post_init__(self):
        if not self.n_min <= 0 <= self.n_max:
            raise InvalidCoefficients("window must contain site 0")
        width = self.n_max - self.n_min + 1
        a_dev = tuple(float(x) for x in self.a_dev)
        b_dev = tuple(float(x) for x in self.b_dev)
        if len(a_dev) != width or len(b_dev) != width:
            raise InvalidCoefficients(f"deviations must have length {width}")
        object.__setattr__(self, "a_dev", a_dev)
        object.__setattr__(self, "b_dev", b_dev)
        a = self.a(np.arange(self.n_min, self.n_max + 1))
        if np.any(a <= 0):
            bad = int(np.arange(self.n_min, self.n_max + 1)[np.argmin(a)])
            raise InvalidCoefficients(f"a({bad}) = {a.min()} is not positive")

    @classmethod
    def from_sites(cls, bg_plus, bg_minus=None, a_dev=None, b_dev=None, window=None):
        """Build from ``{site: deviation}`` maps; the window defaults to their span."""
        bg_minus = bg_plus if bg_minus is None else bg_minus
        a_dev = {int(k): float(v) for k, v in (a_dev or {}).items()}
        b_dev = {int(k): float(v) for k, v in (b_dev or {}).items()}
        sites = list(a_dev) + list(b_dev) + [0]
        n_min, n_max = window if window is not None else (min(sites), max(sites))
        n_min, n_max = min(n_min, 0), max(n_max, 0)
        rng = range(n_min, n_max + 1)
        return cls(bg_plus, bg_minus, n_min, n_max,
                   tuple(a_dev.get(n, 0.0) for n in rng), tuple(b_dev.get(n, 0.0) for n in rng))

    @property
    def steplike(self) -> bool:
        return self.bg_plus != self.bg_minus

    def _dev(self, n, dev):
        n = np.asarray(n)
        i = n - self.n_min
        inside = (i >= 0) & (i < len(dev))
        arr = np.asarray(dev)
        return np.where(inside, arr[np.clip(i, 0, len(dev) - 1)], 0.0)

    def a_background(self, n):
        n = np.asarray(n)
        return np.where(n >= 0, self.bg_plus.a(n), self.bg_minus.a(n))

    def b_background(self, n):
        n = np.asarray(n)
        return np.where(n >= 0, self.bg_plus.b(n), self.bg_minus.b(n))

    def a(self, n):
        return self.a_background(n) + self._dev(n, self.a_dev)

    def b(self, n):
        return self.b_background(n) + self._dev(n, self.b_dev)

    def norm_bound(self) -> float:
        """max|b| + 2 max a + 1 over window and both backgrounds."""
        n = np.arange(self.n_min - 2, self.n_max + 3)
        bmax = max(np.max(np.abs(self.b(n))), np.max(np.abs(self.bg_plus.b_seq)), np.max(np.abs(self.bg_minus.b_seq)))
        amax = max(np.max(self.a(n)), np.max(self.bg_plus.a_seq), np.max(self.bg_minus.a_seq))
        return float(bmax + 2 * amax + 1)

    def deviation(self, side: int) -> dict:
        """Site -> |a(n) - a^side(n)| + |b(n) - b^side(n)| over the window."""
        bg = self.bg_plus if _side(side) == 1 else self.bg_minus
        n = np.arange(self.n_min - 1, self.n_max + 2)
        d = np.abs(self.a(n) - bg.a(n)) + np.abs(self.b(n) - bg.b(n))
        return {int(k): float(v) for k, v in zip(n, d)}

    def to_dict(self) -> dict:
        return {
            "window": [self.n_min, self.n_max],
            "a_dev": list(self.a_dev),
            "b_dev": list(self.b_dev),
        }


def free_operator(a: float = 0.5, b: float = 0.0) -> Coefficients:
    bg = ConstantBackground(a, b)
    return Coefficients(bg, bg)


# ---------------------------------------------------------------------------
# Jost solutions and Wronskians
# ---------------------------------------------------------------------------

@dataclass
class JostSolution:
    side: int
    lam: np.ndarray
    sites: np.ndarray
    values: np.ndarray  # shape lam.shape + (len(sites),), scaled by exp(-log_scale)
    rim: str = UPPER
    log_scale: Optional[np.ndarray] = None
    z_asym: Optional[np.ndarray] = None

    @property
    def rescaled(self) -> bool:
        return self.log_scale is not None and bool(np.any(self.log_scale != 0))

    def at(self, n):
        """Values at site(s) n (true values, scale restored)."""
        i = np.asarray(n) - self.sites[0]
        v = self.values[..., i]
        if self.rescaled:
            ls = self.log_scale.reshape(self.log_scale.shape + (1,) * np.ndim(i))
            v = v * np.exp(ls)
        return v


_OVERFLOW = 1e250


def jost(coeffs: Coefficients, side, lam, lo: int, hi: int, rim: str = UPPER) -> JostSolution:
    """Jost solution phi_side(lam, n) for n in [lo, hi].

    phi_+ equals psi^+ for n > n_max and phi_- equals psi^- for n < n_min.
    """
    side = _side(side)
    lam = np.asarray(lam, dtype=complex)
    scalar = lam.ndim == 0
    lam1 = np.atleast_1d(lam)
    if side == 1:
        top = coeffs.n_max + 1
        start = min(lo, top)
        stop = max(hi, top + 1)
    else:
        top = coeffs.n_min - 1
        start = min(lo, top - 1)
        stop = max(hi, top)
    sites = np.arange(start, stop + 1)
    vals = np.empty(lam1.shape + (len(sites),), dtype=complex)
    log_scale = np.zeros(lam1.shape)
    bg = coeffs.bg_plus if side == 1 else coeffs.bg_minus
    if side == 1:
        own = sites >= top
        vals[:, own] = bg.weyl(lam1, sites[own], 1, rim)
        for i in range(np.searchsorted(sites, top) - 1, -1, -1):
            n = sites[i] + 1  # recurrence at site n gives phi(n - 1)
            an, anm1, bn = coeffs.a(n), coeffs.a(n - 1), coeffs.b(n)
            vals[:, i] = ((lam1 - bn) * vals[:, i + 1] - an * vals[:, i + 2]) / anm1
            big = np.abs(vals[:, i]) > _OVERFLOW
            if np.any(big):
                s = np.abs(vals[big, i])
                vals[big] /= s[:, None]
                log_scale[big] += np.log(s)
    else:
        own = sites <= top
        vals[:, own] = bg.weyl(lam1, sites[own], -1, rim)
        for i in range(np.searchsorted(sites, top) + 1, len(sites)):
            n = sites[i] - 1  # recurrence at site n gives phi(n + 1)
            an, anm1, bn = coeffs.a(n), coeffs.a(n - 1), coeffs.b(n)
            vals[:, i] = ((lam1 - bn) * vals[:, i - 1] - anm1 * vals[:, i - 2]) / an
            big = np.abs(vals[:, i]) > _OVERFLOW
            if np.any(big):
                s = np.abs(vals[big, i])
                vals[big] /= s[:, None]
                log_scale[big] += np.log(s)
    if not np.all(np.isfinite(vals[np.isfinite(lam1)])):
        log.debug("non-finite Jost values (pole of the background Weyl solution?)")
    keep = (sites >= lo) & (sites <= hi)
    z = None
    if isinstance(bg, ConstantBackground):
        from .background import joukowski
        z = joukowski(bg, lam1, rim)
    sol = JostSolution(side, lam1, sites[keep], vals[:, keep], rim,
                       log_scale if np.any(log_scale) else None, z)
    if scalar:
        sol.lam = lam
        sol.values = sol.values[0]
        sol.log_scale = None if sol.log_scale is None else sol.log_scale[0]
        sol.z_asym = None if z is None else z[0]
    if sol.rescaled:
        log.warning("Jost solution rescaled to avoid overflow (|lambda| large)")
    return sol


def recurrence_residual(coeffs: Coefficients, sol: JostSolution) -> float:
    """max_n |(H - lam) phi(n)| / max(1, |phi(n)|) over interior sites."""
    n = sol.sites[1:-1]
    v = sol.at(sol.sites)
    lam = np.asarray(sol.lam)[..., None]
    r = coeffs.a(n - 1) * v[..., :-2] + coeffs.b(n) * v[..., 1:-1] + coeffs.a(n) * v[..., 2:] - lam * v[..., 1:-1]
    return float(np.max(np.abs(r) / np.maximum(1.0, np.abs(v[..., 1:-1]))))


def _wr(coeffs, f, g, n):
    """a(n) (f(n) g(n+1) - f(n+1) g(n)) for value arrays indexed by site."""
    return coeffs.a(n) * (f(n) * g(n + 1) - f(n + 1) * g(n))


def wronskian_profile(coeffs: Coefficients, phi_minus: JostSolution, phi_plus: JostSolution):
    """Wronskian at every site of the common range; shape lam.shape + (sites,)."""
    lo = max(phi_minus.sites[0], phi_plus.sites[0])
    hi = min(phi_minus.sites[-1], phi_plus.sites[-1])
    if hi - lo < 1:
        raise ValueError("Jost solutions overlap on fewer than 2 sites")
    n = np.arange(lo, hi)
    return n, _wr(coeffs, phi_minus.at, phi_plus.at, n)


def wronskian(coeffs: Coefficients, phi_minus: JostSolution, phi_plus: JostSolution, n_ref: int = 0,
              check: bool = True, tol_resid: float = TOL_RESID):
    """W = a(n)(phi_-(n) phi_+(n+1) - phi_-(n+1) phi_+(n)) at ``n_ref``.

    With ``check`` the value is compared against every other site of the
    overlap and a warning is logged when it drifts by more than
    tol_resid * max(1, |W|).
    """
    n, prof = wronskian_profile(coeffs, phi_minus, phi_plus)
    i = int(np.clip(n_ref, n[0], n[-1]) - n[0])
    W = prof[..., i]
    if check:
        dev = np.max(np.abs(prof - W[..., None]) / np.maximum(1.0, np.abs(W))[..., None])
        if dev > tol_resid:
            log.warning("Wronskian varies along the lattice by %.3e (relative)", dev)
    return W


def wronskian_deviation(coeffs: Coefficients, phi_minus: JostSolution, phi_plus: JostSolution) -> float:
    """max_n |W_n - W_0| / max(1, |W_0|) over the overlap."""
    n, prof = wronskian_profile(coeffs, phi_minus, phi_plus)
    W = prof[..., int(np.clip(0, n[0], n[-1]) - n[0])]
    return float(np.max(np.abs(prof - W[..., None]) / np.maximum(1.0, np.abs(W))[..., None]))


def w1(coeffs: Coefficients, phi_minus: JostSolution, phi_plus: JostSolution):
    """a(0)(phi_-(0) conj(phi_+(1)) - phi_-(1) conj(phi_+(0))), defined on sigma_+."""
    lam = np.asarray(phi_plus.lam)
    spec = coeffs.bg_plus.spectrum()
    if np.any(lam.imag != 0) or not np.all(spec.contains(lam.real, 1e-14)):
        raise ValueError("W1 is only defined for lambda on the spectrum of H^+")
    return coeffs.a(0) * (phi_minus.at(0) * np.conj(phi_plus.at(1)) - phi_minus.at(1) * np.conj(phi_plus.at(0)))


def jost_pair(coeffs: Coefficients, lam, rim=UPPER, lo=None, hi=None):
    lo = coeffs.n_min - 2 if lo is None else lo
    hi = coeffs.n_max + 2 if hi is None else hi
    return jost(coeffs, -1, lam, lo, hi, rim), jost(coeffs, 1, lam, lo, hi, rim)


def wronskian_at(coeffs: Coefficients, lam, rim=UPPER, regularized=False):
    """W(lam) for an array of spectral parameters (optionally delta_+ delta_- W)."""
    pm, pp = jost_pair(coeffs, lam, rim, lo=-1, hi=2)
    W = wronskian(coeffs, pm, pp, 0)
    if regularized:
        dp, _ = delta_factors(coeffs.bg_plus.divisor(), lam, 1)
        dm, _ = delta_factors(coeffs.bg_minus.divisor(), lam, -1)
        W = W * dp * dm
    return W


# ---------------------------------------------------------------------------
# Scattering data
# ---------------------------------------------------------------------------

@dataclass
class ScatteringData:
    """Scattering data on upper-rim grids plus the discrete spectrum.

    Lower-rim values, when present, are kept in ``lower`` (keys ``R_plus``,
    ``T_plus``, ``R_minus``, ``T_minus``); otherwise they are the conjugates.
    """

    bg_plus: Background
    bg_minus: Background
    grid_plus: Grid
    grid_minus: Grid
    R_plus: np.ndarray
    T_plus: np.ndarray
    R_minus: np.ndarray
    T_minus: np.ndarray
    eigenvalues: np.ndarray
    gamma_plus: np.ndarray
    gamma_minus: np.ndarray
    q_declared: int = 2
    T_infinity: list = field(default_factory=list)
    lower: Optional[dict] = None
    flags: list = field(default_factory=list)

    @property
    def sets(self) -> dict:
        return spectral_sets(self.bg_plus.spectrum(), self.bg_minus.spectrum())

    def lower_values(self, key: str) -> np.ndarray:
        if self.lower is not None and key in self.lower:
            return self.lower[key]
        return np.conj(getattr(self, key))

    def copy(self, **changes) -> "ScatteringData":
        return replace(self, **changes)


def breakpoints(bg_plus: Background, bg_minus: Background) -> tuple:
    return tuple(sorted(set(bg_plus.spectrum().edges) | set(bg_minus.spectrum().edges)))


def make_grids(bg_plus: Background, bg_minus: Background, n_points: int = 512, extra=()):
    bp = tuple(sorted(set(breakpoints(bg_plus, bg_minus)) | set(extra)))
    return (quadrature_grid(bg_plus.spectrum(), n_points, bp),
            quadrature_grid(bg_minus.spectrum(), n_points, bp))


def scattering_matrix(coeffs: Coefficients, grid_plus: Grid, grid_minus: Grid, rim: str = UPPER,
                      tol_root: float = TOL_ROOT) -> dict:
    """R_+, T_+ on the sigma_+ grid and R_-, T_- on the sigma_- grid.

    T_s = 1 / (g_s W) and R_+ = -W(phi_-, conj phi_+) / W,
    R_- = -W(conj phi_-, phi_+) / W; both conjugate Wronskians are the
    Cramer-rule solution of the scattering relations at sites (0, 1).
    """
    out = {}
    for side, grid, bg in ((1, grid_plus, coeffs.bg_plus), (-1, grid_minus, coeffs.bg_minus)):
        if len(grid) == 0:
            out["R_plus" if side == 1 else "R_minus"] = np.zeros(0, complex)
            out["T_plus" if side == 1 else "T_minus"] = np.zeros(0, complex)
            continue
        pm, pp = jost_pair(coeffs, grid.lam, rim, lo=-1, hi=2)
        W = wronskian(coeffs, pm, pp, 0)
        small = np.abs(W) < tol_root
        if np.any(small):
            raise SpectralSingularity(f"|W| < {tol_root} at lambda = {grid.lam[small][:3]}")
        g = bg.green(grid.lam, rim)
        T = 1.0 / (g * W)
        if side == 1:
            Wc = _wr(coeffs, pm.at, lambda n: np.conj(pp.at(n)), 0)
            out["R_plus"], out["T_plus"] = -Wc / W, T
        else:
            Wc = _wr(coeffs, lambda n: np.conj(pm.at(n)), pp.at, 0)
            out["R_minus"], out["T_minus"] = -Wc / W, T
    return out


def reflection_by_linear_solve(coeffs: Coefficients, side, lam, n: int, rim=UPPER):
    """Solve T phi_other(k) - R phi_own(k) = conj(phi_own(k)), k = n, n+1.

    Independent route to (T_side, R_side) from the scattering relations.
    """
    side = _side(side)
    lo, hi = min(n, coeffs.n_min - 2), max(n + 1, coeffs.n_max + 2)
    pm, pp = jost_pair(coeffs, lam, rim, lo=lo, hi=hi)
    own, other = (pp, pm) if side == 1 else (pm, pp)
    A = np.array([[other.at(n), -own.at(n)], [other.at(n + 1), -own.at(n + 1)]])
    rhs = np.conj(np.array([own.at(n), own.at(n + 1)]))
    T, R = np.linalg.solve(A, rhs)
    return complex(T), complex(R)


def resonance_points(coeffs: Coefficients, n_scan: int = 4096, ratio: float = 1e-2) -> list:
    """Panel breakpoints around sharp interior minima of |W| on the continuous spectrum.

    A zero of W just off the real axis turns |T|^2 into a narrow Lorentzian
    of half-width eps = |W(x0)| / |W'|.  The centre x0 becomes a breakpoint,
    and so do x0 +- eps 10^k up to the panel scale, so that every decade of
    the peak gets its own cos-clustered panel.  Minima deeper than ``ratio``
    times the panel's median |W| qualify.
    """
    bp = breakpoints(coeffs.bg_plus, coeffs.bg_minus)
    sig = spectral_sets(coeffs.bg_plus.spectrum(), coeffs.bg_minus.spectrum())["sigma"]
    s = (np.arange(n_scan) + 0.5) / n_scan
    found = []

    def absW(x):
        return float(np.abs(wronskian_at(coeffs, np.array([complex(x)]), regularized=True))[0])

    for lo, hi in _split(sig, bp):
        xs = lo + (hi - lo) * 0.5 * (1 - np.cos(np.pi * s))
        w = np.abs(wronskian_at(coeffs, xs.astype(complex), regularized=True))
        med = float(np.median(w))
        for i in range(1, n_scan - 1):
            if not (w[i] <= w[i - 1] and w[i] < w[i + 1] and w[i] < ratio * med):
                continue
            r = minimize_scalar(absW, bounds=(xs[i - 1], xs[i + 1]), method="bounded", options={"xatol": 1e-15})
            x0 = float(r.x)
            found.append(x0)
            # half-width from the slope away from the centre
            d = 1e-4 * (hi - lo)
            slope = max(abs(absW(x0 + d) - absW(x0 - d)) / (2 * d), (absW(x0 + d) + absW(x0 - d)) / (2 * d))
            eps = absW(x0) / slope if slope > 0 else 0.0
            step = eps
            while 0 < step < 0.1 * (hi - lo):
                for x in (x0 - step, x0 + step):
                    if lo < x < hi:
                        found.append(x)
                step *= 10.0
    return sorted(set(found))


def _split(bands: BandSet, cuts) -> list:
    out = []
    for lo, hi in bands:
        pts = sorted({lo, hi} | {float(x) for x in cuts if lo < x < hi})
        out.extend(zip(pts[:-1], pts[1:]))
    return out


@dataclass
class EigenSearch:
    eigenvalues: list
    flagged: list


def search_eigenvalues(coeffs: Coefficients, n_scan: int = 4096, tol_root: float = TOL_ROOT,
                       tol_edge: float = TOL_EDGE) -> EigenSearch:
    """Sign changes of the regularized Wronskian on R minus sigma, refined by brentq."""
    sig = spectral_sets(coeffs.bg_plus.spectrum(), coeffs.bg_minus.spectrum())["sigma"]
    B = coeffs.norm_bound()
    lo_all, hi_all = min(-B, sig.lo - 1), max(B, sig.hi + 1)
    edges = set(sig.edges)

    def Wt(x):
        return float(np.real(wronskian_at(coeffs, np.asarray(x, dtype=complex), regularized=True)))

    found, flagged = [], []
    s = (np.arange(n_scan) + 0.5) / n_scan
    for glo, ghi in sig.gaps(lo_all, hi_all):
        xs = glo + (ghi - glo) * 0.5 * (1 - np.cos(np.pi * s))
        if glo not in edges:
            xs = np.concatenate([[glo], xs])
        if ghi not in edges:
            xs = np.concatenate([xs, [ghi]])
        vals = np.real(wronskian_at(coeffs, xs.astype(complex), regularized=True))
        for i in range(len(xs) - 1):
            f0, f1 = vals[i], vals[i + 1]
            if f0 == 0.0:
                found.append(float(xs[i]))
            elif f0 * f1 < 0:
                found.append(brentq(Wt, xs[i], xs[i + 1], xtol=tol_root, rtol=4 * np.finfo(float).eps, maxiter=200))
        dips = (np.abs(vals) < tol_root)
        for i in np.nonzero(dips)[0]:
            if not any(abs(xs[i] - f) < 1e-9 for f in found):
                flagged.append(float(xs[i]))
                log.warning("|W| dips below tol_root at %.16g without a sign change", xs[i])
    found = sorted(set(found))
    for lam in found:
        if any(abs(lam - e) <= tol_edge for e in edges):
            flagged.append(lam)
            log.warning("eigenvalue %.16g within tol_edge of a band edge", lam)
    return EigenSearch(found, flagged)


def find_eigenvalues(coeffs: Coefficients, n_scan: int = 4096, tol_root: float = TOL_ROOT) -> list:
    return search_eigenvalues(coeffs, n_scan, tol_root).eigenvalues


def _tail_sum(bg: Background, lam: float, start: int, direction: int) -> float:
    """sum_{k>=0} |psi(start + direction k)|^2 with psi the background Weyl solution decaying that way."""
    p = bg.period
    n = start + direction * np.arange(p)
    psi = bg.weyl(complex(lam), n, direction)
    rho, _ = bg.bloch(complex(lam), direction)
    r2 = abs(rho) ** 2 if direction == 1 else abs(1 / rho) ** 2
    if not r2 < 1:
        raise ArithmeticError(f"non-summable tail at lambda = {lam} (|rho| >= 1)")
    return float(np.sum(np.abs(psi) ** 2) / (1 - r2))


def norming_constants(coeffs: Coefficients, eigenvalues) -> tuple:
    """gamma_{+-,k}^{-1} = sum_n |delta_{+-}(lam_k) phi_{+-}(lam_k, n)|^2."""
    gp, gm = [], []
    lo, hi = coeffs.n_min - 2, coeffs.n_max + 2
    div_p, div_m = coeffs.bg_plus.divisor(), coeffs.bg_minus.divisor()
    for lam in eigenvalues:
        lam = float(lam)
        for side, out in ((1, gp), (-1, gm)):
            sol = jost(coeffs, side, complex(lam), lo, hi)
            v = np.real(sol.at(np.arange(lo, hi + 1)))
            if side == 1:
                # right of the window: psi^+; left of the window: c psi^-
                core = np.sum(v[1:-1] ** 2)  # sites lo+1 .. hi-1
                right = _tail_sum(coeffs.bg_plus, lam, hi, 1)
                ref = np.real(coeffs.bg_minus.weyl(complex(lam), np.array([lo, lo + 1]), -1))
                c = float(np.dot(v[:2], ref) / np.dot(ref, ref))
                left = c ** 2 * _tail_sum(coeffs.bg_minus, lam, lo, -1)
                total = core + right + left
                delta = np.real(delta_factors(div_p, lam, 1)[0])
            else:
                core = np.sum(v[1:-1] ** 2)
                left = _tail_sum(coeffs.bg_minus, lam, lo, -1)
                ref = np.real(coeffs.bg_plus.weyl(complex(lam), np.array([hi - 1, hi]), 1))
                c = float(np.dot(v[-2:], ref) / np.dot(ref, ref))
                right = c ** 2 * _tail_sum(coeffs.bg_plus, lam, hi, 1)
                total = core + right + left
                delta = np.real(delta_factors(div_m, lam, -1)[0])
            out.append(1.0 / (delta ** 2 * total))
    return np.array(gp), np.array(gm)


def wronskian_derivative(coeffs: Coefficients, lam: float, h0: Optional[float] = None, levels: int = 5) -> float:
    """d/dlam of the regularized Wronskian by Richardson-extrapolated central differences."""
    if h0 is None:
        sig = spectral_sets(coeffs.bg_plus.spectrum(), coeffs.bg_minus.spectrum())["sigma"]
        dist = min(abs(lam - e) for e in sig.edges)
        h0 = min(1e-2, 0.25 * dist)

    def W(x):
        return float(np.real(wronskian_at(coeffs, complex(x), regularized=True)))

    table = []
    h = h0
    for i in range(levels):
        table.append([(W(lam + h) - W(lam - h)) / (2 * h)])
        h /= 2
    for j in range(1, levels):
        for i in range(j, levels):
            f = 4 ** j
            table[i].append((f * table[i][j - 1] - table[i - 1][j - 1]) / (f - 1))
    return table[-1][-1]


# ---------------------------------------------------------------------------
# Transformation operators
# ---------------------------------------------------------------------------

def transformation_kernel_matrix(coeffs: Coefficients, side, ns, ms, n_points: int = 512,
                                 refine: bool = True, tol_quad: float = TOL_QUAD) -> np.ndarray:
    """K_side(n, m) = two-rim integral of phi_side(n) conj(psi^side(m)) d omega_side."""
    side = _side(side)
    ns, ms = np.asarray(ns), np.asarray(ms)
    bg = coeffs.bg_plus if side == 1 else coeffs.bg_minus
    bp = breakpoints(coeffs.bg_plus, coeffs.bg_minus)

    def compute(npts):
        grid = quadrature_grid(bg.spectrum(), npts, bp)
        lo, hi = int(min(ns.min(), coeffs.n_min - 2)), int(max(ns.max(), coeffs.n_max + 2))
        phi = jost(coeffs, side, grid.lam, lo, hi).at(ns)  # (K, len(ns))
        psi = bg.weyl(grid.lam, ms, side)  # (K, len(ms))
        gu = bg.green(grid.lam)
        c = grid.weight * gu
        X = np.einsum("k,ki,kj->ij", c, phi, np.conj(psi))
        # lower rim contributes the conjugate: (X - conj X) / (2 pi i) = Im X / pi
        return np.imag(X) / np.pi

    K = compute(n_points)
    if refine:
        K2 = compute(2 * n_points)
        diff = float(np.max(np.abs(K2 - K)))
        if diff > tol_quad:
            raise QuadratureError(f"transformation kernel quadrature not converged ({diff:.3e})",
                                  [(n_points, 0.0), (2 * n_points, diff)])
        K = K2
    tri = (side * ms[None, :]) < (side * ns[:, None])
    K[tri] = 0.0
    return K


def transformation_kernel(coeffs: Coefficients, side, n: int, m: int, n_points: int = 512) -> float:
    side = _side(side)
    if side * m < side * n:
        return 0.0
    return float(transformation_kernel_matrix(coeffs, side, [n], [m], n_points)[0, 0])


# ---------------------------------------------------------------------------
# Full forward pipeline
# ---------------------------------------------------------------------------

def transmission_at_infinity(coeffs: Coefficients) -> list:
    """(Lambda, T_+, T_-) at Lambda = 1e3 (1 + B) and 10 Lambda."""
    B = coeffs.norm_bound()
    out = []
    for L in (1e3 * (1 + B), 1e4 * (1 + B)):
        W = wronskian_at(coeffs, complex(L))
        tp = 1.0 / (coeffs.bg_plus.green(complex(L)) * W)
        tm = 1.0 / (coeffs.bg_minus.green(complex(L)) * W)
        out.append((float(L), float(np.real(tp)), float(np.real(tm))))
    return out


MAX_GRID_POINTS = 8192
PROBE_RANGE = 170  # kernel indices 0..PROBE_RANGE cover the GLM solves near the origin


def kernel_resolution(S_coarse: "ScatteringData", S_fine: "ScatteringData", span: int = PROBE_RANGE) -> float:
    """Change of the Marchenko kernels F_+-(n, m), 0 <= +-n, +-m <= span, between two grids.

    The change is measured relative to ``max(1, max|F|)`` of the finer kernel, so
    kernels of order one are compared absolutely while the large kernels produced
    by narrow transmission resonances are compared at the precision to which
    ``|T|^2`` can be evaluated near a near-real zero of the Wronskian.
    """
    from .marchenko import build_kernel

    diff = 0.0
    for side, lo, hi in ((1, 0, span), (-1, -span, 0)):
        a = build_kernel(S_coarse, side, lo, hi, tol_quad=np.inf)
        b = build_kernel(S_fine, side, lo, hi, tol_quad=np.inf)
        scale = max(1.0, float(np.max(np.abs(b.values))))
        diff = max(diff, float(np.max(np.abs(a.values - b.values))) / scale)
    return diff


def forward(coeffs: Coefficients, n_points: int = 512, q: int = 2, both_rims: bool = True,
            n_scan: int = 4096, tol_quad: float = TOL_QUAD, refine: bool = True,
            max_points: int = MAX_GRID_POINTS) -> ScatteringData:
    """Compute the full scattering data of ``coeffs``.

    With ``refine`` the grid is doubled until the Marchenko kernels built
    from the data change by less than ``tol_quad`` (relative to the kernel scale
    when it exceeds one) under one more doubling;
    the coarsest grid passing that test is returned.  A grid above
    ``max_points`` raises :class:`QuadratureError` with the refinement trace.
    """
    search = search_eigenvalues(coeffs, n_scan)
    ev = np.array(search.eigenvalues, dtype=float)
    gam_p, gam_m = norming_constants(coeffs, ev)
    flags = [f"eigenvalue near edge or unresolved dip: {x!r}" for x in search.flagged]
    sets = spectral_sets(coeffs.bg_plus.spectrum(), coeffs.bg_minus.spectrum())
    if not sets["sigma2"]:
        flags.append("sigma2 empty")
    t_inf = transmission_at_infinity(coeffs)
    extra = resonance_points(coeffs, n_scan) if refine else []
    if extra:
        flags.append(f"{len(extra)} resonance breakpoints between {extra[0]!r} and {extra[-1]!r}")

    def assemble(npts):
        gp, gm = make_grids(coeffs.bg_plus, coeffs.bg_minus, npts, extra)
        sm = scattering_matrix(coeffs, gp, gm, UPPER)
        lower = scattering_matrix(coeffs, gp, gm, LOWER) if both_rims else None
        return ScatteringData(coeffs.bg_plus, coeffs.bg_minus, gp, gm,
                              sm["R_plus"], sm["T_plus"], sm["R_minus"], sm["T_minus"],
                              ev, gam_p, gam_m, int(q), t_inf, lower, list(flags))

    S = assemble(n_points)
    if not refine:
        return S
    npts, trace = n_points, []
    while True:
        if 2 * npts > max_points:
            raise QuadratureError(f"kernel quadrature not converged below {max_points} points per panel", trace)
        S2 = assemble(2 * npts)
        diff = kernel_resolution(S, S2)
        trace.append((npts, diff))
        if diff <= tol_quad:
            break
        log.info("grid of %d points per panel under-resolved (kernel change %.2e); refining", npts, diff)
        S, npts = S2, 2 * npts
    if npts != n_points:
        S.flags.append(f"grid refined to {npts} points per panel")
    return S
