"""Limiting (background) Jacobi operators: constant and periodic.

A background is described by its coefficient sequences a(n) > 0, b(n) on all
of Z.  Everything downstream works with three derived objects:

- the band spectrum (a :class:`BandSet`),
- the Weyl/Bloch solutions psi(lambda, n), normalized by psi(lambda, 0) = 1
  and square summable on the requested half-axis,
- the diagonal Green function g(lambda) = G(lambda; 0, 0).

Boundary values on a band are taken from the upper half-plane
(``rim="upper"``) or the lower half-plane (``rim="lower"``).  The branch is
fixed by the single rule ``Im g(lambda + i0) > 0``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.special import roots_legendre

log = logging.getLogger(__name__)

TOL_RESID = 1e-10
TOL_QUAD = 1e-8
TOL_EDGE = 1e-12

UPPER = "upper"
LOWER = "lower"


class BandEdgeError(ValueError):
    """Raised when a quantity is requested exactly at a band edge."""


class EdgeSearchError(RuntimeError):
    """Band-edge root finding failed; carries the bracketing interval."""

    def __init__(self, msg, bracket):
        super().__init__(f"{msg} (bracket {bracket})")
        self.bracket = bracket


# ---------------------------------------------------------------------------
# Band sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BandSet:
    """Finite union of closed intervals, sorted and with disjoint interiors."""

    bands: tuple = ()

    def __post_init__(self):
        bands = tuple((float(lo), float(hi)) for lo, hi in self.bands)
        for lo, hi in bands:
            if not lo < hi:
                raise ValueError(f"degenerate band [{lo}, {hi}]")
        for (_, hi0), (lo1, _) in zip(bands, bands[1:]):
            if lo1 < hi0:
                raise ValueError("bands must be sorted with disjoint interiors")
        object.__setattr__(self, "bands", bands)

    @classmethod
    def from_intervals(cls, intervals: Iterable) -> "BandSet":
        """Sort and merge overlapping or touching intervals; drop points."""
        ivs = sorted((float(lo), float(hi)) for lo, hi in intervals if hi > lo)
        merged: list[list[float]] = []
        for lo, hi in ivs:
            if merged and lo <= merged[-1][1]:
                merged[-1][1] = max(merged[-1][1], hi)
            else:
                merged.append([lo, hi])
        return cls(tuple(tuple(m) for m in merged))

    def __iter__(self):
        return iter(self.bands)

    def __len__(self):
        return len(self.bands)

    def __bool__(self):
        return bool(self.bands)

    @property
    def edges(self) -> tuple:
        return tuple(sorted({e for band in self.bands for e in band}))

    @property
    def lo(self) -> float:
        return self.bands[0][0]

    @property
    def hi(self) -> float:
        return self.bands[-1][1]

    def contains(self, lam, tol: float = 0.0):
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(lam.shape, dtype=bool)
        for lo, hi in self.bands:
            out |= (lam >= lo - tol) & (lam <= hi + tol)
        return out

    def interior_contains(self, lam, tol: float = 0.0):
        lam = np.asarray(lam, dtype=float)
        out = np.zeros(lam.shape, dtype=bool)
        for lo, hi in self.bands:
            out |= (lam > lo + tol) & (lam < hi - tol)
        return out

    def union(self, other: "BandSet") -> "BandSet":
        return BandSet.from_intervals(list(self.bands) + list(other.bands))

    def intersection(self, other: "BandSet") -> "BandSet":
        out = []
        for lo0, hi0 in self.bands:
            for lo1, hi1 in other.bands:
                lo, hi = max(lo0, lo1), min(hi0, hi1)
                if hi > lo:
                    out.append((lo, hi))
        return BandSet.from_intervals(out)

    def difference_closure(self, other: "BandSet") -> "BandSet":
        """clos(self minus other)."""
        out = []
        for lo, hi in self.bands:
            pieces = [(lo, hi)]
            for olo, ohi in other.bands:
                nxt = []
                for plo, phi in pieces:
                    if ohi <= plo or olo >= phi:
                        nxt.append((plo, phi))
                        continue
                    if olo > plo:
                        nxt.append((plo, olo))
                    if ohi < phi:
                        nxt.append((ohi, phi))
                pieces = nxt
            out.extend(pieces)
        return BandSet.from_intervals(out)

    def gaps(self, lo: float, hi: float) -> list:
        """Open intervals of [lo, hi] not covered by the bands."""
        out = []
        cur = lo
        for blo, bhi in self.bands:
            if blo > cur:
                out.append((cur, min(blo, hi)))
            cur = max(cur, bhi)
            if cur >= hi:
                break
        if cur < hi:
            out.append((cur, hi))
        return [(a, b) for a, b in out if b > a]

    def to_list(self) -> list:
        return [list(b) for b in self.bands]


def spectral_sets(sigma_plus: BandSet, sigma_minus: BandSet) -> dict:
    """Set algebra for the absolutely continuous spectrum of a steplike operator.

    Returns ``sigma`` (union), ``sigma2`` (multiplicity two), ``sigma1_plus``
    and ``sigma1_minus`` (multiplicity one), and ``virtual_levels``: the edges
    of ``sigma`` together with common edges of the two one-sided parts.
    """
    sigma = sigma_plus.union(sigma_minus)
    sigma2 = sigma_plus.intersection(sigma_minus)
    s1p = sigma_plus.difference_closure(sigma2)
    s1m = sigma_minus.difference_closure(sigma2)
    sv = set(sigma.edges) | (set(s1p.edges) & set(s1m.edges))
    return {
        "sigma": sigma,
        "sigma2": sigma2,
        "sigma1_plus": s1p,
        "sigma1_minus": s1m,
        "virtual_levels": tuple(sorted(sv)),
    }


# ---------------------------------------------------------------------------
# Spectral points, Weyl divisor, delta factors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpectralPoint:
    lam: float
    rim: str = UPPER


@dataclass(frozen=True)
class DivisorEntry:
    mu: float
    sheet: int  # +1: pole on the branch decaying at +inf, -1: at -inf, 0: none
    at_edge: bool
    pole_ratio: float = float("nan")
    flagged: bool = False


@dataclass(frozen=True)
class WeylDivisor:
    entries: tuple = ()

    def M(self, side: int) -> tuple:
        """Interior mu_j where the Weyl solution of the given side has a pole."""
        return tuple(e.mu for e in self.entries if not e.at_edge and e.sheet == side)

    @property
    def M_hat(self) -> tuple:
        return tuple(e.mu for e in self.entries if e.at_edge)


def delta_factors(div: WeylDivisor, lam, side: int = 1):
    """(delta, delta_hat) for the Weyl solution of the given side.

    delta = prod_{mu in M}(lam - mu); delta_hat additionally carries
    sqrt(lam - mu) for every mu at a band edge (standard branch).
    """
    lam = np.asarray(lam, dtype=complex)
    delta = np.ones_like(lam)
    for mu in div.M(side):
        delta = delta * (lam - mu)
    delta_hat = delta.copy()
    for mu in div.M_hat:
        delta_hat = delta_hat * np.sqrt(lam - mu)
    if delta.ndim == 0:
        return complex(delta), complex(delta_hat)
    return delta, delta_hat


# ---------------------------------------------------------------------------
# Backgrounds
# ---------------------------------------------------------------------------

def _side(side) -> int:
    if side in (1, "+", "plus"):
        return 1
    if side in (-1, "-", "minus"):
        return -1
    raise ValueError(f"side must be '+' or '-', got {side!r}")


def _select_multiplier(disc_half, m21, lam, rim, disc_sq_minus_one=None):
    """Pick the Floquet multiplier decaying toward +inf.

    ``disc_half`` is Delta = tr(M)/2 with det(M) = 1.  Off the bands the
    multiplier of modulus < 1 is returned.  On a band (real lam, |Delta| <= 1)
    both have modulus one and the rim rule Im g(lam^u) > 0 selects
    sign(Im rho) = -sign(m21) on the upper rim.  ``disc_sq_minus_one``, when
    given, replaces Delta^2 - 1; a factored form keeps full relative accuracy
    next to band edges, where the difference itself cancels.
    """
    d = disc_half
    if disc_sq_minus_one is None:
        root = np.sqrt(d - 1) * np.sqrt(d + 1)
        one_minus_d2 = 1 - np.real(d) ** 2
    else:
        root = np.sqrt(np.asarray(disc_sq_minus_one, dtype=complex))
        one_minus_d2 = -np.real(disc_sq_minus_one)
    r1, r2 = d + root, d - root
    big = np.where(np.abs(r1) >= np.abs(r2), r1, r2)
    small = 1.0 / big
    on_band = (np.imag(lam) == 0) & (np.abs(np.real(d)) <= 1)
    if np.any(on_band):
        s = np.sqrt(np.clip(one_minus_d2, 0.0, None))
        sign = -np.sign(np.real(m21))
        sign = np.where(sign == 0, -1.0, sign)
        if rim == LOWER:
            sign = -sign
        on = np.real(d) + 1j * sign * s
        small = np.where(on_band, on, small)
    return small


class Background:
    """Common interface of constant and periodic backgrounds."""

    period: int

    # coefficient access --------------------------------------------------
    @property
    def a_seq(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def b_seq(self) -> np.ndarray:
        raise NotImplementedError

    def a(self, n):
        return self.a_seq[np.mod(np.asarray(n), self.period)]

    def b(self, n):
        return self.b_seq[np.mod(np.asarray(n), self.period)]

    def gershgorin(self) -> tuple:
        bbar = float(np.mean(self.b_seq))
        rad = float(np.max(np.abs(self.b_seq - bbar)) + 2 * np.max(self.a_seq))
        return bbar - rad, bbar + rad

    # spectral data ---------------------------------------------------------
    def spectrum(self) -> BandSet:
        raise NotImplementedError

    def divisor(self) -> WeylDivisor:
        raise NotImplementedError

    def bloch(self, lam, side=1, rim=UPPER):
        """Floquet multiplier and one period of the normalized Bloch solution.

        Returns ``(rho, u)`` with ``rho`` of shape ``lam.shape`` and ``u`` of
        shape ``lam.shape + (period,)`` so that psi(n + k p) = rho**k u[n].
        """
        raise NotImplementedError

    def weyl(self, lam, n, side=1, rim=UPPER):
        """psi^side(lam, n) for arrays: result shape lam.shape + n.shape."""
        lam = np.asarray(lam, dtype=complex)
        n = np.asarray(n, dtype=int)
        rho, u = self.bloch(lam, side, rim)
        k, r = np.divmod(n, self.period)
        rho_b = rho.reshape(rho.shape + (1,) * n.ndim)
        return rho_b ** k * u[..., r]

    def green(self, lam, rim=UPPER):
        """Diagonal Green function g(lam) = 1 / (a(0) (psi^+(1) - psi^-(1)))."""
        lam = np.asarray(lam, dtype=complex)
        pp = self.weyl(lam, 1, 1, rim)
        pm = self.weyl(lam, 1, -1, rim)
        return 1.0 / (self.a_seq[0] * (pp - pm))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantBackground(Background):
    """H f(n) = a f(n+1) + a f(n-1) + b f(n); spectrum [b - 2a, b + 2a]."""

    a_const: float
    b_const: float = 0.0
    period: int = field(default=1, init=False)

    def __post_init__(self):
        if not self.a_const > 0:
            raise ValueError("constant background needs a > 0")

    @property
    def a_seq(self):
        return np.array([float(self.a_const)])

    @property
    def b_seq(self):
        return np.array([float(self.b_const)])

    def spectrum(self) -> BandSet:
        return BandSet(((self.b_const - 2 * self.a_const, self.b_const + 2 * self.a_const),))

    def divisor(self) -> WeylDivisor:
        return WeylDivisor()

    def bloch(self, lam, side=1, rim=UPPER):
        z = joukowski(self, lam, rim)
        rho = z if _side(side) == 1 else 1.0 / z
        return rho, np.ones(np.shape(rho) + (1,), dtype=complex)

    def weyl(self, lam, n, side=1, rim=UPPER):
        z = np.asarray(joukowski(self, lam, rim))
        n = np.asarray(n, dtype=int)
        zb = z.reshape(z.shape + (1,) * n.ndim)
        k = _side(side) * n
        if n.size <= 16:
            return zb ** k
        # long index ranges: exp(k log z) is far cheaper than complex integer
        # powers and loses only |k| eps in relative accuracy
        return np.exp(k * np.log(zb + 0j))

    def green(self, lam, rim=UPPER):
        z = joukowski(self, lam, rim)
        return 1.0 / (self.a_const * (z - 1.0 / z))

    def to_dict(self):
        return {"type": "constant", "a": float(self.a_const), "b": float(self.b_const)}


@dataclass(frozen=True)
class PeriodicBackground(Background):
    """Periodic Jacobi operator with a(n) = a_list[n mod p], b(n) = b_list[n mod p]."""

    a_list: tuple
    b_list: tuple
    tol_edge: float = TOL_EDGE
    n_scan: int = 2048

    def __post_init__(self):
        a = tuple(float(x) for x in self.a_list)
        b = tuple(float(x) for x in self.b_list)
        if len(a) != len(b) or not a:
            raise ValueError("a and b must have the same positive length")
        if min(a) <= 0:
            raise ValueError("periodic background needs all a > 0")
        object.__setattr__(self, "a_list", a)
        object.__setattr__(self, "b_list", b)

    @property
    def period(self) -> int:
        return len(self.a_list)

    @property
    def a_seq(self):
        return np.array(self.a_list)

    @property
    def b_seq(self):
        return np.array(self.b_list)

    def monodromy(self, lam):
        """Entries (m11, m12, m21, m22) of the one-period transfer matrix.

        M maps (u(1), u(0)) to (u(p+1), u(p)) for solutions of H u = lam u.
        """
        lam = np.asarray(lam, dtype=complex)
        p = self.period
        m11 = np.ones_like(lam)
        m12 = np.zeros_like(lam)
        m21 = np.zeros_like(lam)
        m22 = np.ones_like(lam)
        for n in range(1, p + 1):
            an, anm1, bn = self.a(n), self.a(n - 1), self.b(n)
            t11 = (lam - bn) / an
            t12 = -anm1 / an
            m11, m12, m21, m22 = (t11 * m11 + t12 * m21, t11 * m12 + t12 * m22, m11, m12)
        return m11, m12, m21, m22

    def discriminant(self, lam):
        m11, _, _, m22 = self.monodromy(lam)
        return 0.5 * (m11 + m22)

    def disc_sq_minus_one(self, lam):
        """Delta^2 - 1 as prod(lam - E_j) / (4 prod a^2) over the 2p band edges.

        Returns None when fewer than 2p edges are known (closed gaps), in which
        case callers fall back to forming Delta^2 - 1 directly.
        """
        edges = self.spectrum().edges
        if len(edges) != 2 * self.period:
            return None
        lam = np.asarray(lam, dtype=complex)
        out = np.full(lam.shape, 1.0 / (4.0 * np.prod(self.a_seq) ** 2), dtype=complex)
        for e in edges:
            out = out * (lam - e)
        return out

    def spectrum(self) -> BandSet:
        return _periodic_spectrum(self)

    def _compute_spectrum(self) -> BandSet:
        lo, hi = self.gershgorin()
        pad = 1e-9 * max(1.0, hi - lo)
        grid = np.linspace(lo - pad, hi + pad, self.n_scan)

        def f(x):
            return float(np.real(self.discriminant(x))) ** 2 - 1.0

        vals = np.array([f(x) for x in grid])
        edges = []
        for x0, x1, f0, f1 in zip(grid[:-1], grid[1:], vals[:-1], vals[1:]):
            if f0 == 0.0:
                edges.append(x0)
            elif f0 * f1 < 0:
                edges.append(_bisect(f, x0, x1, self.tol_edge))
        if vals[-1] == 0.0:
            edges.append(grid[-1])
        if len(edges) % 2:
            raise EdgeSearchError("odd number of band edges found", (lo, hi))
        bands = [(edges[i], edges[i + 1]) for i in range(0, len(edges), 2)]
        return BandSet.from_intervals(bands)

    def bloch(self, lam, side=1, rim=UPPER):
        lam = np.asarray(lam, dtype=complex)
        m11, m12, m21, m22 = self.monodromy(lam)
        small = _select_multiplier(0.5 * (m11 + m22), m21, lam, rim, self.disc_sq_minus_one(lam))
        rho = small if _side(side) == 1 else 1.0 / small
        d1 = m21
        d2 = rho - m11
        use1 = np.abs(d1) >= np.abs(d2)
        with np.errstate(divide="ignore", invalid="ignore"):
            u1 = np.where(use1, (rho - m22) / np.where(use1, d1, 1.0),
                          m12 / np.where(use1, 1.0, d2))
        p = self.period
        u = np.empty(lam.shape + (max(p, 2),), dtype=complex)
        u[..., 0] = 1.0
        u[..., 1] = u1
        for n in range(1, p - 1):
            u[..., n + 1] = ((lam - self.b(n)) * u[..., n] - self.a(n - 1) * u[..., n - 1]) / self.a(n)
        return rho, u[..., :p]

    def divisor(self) -> WeylDivisor:
        return _periodic_divisor(self)

    def to_dict(self):
        return {"type": "periodic", "a": list(self.a_list), "b": list(self.b_list)}


def _bisect(f, x0, x1, tol, maxit=200):
    """Bisection carried to full floating-point resolution.

    Quadrature nodes cluster within ~1e-11 of band edges, so edges are
    resolved to the last bit rather than to ``tol``; ``tol`` only bounds the
    accepted final bracket.
    """
    f0 = f(x0)
    for _ in range(maxit):
        xm = 0.5 * (x0 + x1)
        if xm == x0 or xm == x1:
            break
        fm = f(xm)
        if fm == 0.0:
            return xm
        if f0 * fm < 0:
            x1 = xm
        else:
            x0, f0 = xm, fm
    if x1 - x0 > tol:
        raise EdgeSearchError("bisection did not converge", (x0, x1))
    return x0 if abs(f(x0)) <= abs(f(x1)) else x1


@lru_cache(maxsize=64)
def _periodic_spectrum(bg: "PeriodicBackground") -> BandSet:
    return bg._compute_spectrum()


@lru_cache(maxsize=64)
def _periodic_divisor(bg: "PeriodicBackground") -> WeylDivisor:
    return weyl_divisor(bg)


def background_from_dict(d: dict) -> Background:
    kind = d.get("type")
    if kind == "constant":
        return ConstantBackground(float(d["a"]), float(d["b"]))
    if kind == "periodic":
        return PeriodicBackground(tuple(d["a"]), tuple(d["b"]))
    raise ValueError(f"unknown background type {kind!r}")


# ---------------------------------------------------------------------------
# Module-level operations
# ---------------------------------------------------------------------------

def spectrum(bg: Background) -> BandSet:
    return bg.spectrum()


def joukowski(bg: ConstantBackground, lam, rim=UPPER):
    """Root z of lam - b = a (z + 1/z) with |z| <= 1.

    On the band the upper rim corresponds to Im z < 0, which is what makes
    Im g(lam^u) > 0 for g = 1 / (a (z - 1/z)).
    """
    scalar = np.ndim(lam) == 0
    lam = np.asarray(lam, dtype=complex)
    w = (lam - bg.b_const) / (2 * bg.a_const)
    z = w - np.sqrt(w - 1) * np.sqrt(w + 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(np.abs(z) > 1, 1.0 / z, z)
    on_band = (lam.imag == 0) & (np.abs(w.real) <= 1)
    if np.any(on_band):
        # (1 - w)(1 + w) from the distances to the edges b +- 2a, exact near either edge
        lo, hi = bg.b_const - 2 * bg.a_const, bg.b_const + 2 * bg.a_const
        x = lam.real
        s = np.sqrt(np.clip((hi - x) * (x - lo), 0.0, None)) / (2 * bg.a_const)
        sign = -1.0 if rim == UPPER else 1.0
        z = np.where(on_band, w.real + 1j * sign * s, z)
    return complex(z) if scalar else z


def weyl_solution(bg: Background, lam, n, side=1, rim=UPPER):
    """psi^side(lam, n) normalized to 1 at n = 0."""
    scalar = np.ndim(lam) == 0 and np.ndim(n) == 0
    out = bg.weyl(lam, n, _side(side), rim)
    return complex(out) if scalar else out


def green_diagonal(bg: Background, lam, rim=UPPER):
    """Diagonal Green function of the background at (0, 0)."""
    scalar = np.ndim(lam) == 0
    lam_arr = np.asarray(lam, dtype=complex)
    if isinstance(bg, ConstantBackground):
        at_edge = (lam_arr.imag == 0) & np.isin(lam_arr.real, bg.spectrum().edges)
    else:
        at_edge = (lam_arr.imag == 0) & (np.abs(np.abs(np.real(bg.discriminant(lam_arr))) - 1) == 0)
    if np.any(at_edge):
        raise BandEdgeError("Green function is singular at a band edge")
    g = bg.green(lam_arr, rim)
    return complex(g) if scalar else g


def weyl_divisor(bg: Background, tol_edge: float = TOL_EDGE, probe: float = 1e-8) -> WeylDivisor:
    """Dirichlet data mu_j (zeros of m21 in the gap closures) and their sheets.

    At mu_j the monodromy is upper triangular, so the two multipliers are
    m11 and m22; the Bloch branch whose multiplier equals m11 has
    u(0) = 0, i.e. psi(., 1) has a pole on that branch.
    """
    if isinstance(bg, ConstantBackground) or bg.period == 1:
        return WeylDivisor()
    spec = bg.spectrum()
    lo, hi = bg.gershgorin()

    def m21(x):
        return float(np.real(bg.monodromy(x)[2]))

    # m21 is a polynomial of degree p-1 with real simple roots; the roots are
    # the Dirichlet eigenvalues of the period block on sites 1..p-1.
    blk = np.diag(bg.b_seq[1:bg.period]) + np.diag(bg.a_seq[1:bg.period - 1], 1) + np.diag(bg.a_seq[1:bg.period - 1], -1)
    guesses = np.linalg.eigvalsh(blk) if bg.period > 1 else []
    entries = []
    for g0 in guesses:
        # polish by bisection on a small bracket
        h = 1e-6 * max(1.0, hi - lo)
        a0, a1 = g0 - h, g0 + h
        while m21(a0) * m21(a1) > 0 and h < (hi - lo):
            h *= 4
            a0, a1 = g0 - h, g0 + h
        mu = _bisect(m21, a0, a1, tol_edge) if m21(a0) * m21(a1) < 0 else float(g0)
        at_edge = any(abs(mu - e) <= max(tol_edge, 1e-10) for e in spec.edges)
        if spec.interior_contains(mu) and not at_edge:
            flagged = True
            log.warning("Dirichlet eigenvalue %.16g lies inside a band", mu)
        else:
            flagged = False
        sheet = 0
        ratio = float("nan")
        if not at_edge:
            m11, _, _, m22 = bg.monodromy(mu)
            small = _select_multiplier(0.5 * (m11 + m22), m21(mu), np.asarray(mu, complex), UPPER)
            sheet = 1 if abs(small - m11) < abs(small - m22) else -1
            x = mu + probe
            pp = abs(bg.weyl(x, 1, 1))
            pm = abs(bg.weyl(x, 1, -1))
            ratio = float(pp / pm) if sheet == 1 else float(pm / pp)
            if not ratio > 1e6:
                flagged = True
        entries.append(DivisorEntry(float(mu), sheet, bool(at_edge), ratio, flagged))
    return WeylDivisor(tuple(entries))


# ---------------------------------------------------------------------------
# Quadrature on bands
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Upper-rim nodes on a set of bands with d(lambda) weights.

    Every panel [lo, hi] is mapped by lambda = lo + (hi - lo)(1 - cos(pi s))/2
    and integrated with Gauss-Legendre in s.  The map has vanishing
    derivative at both panel ends, which absorbs inverse square root
    singularities of the spectral density and square-root kinks of the
    integrands at panel ends.
    """

    lam: np.ndarray
    weight: np.ndarray
    panel: np.ndarray
    panels: tuple

    def __len__(self):
        return len(self.lam)

    def points(self):
        return [(SpectralPoint(float(x), UPPER), float(w)) for x, w in zip(self.lam, self.weight)]

    def mask_in(self, bands: BandSet) -> np.ndarray:
        """Nodes whose panel lies inside the given band set."""
        mids = np.array([0.5 * (lo + hi) for lo, hi in self.panels])
        inside = bands.contains(mids) if len(mids) else np.zeros(0, bool)
        return inside[self.panel] if len(self.panel) else np.zeros(0, bool)


def _panels(bands: BandSet, breakpoints: Sequence[float]) -> list:
    out = []
    for lo, hi in bands:
        cuts = sorted({lo, hi} | {float(x) for x in breakpoints if lo < x < hi})
        out.extend(zip(cuts[:-1], cuts[1:]))
    return out


@lru_cache(maxsize=16)
def _gauss_legendre(n: int):
    t, w = roots_legendre(n)
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def quadrature_grid(bands: BandSet, n_points: int = 512, breakpoints: Sequence[float] = ()) -> Grid:
    """Nodes and d(lambda) weights, ``n_points`` per panel.

    Panels are the bands split at every breakpoint lying strictly inside.
    """
    if n_points < 8:
        raise ValueError("need at least 8 nodes per band")
    t, wt = _gauss_legendre(n_points)
    ws = 0.5 * wt
    # distance in s to the nearer panel end, computed without cancellation
    near = 0.5 * (1.0 - np.abs(t))
    upper_half = t > 0
    lam, weight, panel = [], [], []
    panels = _panels(bands, breakpoints)
    for i, (lo, hi) in enumerate(panels):
        L = hi - lo
        # 1 - cos(pi s) = 2 sin^2(pi s / 2); measure the offset from the nearer end
        h = L * np.sin(0.5 * np.pi * near) ** 2
        x = np.where(upper_half, hi - h, lo + h)
        lam.append(x)
        weight.append(ws * 0.5 * L * np.pi * np.sin(np.pi * near))
        panel.append(np.full(n_points, i))
    if not panels:
        return Grid(np.zeros(0), np.zeros(0), np.zeros(0, int), ())
    return Grid(np.concatenate(lam), np.concatenate(weight), np.concatenate(panel), tuple(panels))


def contour_integral(bg: Background, grid: Grid, values_upper, values_lower=None):
    """Approximate the two-rim integral of f against d omega = g d lambda / (2 pi i).

    ``values_upper`` holds f(lambda^u) with the node axis first.  If the
    lower-rim values are not given they are taken as the conjugates, which is
    the symmetry of every integrand used here.  Returns a complex array; its
    imaginary part is a quadrature/symmetry residue.
    """
    vu = np.asarray(values_upper)
    gu = bg.green(grid.lam, UPPER)
    shape = (-1,) + (1,) * (vu.ndim - 1)
    w = grid.weight.reshape(shape)
    if values_lower is None:
        xu = vu * gu.reshape(shape)
        return np.sum(w * np.imag(xu), axis=0) / np.pi + 0j
    gl = bg.green(grid.lam, LOWER)
    xu = vu * gu.reshape(shape)
    xl = np.asarray(values_lower) * gl.reshape(shape)
    return np.sum(w * (xu - xl), axis=0) / (2j * np.pi)


def spectral_density(bg: Background, lam, rim=UPPER):
    """Density of d omega on one rim: g(lambda^u) / (2 pi i), real and positive."""
    return np.real(bg.green(lam, rim) / (2j * np.pi))


def orthogonality_residual(bg: Background, n_points: int = 512, radius: int = 5, side: int = 1) -> float:
    """max |contour integral of psi(m) conj psi(n) d omega - delta(n, m)| over |m|, |n| <= radius."""
    grid = quadrature_grid(bg.spectrum(), n_points)
    lam = grid.lam.astype(complex)
    n = np.arange(-radius, radius + 1)
    pu = np.array([bg.weyl(lam, k, side, UPPER) for k in n]).T
    pl = np.array([bg.weyl(lam, k, side, LOWER) for k in n]).T
    gram = contour_integral(bg, grid, pu[:, :, None] * np.conj(pu[:, None, :]),
                            pl[:, :, None] * np.conj(pl[:, None, :]))
    return float(np.max(np.abs(gram - np.eye(len(n)))))
