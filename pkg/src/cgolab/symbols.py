"""Fourier symbols, weighted norms and the conjugated Laplacian.

Carleman weight phi(x) = tau x_n + M x_n^2 / 2, so phi' = tau + M x_n.
The conjugated operator exp(phi)(-Laplacian)(exp(-phi) u) splits as A + B with

    A = -Laplacian - phi'^2        (symmetric)
    B = phi' d_n + d_n phi'        (skew; equals 2 phi' d_n + M)

and [A, B] = -4M d_n^2 + 4M phi'^2. B is applied in the skew form so
that the discrete energy identity holds to rounding.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .lattice import (
    GUARD_TOL,
    GridSpec,
    ParameterError,
    SpectralField,
    apply_symbol,
    fftn,
    from_periodic,
    ifftn,
    support_tail,
    to_periodic,
)

__all__ = [
    "CarlemanParams",
    "ZetaVector",
    "RegimeError",
    "NumericError",
    "m_symbol",
    "m_squared",
    "p_symbol",
    "norm_Y",
    "norm_X",
    "x_weight",
    "apply_multiplier",
    "conjugated_laplacian",
    "A_op",
    "B_op",
    "commutator_AB",
    "commutator_closed_form",
    "m_inverse_sqrt_jet",
    "m_inverse_sqrt_d1",
    "m_inverse_sqrt_d2",
]


class RegimeError(ParameterError):
    """A parameter gate of the estimate is not satisfied."""

    def __init__(self, gate: str, detail: str = ""):
        self.gate = gate
        super().__init__(f"regime gate {gate} violated" + (f": {detail}" if detail else ""))


class NumericError(ArithmeticError):
    pass


@dataclass(frozen=True)
class CarlemanParams:
    """(tau, M, R) with the regime gates evaluated on construction.

    ``c`` is the caller's constant in the gate M > c R^2.
    """

    tau: float
    M: float
    R: float = 1.0
    c: float = 1.0

    def __post_init__(self):
        if not self.tau > 1:
            raise ParameterError(f"tau must exceed 1, got {self.tau}")
        if not self.M > 1:
            raise ParameterError(f"M must exceed 1, got {self.M}")
        # R = 1 is the working radius of every experiment, so R >= 1 is admitted
        if not self.R >= 1:
            raise ParameterError(f"R must be at least 1, got {self.R}")
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "M", float(self.M))
        object.__setattr__(self, "R", float(self.R))

    @property
    def gates(self) -> dict:
        t, M, R = self.tau, self.M, self.R
        return {
            "tau>2MR": t > 2 * M * R,
            "tau>8MR": t > 8 * M * R,
            "M>cR^2": M > self.c * R ** 2,
        }

    def require(self, *names: str):
        g = self.gates
        for name in names:
            if not g[name]:
                raise RegimeError(name, f"tau={self.tau:g}, M={self.M:g}, R={self.R:g}")
        return self

    def as_dict(self) -> dict:
        return {"tau": self.tau, "M": self.M, "R": self.R}


@dataclass(frozen=True)
class ZetaVector:
    """Complex frequency re + i im with zeta.zeta = 0."""

    re: tuple
    im: tuple
    tau: float | None = None

    def __post_init__(self):
        re = np.asarray(self.re, float).ravel()
        im = np.asarray(self.im, float).ravel()
        if re.shape != im.shape:
            raise ParameterError("re and im must have the same length")
        tau = float(np.linalg.norm(re)) if self.tau is None else float(self.tau)
        if not tau > 0:
            raise ParameterError("tau must be positive")
        scale = tau ** 2
        if abs(re @ im) > 1e-10 * scale:
            raise ParameterError(f"re.im = {re @ im:.3e} is not zero")
        if abs(np.linalg.norm(re) - tau) > 1e-10 * tau or abs(np.linalg.norm(im) - tau) > 1e-10 * tau:
            raise ParameterError("|re| and |im| must both equal tau")
        object.__setattr__(self, "re", tuple(re.tolist()))
        object.__setattr__(self, "im", tuple(im.tolist()))
        object.__setattr__(self, "tau", tau)

    @property
    def n(self) -> int:
        return len(self.re)

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.re) + 1j * np.asarray(self.im)

    @property
    def norm(self) -> float:
        """Euclidean norm of the complex vector, sqrt(2) tau."""
        return float(np.sqrt(np.sum(np.square(self.re)) + np.sum(np.square(self.im))))

    def self_dot(self) -> complex:
        z = self.vector
        return complex(z @ z)

    def dot_grid(self, grid: GridSpec):
        """zeta . xi over the lattice (complex array)."""
        return sum((a + 1j * b) * x for a, b, x in zip(self.re, self.im, grid.freqs()))


# -- symbols ---------------------------------------------------------------

def _m2(xi_sq, xi_n, p: CarlemanParams):
    t2 = p.tau ** 2
    return ((xi_sq - t2) ** 2 + t2 * xi_n ** 2) / p.M + p.M * t2


def m_squared(xi, p: CarlemanParams):
    xi = np.asarray(xi, float)
    return _m2(np.sum(xi ** 2, axis=-1), xi[..., -1], p)


def m_symbol(xi, p: CarlemanParams):
    """m(xi) = (M^-1 ||xi|^2 - tau^2|^2 + M^-1 tau^2 xi_n^2 + M tau^2)^(1/2).

    ``xi`` has the frequency components on its last axis.
    """
    return np.sqrt(m_squared(xi, p))


@lru_cache(maxsize=32)
def _m_grid(grid: GridSpec, p: CarlemanParams):
    return np.sqrt(_m2(grid.xi_squared(), np.broadcast_to(grid.freq(grid.n - 1), grid.shape), p))


def p_symbol(xi, zeta: ZetaVector):
    """p_zeta(xi) = |xi|^2 + 2i zeta.xi."""
    xi = np.asarray(xi, float)
    re, im = np.asarray(zeta.re), np.asarray(zeta.im)
    return np.sum(xi ** 2, axis=-1) - 2 * (xi @ im) + 2j * (xi @ re)


def _p_grid(grid: GridSpec, zeta: ZetaVector):
    return grid.xi_squared() + 2j * zeta.dot_grid(grid)


def x_weight(grid: GridSpec, zeta: ZetaVector):
    """|zeta| + |p_zeta(xi)| over the lattice."""
    return zeta.norm + np.abs(_p_grid(grid, zeta))


def _wnorm(u: SpectralField, weight2):
    c = u.svalues()
    return float(np.sqrt(np.sum(weight2 * np.abs(c) ** 2) * u.grid.freq_cell))


def norm_Y(u: SpectralField, s: float, p: CarlemanParams) -> float:
    """||m(D)^s u||_{L2}."""
    if s == 0:
        return u.l2norm()
    return _wnorm(u, _m_grid(u.grid, p) ** (2 * s))


def norm_X(u: SpectralField, b: float, zeta: ZetaVector) -> float:
    """(int (|zeta| + |p_zeta(xi)|)^{2b} |u_hat|^2 dxi)^(1/2)."""
    if b == 0:
        return u.l2norm()
    return _wnorm(u, x_weight(u.grid, zeta) ** (2 * b))


def apply_multiplier(u: SpectralField, w) -> SpectralField:
    """Multiply the coefficients of u by a symbol.

    ``w`` is an array over the lattice or a callable taking the frequency
    vectors (shape grid.shape + (n,)).
    """
    g = u.grid
    vals = w(g.frequency_vectors()) if callable(w) else np.asarray(w)
    vals = np.broadcast_to(vals, g.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        idx = tuple(int(i[0]) for i in np.nonzero(bad))
        raise NumericError(f"non-finite symbol value at xi = {g.frequency_vectors()[idx].tolist()}")
    c = u.svalues() * vals
    return SpectralField(g, c, "spectral")


def m_power(p: CarlemanParams, s: float) -> Callable:
    return lambda xi: m_symbol(xi, p) ** s


# -- conjugated Laplacian --------------------------------------------------

def _check_strip(u: SpectralField):
    s = support_tail(u, "slab")
    if s["guard"] > GUARD_TOL:
        raise ParameterError(
            f"support violation: relative amplitude {s['guard']:.3e} near x_n = +-L; the weight "
            "tau + M x_n is ambiguous there")


def dn_apply(grid: GridSpec, values, power: int = 1):
    """d/dx_n applied ``power`` times with 1-d transforms along the last axis."""
    j = grid.n - 1
    a = grid.offset[j]
    v = values
    if a:
        ph = np.exp(-1j * a * grid.coord(j))
        v = v * ph
    out = sfft.ifft(grid.dsym(j) ** power * sfft.fft(v, axis=-1), axis=-1)
    if a:
        out = out * np.conj(ph)
    return out


class _Ops:
    """Shared transforms for the A/B/commutator computations on one field."""

    def __init__(self, u: SpectralField, p: CarlemanParams, check: bool = True):
        if check:
            _check_strip(u)
        g = u.grid
        self.g, self.p = g, p
        self.u = u.pvalues()
        self.phi1 = p.tau + p.M * g.coord(g.n - 1)
        self._du = None

    def lap(self, v):
        g = self.g
        return from_periodic(g, ifftn(g.laplacian_symbol() * fftn(to_periodic(g, v))))

    def D(self, v):
        return dn_apply(self.g, v)

    @property
    def du(self):
        if self._du is None:
            self._du = self.D(self.u)
        return self._du

    def A(self, v=None):
        v = self.u if v is None else v
        return -self.lap(v) - self.phi1 ** 2 * v

    def B(self, v=None):
        if v is None:
            return self.phi1 * self.du + self.D(self.phi1 * self.u)
        return self.phi1 * self.D(v) + self.D(self.phi1 * v)

    def AB_comm(self):
        return -4 * self.p.M * dn_apply(self.g, self.u, 2) + 4 * self.p.M * self.phi1 ** 2 * self.u


def A_op(u: SpectralField, p: CarlemanParams, check: bool = True) -> SpectralField:
    return SpectralField(u.grid, _Ops(u, p, check).A())


def B_op(u: SpectralField, p: CarlemanParams, check: bool = True) -> SpectralField:
    return SpectralField(u.grid, _Ops(u, p, check).B())


def commutator_AB(u: SpectralField, p: CarlemanParams, check: bool = True) -> SpectralField:
    """[A, B]u = -4M d_n^2 u + 4M (tau + M x_n)^2 u."""
    return SpectralField(u.grid, _Ops(u, p, check).AB_comm())


def conjugated_laplacian(u: SpectralField, p: CarlemanParams, check: bool = True) -> SpectralField:
    """exp(phi)(-Laplacian)(exp(-phi) u), expanded algebraically as A u + B u."""
    o = _Ops(u, p, check)
    return SpectralField(u.grid, o.A() + o.B())


def carleman_parts(u: SpectralField, p: CarlemanParams, check: bool = True) -> dict:
    """A u, B u, [A,B] u and the conjugated operator, sharing one forward FFT."""
    o = _Ops(u, p, check)
    a, b = o.A(), o.B()
    return {"A": a, "B": b, "conj": a + b, "du": o.du, "ops": o}


def commutator_closed_form(u: SpectralField, p: CarlemanParams, check: bool = True) -> float:
    """4M ||d_n u||^2 + 4M ||(tau + M x_n) u||^2."""
    o = _Ops(u, p, check)
    return _closed(o)


def _closed(o: "_Ops") -> float:
    h = o.g.cell_volume
    return float(4 * o.p.M * h * (np.sum(np.abs(o.du) ** 2) + np.sum(np.abs(o.phi1 * o.u) ** 2)))


# -- derivatives of m^{-1/2} in xi_n ----------------------------------------

def _m2_poly(xp2, xn, p: CarlemanParams):
    """Taylor coefficients a_0..a_4 of t -> m^2(xi', xn + t)."""
    M, t2 = p.M, p.tau ** 2
    s = xp2 + xn ** 2 - t2
    a0 = (s ** 2 + t2 * xn ** 2) / M + M * t2
    a1 = (4 * s * xn + 2 * t2 * xn) / M
    a2 = (4 * xn ** 2 + 2 * s + t2) / M
    a3 = 4 * xn / M
    a4 = np.full_like(a0, 1.0 / M)
    return [a0, a1, a2, a3, a4]


def power_jet(a, alpha: float, k: int):
    """Taylor coefficients g_0..g_k of (sum_j a_j t^j)^alpha.

    Uses g' a = alpha a' g, i.e. k a_0 g_k = sum_j ((alpha+1) j - k) a_j g_{k-j}.
    """
    deg = len(a) - 1
    g = [a[0] ** alpha]
    for m in range(1, k + 1):
        acc = 0.0
        for j in range(1, min(m, deg) + 1):
            acc = acc + ((alpha + 1) * j - m) * a[j] * g[m - j]
        g.append(acc / (m * a[0]))
    return g


def _jet(xp2, xn, p: CarlemanParams, k: int):
    from math import factorial

    g = power_jet(_m2_poly(xp2, xn, p), -0.25, k)
    return np.stack([factorial(j) * g[j] for j in range(k + 1)])


def m_inverse_sqrt_jet(xi_prime, xi_n, p: CarlemanParams, k: int) -> np.ndarray:
    """Derivatives d^j/dxi_n^j m^{-1/2}, j = 0..k, by exact jet arithmetic.

    ``xi_prime`` is the (n-1)-vector of tangential frequencies; ``xi_n`` may
    be an array, in which case the result has shape (k+1,) + xi_n.shape.
    """
    if k > 16 or k < 0:
        raise ParameterError(f"jet order must be in [0, 16], got {k}")
    xp2 = float(np.sum(np.square(xi_prime)))
    xn = np.asarray(xi_n, float)
    return _jet(np.full_like(xn, xp2), xn, p, k)


def _dm2(xp2, xn, p):
    t2 = p.tau ** 2
    return (4 * (xp2 + xn ** 2 - t2) * xn + 2 * t2 * xn) / p.M


def _d2m2(xp2, xn, p):
    t2 = p.tau ** 2
    return (8 * xn ** 2 + 4 * (xp2 + xn ** 2 - t2) + 2 * t2) / p.M


def m_inverse_sqrt_d1(xp2, xn, p: CarlemanParams):
    """-1/4 m^{-1/2} (d m^2) / m^2."""
    m2 = _m2(xp2 + xn ** 2, xn, p)
    return -0.25 * m2 ** -0.25 * _dm2(xp2, xn, p) / m2


def m_inverse_sqrt_d2(xp2, xn, p: CarlemanParams):
    """5/16 m^{-1/2} (d m^2)^2 / m^4 - 1/4 m^{-1/2} (d^2 m^2) / m^2."""
    m2 = _m2(xp2 + xn ** 2, xn, p)
    r = m2 ** -0.25
    return 5 / 16 * r * _dm2(xp2, xn, p) ** 2 / m2 ** 2 - 0.25 * r * _d2m2(xp2, xn, p) / m2
