"""Periodic grids, discrete Fourier transforms and quadrature.

The torus [-L, L)^n stands in for R^n. Fields are sampled at
x_j = -L + j h with h = 2L/N and transformed with the symmetric
(2 pi)^{-n/2} convention, so that

    u_hat(xi) ~ (2 pi)^{-n/2} * int exp(-i xi.x) u(x) dx

at the lattice frequencies xi = (pi/L) z + offset. A nonzero ``offset``
shifts the whole frequency lattice; a field on such a grid is stored as
its full physical values exp(i offset.x) * (periodic part).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

__all__ = [
    "GridSpec",
    "SpectralField",
    "ParameterError",
    "UsageError",
    "SUPPORT_TAIL_TOL",
    "GUARD_TOL",
    "forward_transform",
    "inverse_transform",
    "integrate",
    "inner",
    "make_test_function",
    "plane_wave",
    "constant_field",
    "support_tail",
    "check_support",
    "smoothstep7",
]

# relative amplitude allowed outside the nominal support set
SUPPORT_TAIL_TOL = 1e-2
# relative amplitude allowed in the outer quarter of the torus
GUARD_TOL = 1e-14


class ParameterError(ValueError):
    """Inputs violate a documented precondition."""


class UsageError(TypeError):
    """Field passed in the wrong representation."""


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid [-L, L)^n with N points per axis.

    ``offset`` shifts the frequency lattice to (pi/L) z + offset.
    """

    n: int = 3
    N: int = 64
    L: float = 4.0
    R: float = 1.0
    offset: tuple = field(default=None)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ParameterError(f"n must be an integer >= 2, got {self.n}")
        if int(self.N) != self.N or self.N < 8 or self.N % 2:
            raise ParameterError(f"N must be an even integer >= 8, got {self.N}")
        if not self.R > 0:
            raise ParameterError(f"R must be positive, got {self.R}")
        if self.L < 4 * self.R:
            raise ParameterError(f"need L >= 4R, got L={self.L}, R={self.R}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "N", int(self.N))
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "R", float(self.R))
        off = self.offset
        if off is None:
            off = (0.0,) * self.n
        off = tuple(float(a) for a in np.broadcast_to(np.asarray(off, float), (self.n,)))
        object.__setattr__(self, "offset", off)

    @property
    def h(self) -> float:
        return 2 * self.L / self.N

    @property
    def shape(self) -> tuple:
        return (self.N,) * self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    @property
    def freq_cell(self) -> float:
        return (np.pi / self.L) ** self.n

    @property
    def dk(self) -> float:
        return np.pi / self.L

    @property
    def shifted(self) -> bool:
        return any(a != 0.0 for a in self.offset)

    def with_offset(self, offset) -> "GridSpec":
        return GridSpec(self.n, self.N, self.L, self.R, offset)

    def unshifted(self) -> "GridSpec":
        return self.with_offset(None)

    def axis(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.N)

    def coord(self, j: int) -> np.ndarray:
        """Coordinate x_j as an array broadcastable to ``shape``."""
        return _coords(self.n, self.N, self.L)[j]

    def coords(self) -> tuple:
        return _coords(self.n, self.N, self.L)

    def radius(self) -> np.ndarray:
        return _radius(self.n, self.N, self.L)

    def freq(self, j: int) -> np.ndarray:
        """Lattice frequency xi_j (offset included), broadcastable."""
        return _freqs(self)[j]

    def freqs(self) -> tuple:
        return _freqs(self)

    def xi_squared(self) -> np.ndarray:
        return _xi_sq(self)

    def frequency_vectors(self) -> np.ndarray:
        """Full array of lattice frequencies, shape ``shape + (n,)``."""
        return np.stack(np.broadcast_arrays(*_freqs(self)), axis=-1)

    def dsym(self, j: int) -> np.ndarray:
        """Multiplier of d/dx_j: i xi_j, with the unpaired Nyquist mode
        zeroed on unshifted axes so real fields stay real."""
        return _dsyms(self)[j]

    def laplacian_symbol(self) -> np.ndarray:
        """Multiplier of the Laplacian, consistent with ``dsym``."""
        return _lap(self)

    def index_of(self, xi, atol: float = 1e-9) -> tuple:
        """Array index of a lattice frequency; ParameterError if off-lattice."""
        xi = np.asarray(xi, dtype=float).reshape(self.n)
        z = (xi - np.asarray(self.offset)) / self.dk
        zr = np.rint(z)
        if np.max(np.abs(z - zr)) > atol:
            raise ParameterError(f"frequency {xi.tolist()} is not on the lattice")
        if np.any(zr < -self.N // 2) or np.any(zr >= self.N // 2):
            raise ParameterError(f"frequency {xi.tolist()} outside the lattice range")
        return tuple(int(a) % self.N for a in zr)


@lru_cache(maxsize=64)
def _coords(n, N, L):
    x = -L + (2 * L / N) * np.arange(N)
    out = []
    for j in range(n):
        s = [1] * n
        s[j] = N
        out.append(x.reshape(s))
    return tuple(out)


@lru_cache(maxsize=16)
def _radius(n, N, L):
    r2 = sum(c ** 2 for c in _coords(n, N, L))
    return np.sqrt(r2)


@lru_cache(maxsize=64)
def _zint(n, N):
    z = np.fft.fftfreq(N, d=1.0 / N)
    out = []
    for j in range(n):
        s = [1] * n
        s[j] = N
        out.append(z.reshape(s))
    return tuple(out)


@lru_cache(maxsize=128)
def _freqs(grid: GridSpec):
    z = _zint(grid.n, grid.N)
    return tuple(grid.dk * z[j] + grid.offset[j] for j in range(grid.n))


@lru_cache(maxsize=128)
def _xi_sq(grid: GridSpec):
    return sum(np.broadcast_to(x, grid.shape) ** 2 for x in _freqs(grid))


@lru_cache(maxsize=128)
def _dsyms(grid: GridSpec):
    out = []
    nyq = -grid.N // 2
    for j, xi in enumerate(_freqs(grid)):
        d = 1j * xi
        if grid.offset[j] == 0.0:
            d = np.where(_zint(grid.n, grid.N)[j] == nyq, 0.0, d)
        out.append(d)
    return tuple(out)


@lru_cache(maxsize=128)
def _lap(grid: GridSpec):
    return np.real(sum(np.broadcast_to(d, grid.shape) ** 2 for d in _dsyms(grid)))


@lru_cache(maxsize=64)
def _phase(grid: GridSpec):
    # exp(i xi_z L) = (-1)^z per axis, times the continuum normalization
    z = _zint(grid.n, grid.N)
    sign = np.ones(grid.shape)
    for zj in z:
        sign = sign * np.where(zj % 2 == 0, 1.0, -1.0)
    return sign * grid.h ** grid.n / (2 * np.pi) ** (grid.n / 2)


@lru_cache(maxsize=64)
def _demod(grid: GridSpec):
    """exp(-i offset.x) on the grid, or None when unshifted."""
    if not grid.shifted:
        return None
    ph = sum(a * x for a, x in zip(grid.offset, grid.coords()))
    return np.exp(-1j * np.broadcast_to(ph, grid.shape))


def fftn(a):
    return sfft.fftn(a)


def ifftn(a):
    return sfft.ifftn(a)


def to_periodic(grid: GridSpec, values):
    """Strip the offset phase from physical values."""
    d = _demod(grid)
    return values if d is None else values * d


def from_periodic(grid: GridSpec, values):
    d = _demod(grid)
    return values if d is None else values * np.conj(d)


def apply_symbol(grid: GridSpec, values, symbol):
    """Physical -> physical application of a lattice multiplier."""
    w = to_periodic(grid, values)
    return from_periodic(grid, ifftn(symbol * fftn(w)))


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Complex field on a grid, tagged physical or spectral.

    Spectral values are the normalized coefficients u_hat(xi) in FFT
    index order.
    """

    grid: GridSpec
    values: np.ndarray
    representation: str = "physical"

    def __post_init__(self):
        if self.representation not in ("physical", "spectral"):
            raise UsageError(f"unknown representation {self.representation!r}")
        v = np.asarray(self.values)
        if v.shape != self.grid.shape:
            raise ParameterError(f"values of shape {v.shape} do not match grid {self.grid.shape}")
        v = v.astype(complex, copy=True)
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def is_physical(self) -> bool:
        return self.representation == "physical"

    def physical(self) -> "SpectralField":
        return self if self.is_physical else inverse_transform(self)

    def spectral(self) -> "SpectralField":
        return forward_transform(self) if self.is_physical else self

    def pvalues(self) -> np.ndarray:
        return self.physical().values

    def svalues(self) -> np.ndarray:
        return self.spectral().values

    def l2norm(self) -> float:
        f = self.physical()
        return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * self.grid.cell_volume))

    def _other(self, other):
        if isinstance(other, SpectralField):
            if other.grid != self.grid:
                raise ParameterError("fields live on different grids")
            return other.pvalues()
        return other

    def __add__(self, other):
        return SpectralField(self.grid, self.pvalues() + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return SpectralField(self.grid, self.pvalues() - self._other(other))

    def __neg__(self):
        return SpectralField(self.grid, -self.values, self.representation)

    def __mul__(self, other):
        if isinstance(other, SpectralField):
            return multiply(self, other)
        if np.isscalar(other):
            return SpectralField(self.grid, self.values * other, self.representation)
        return SpectralField(self.grid, self.pvalues() * other)

    __rmul__ = __mul__


def multiply(f: SpectralField, g: SpectralField) -> SpectralField:
    """Pointwise product; frequency offsets add."""
    a, b = f.grid, g.grid
    if a.unshifted() != b.unshifted():
        raise ParameterError("fields live on incompatible grids")
    off = tuple(x + y for x, y in zip(a.offset, b.offset))
    return SpectralField(a.with_offset(off), f.pvalues() * g.pvalues())


def _require(f: SpectralField, rep: str):
    if not isinstance(f, SpectralField):
        raise UsageError(f"expected a SpectralField, got {type(f).__name__}")
    if f.representation != rep:
        raise UsageError(f"expected {rep} representation, got {f.representation}")


def forward_transform(f: SpectralField) -> SpectralField:
    """Physical values -> normalized lattice coefficients."""
    _require(f, "physical")
    g = f.grid
    coef = fftn(to_periodic(g, f.values)) * _phase(g)
    return SpectralField(g, coef, "spectral")


def inverse_transform(f: SpectralField) -> SpectralField:
    _require(f, "spectral")
    g = f.grid
    vals = from_periodic(g, ifftn(f.values / _phase(g)))
    return SpectralField(g, vals, "physical")


def integrate(f: SpectralField) -> complex:
    """Cell-volume weighted sum (trapezoid rule on the torus)."""
    _require(f, "physical")
    return complex(np.sum(f.values) * f.grid.cell_volume)


def inner(f: SpectralField, g: SpectralField) -> complex:
    """Sesquilinear L2 product int f conj(g), computed in either representation."""
    if f.grid != g.grid:
        raise ParameterError("fields live on different grids")
    if f.is_physical and g.is_physical:
        return complex(np.vdot(g.values, f.values) * f.grid.cell_volume)
    a, b = f.svalues(), g.svalues()
    return complex(np.vdot(b, a) * f.grid.freq_cell)


def constant_field(grid: GridSpec, c: complex = 1.0) -> SpectralField:
    return SpectralField(grid, np.full(grid.shape, c, dtype=complex))


def plane_wave(grid: GridSpec, xi, sign: int = 1) -> SpectralField:
    """exp(sign * i xi.x) sampled on the grid."""
    xi = np.asarray(xi, dtype=float).reshape(grid.n)
    ph = sum(a * x for a, x in zip(xi, grid.coords()))
    return SpectralField(grid, np.exp(sign * 1j * np.broadcast_to(ph, grid.shape)))


def smoothstep7(t):
    """C^3 polynomial step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    return np.clip(t ** 4 * (35 - 84 * t + 70 * t ** 2 - 20 * t ** 3), 0.0, 1.0)


# -- support scans ---------------------------------------------------------

def _outside(grid: GridSpec, region: str, radius: float):
    if region == "slab":
        return np.broadcast_to(np.abs(grid.coord(grid.n - 1)) > radius, grid.shape)
    if region == "ball":
        return grid.radius() > radius
    raise ParameterError(f"unknown support region {region!r}")


def _guard_mask(grid: GridSpec, region: str):
    edge = 0.75 * grid.L
    if region == "slab":
        return np.broadcast_to(np.abs(grid.coord(grid.n - 1)) >= edge, grid.shape)
    m = np.zeros(grid.shape, bool)
    for c in grid.coords():
        m = m | (np.abs(c) >= edge)
    return m


def support_tail(f: SpectralField, region: str = "slab", radius: float | None = None) -> dict:
    """Relative amplitudes outside the support set and in the guard layer."""
    g = f.grid
    radius = g.R if radius is None else radius
    a = np.abs(f.pvalues())
    peak = float(a.max())
    if peak == 0.0:
        return {"peak": 0.0, "tail": 0.0, "guard": 0.0}
    out = _outside(g, region, radius)
    tail = float(a[out].max()) / peak if out.any() else 0.0
    gm = _guard_mask(g, region)
    guard = float(a[gm].max()) / peak if gm.any() else 0.0
    return {"peak": peak, "tail": tail, "guard": guard}


def check_support(f: SpectralField, region: str = "slab", radius: float | None = None,
                  tail_tol: float = SUPPORT_TAIL_TOL, guard_tol: float = GUARD_TOL) -> dict:
    """Raise ParameterError unless f is numerically supported in the region."""
    s = support_tail(f, region, radius)
    if s["tail"] > tail_tol:
        raise ParameterError(
            f"support violation: relative tail {s['tail']:.3e} outside the {region} "
            f"exceeds {tail_tol:.1e}")
    if s["guard"] > guard_tol:
        raise ParameterError(
            f"support violation: relative amplitude {s['guard']:.3e} near the torus "
            f"boundary exceeds {guard_tol:.1e}")
    return s


# -- test functions --------------------------------------------------------

TEST_KINDS = ("gaussian-bump", "slab-bump", "random-bandlimited", "wave-packet")


def make_test_function(grid: GridSpec, kind: str = "gaussian-bump", params: dict | None = None,
                       seed: int | None = None, check: bool = True) -> SpectralField:
    """Smooth test field supported (numerically) in the slab |x_n| <= R.

    Kinds and their params (defaults in terms of R):

    gaussian-bump
        ``center`` (n-vector, 0), ``width`` (R/4), ``width_prime`` (width)
    slab-bump
        plateau ``half_width`` (R/5) with erf edges of scale ``edge`` (R/4)
        in x_n, times a Gaussian of width ``width_prime`` (L/8) in x'
    random-bandlimited
        Gaussian envelope of width ``width`` (0.22R) in x_n times a random
        trigonometric polynomial with modes |z_i| <= ``zmax`` (2)
    wave-packet
        exp(i offset'.x') * exp(i kappa x_n) * gaussian(x_n); the x' frequency
        is the grid offset. Params ``kappa`` (0), ``center`` (0), ``width`` (R/4)
    """
    params = dict(params or {})
    R, n = grid.R, grid.n
    xs = grid.coords()
    xn = xs[-1]
    if kind == "gaussian-bump":
        c = np.broadcast_to(np.asarray(params.get("center", 0.0), float), (n,))
        s = float(params.get("width", R / 4))
        sp = float(params.get("width_prime", s))
        e = (xn - c[-1]) ** 2 / (2 * s ** 2)
        for j in range(n - 1):
            e = e + (xs[j] - c[j]) ** 2 / (2 * sp ** 2)
        vals = np.exp(-np.broadcast_to(e, grid.shape))
    elif kind == "slab-bump":
        from scipy.special import erf

        a = float(params.get("half_width", R / 5))
        s = float(params.get("edge", R / 4))
        sp = float(params.get("width_prime", grid.L / 8))
        c = np.broadcast_to(np.asarray(params.get("center", 0.0), float), (n,))
        t = xn - c[-1]
        prof = 0.5 * (erf((t + a) / (np.sqrt(2) * s)) - erf((t - a) / (np.sqrt(2) * s)))
        e = 0.0
        for j in range(n - 1):
            e = e + (xs[j] - c[j]) ** 2 / (2 * sp ** 2)
        vals = np.broadcast_to(prof * np.exp(-e), grid.shape).astype(float)
    elif kind == "random-bandlimited":
        rng = np.random.default_rng(seed)
        s = float(params.get("width", 0.22 * R))
        zmax = int(params.get("zmax", 2))
        coef = np.zeros(grid.shape, complex)
        idx = tuple(np.r_[0:zmax + 1, grid.N - zmax:grid.N] for _ in range(n))
        sub = np.ix_(*idx)
        size = (2 * zmax + 1,) * n
        coef[sub] = rng.standard_normal(size) + 1j * rng.standard_normal(size)
        trig = ifftn(coef) * grid.N ** n
        vals = trig * np.exp(-xn ** 2 / (2 * s ** 2))
    elif kind == "wave-packet":
        kappa = float(params.get("kappa", 0.0))
        c = float(params.get("center", 0.0))
        s = float(params.get("width", R / 4))
        prof = np.exp(-(xn - c) ** 2 / (2 * s ** 2) + 1j * kappa * xn)
        ph = sum(a * x for a, x in zip(grid.offset[:-1], xs[:-1]))
        vals = np.broadcast_to(np.exp(1j * ph) * prof, grid.shape)
    else:
        raise ParameterError(f"unknown test function kind {kind!r}")
    f = SpectralField(grid, vals)
    if check:
        check_support(f, "slab", params.get("support_radius", R))
    return f


def laplacian(f: SpectralField) -> SpectralField:
    g = f.grid
    return SpectralField(g, apply_symbol(g, f.pvalues(), g.laplacian_symbol()))


def derivative(f: SpectralField, j: int) -> SpectralField:
    g = f.grid
    return SpectralField(g, apply_symbol(g, f.pvalues(), g.dsym(j)))


def gradient(f: SpectralField) -> tuple:
    return tuple(derivative(f, j) for j in range(f.grid.n))

