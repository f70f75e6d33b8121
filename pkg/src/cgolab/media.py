"""Conductivity models and the potential q as a bilinear form.

For gamma = exp(L) the potential q = gamma^{-1/2} Laplacian gamma^{1/2} is
used through the pairing

    <q u, v> = 1/4 int |grad L|^2 u v - 1/2 int grad L . grad(u v)

and, for the solver, through the strong form 1/4 |grad L|^2 + 1/2 Laplacian L.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .lattice import (
    SUPPORT_TAIL_TOL,
    GridSpec,
    ParameterError,
    SpectralField,
    apply_symbol,
    check_support,
    fftn,
    ifftn,
    multiply,
    plane_wave,
)
from .symbols import ZetaVector, x_weight

__all__ = [
    "ConductivityModel",
    "PotentialView",
    "ModelError",
    "MODEL_KINDS",
    "grad_log_gamma",
    "grad_log_gamma_exact",
    "q_bilinear",
    "q_pairing",
    "q_fourier",
    "q_lattice_coefficients",
    "q_norm_X",
    "modulus_of_continuity",
]

MODEL_KINDS = ("constant", "gaussian-log", "mollified-tent")


class ModelError(ParameterError):
    pass


def _bump_mollifier(grid: GridSpec, delta: float):
    """C-infinity bump of radius delta centred at the origin, unit mass, FFT index order."""
    r = grid.radius()
    t = np.clip(r / delta, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        rho = np.where(t < 1.0, np.exp(-1.0 / np.maximum(1.0 - t ** 2, 1e-300)), 0.0)
    rho = rho / (rho.sum() * grid.cell_volume)
    return np.fft.ifftshift(rho)


@dataclass(frozen=True, eq=False)
class ConductivityModel:
    """gamma = exp(2 g) with g a bump of amplitude epsilon.

    kinds
        constant        gamma = 1
        gaussian-log    g = epsilon exp(-|x - c|^2 / (2 sigma^2)), sigma default 0.3R
        mollified-tent  g = epsilon max(0, 1 - |x - c| / r0) mollified at scale delta;
                        delta defaults to 2h and r0 to R - delta
    """

    grid: GridSpec
    kind: str = "gaussian-log"
    epsilon: float = 0.1
    sigma: float | None = None
    center: tuple | None = None
    delta: float | None = None
    radius: float | None = None
    c0: float = field(init=False)
    A: float = field(init=False)

    def __post_init__(self):
        g = self.grid
        if g.shifted:
            raise ModelError("conductivity models live on the unshifted lattice")
        if self.kind not in MODEL_KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}")
        c = np.broadcast_to(np.asarray(0.0 if self.center is None else self.center, float), (g.n,))
        object.__setattr__(self, "center", tuple(c.tolist()))
        if self.kind == "gaussian-log" and self.sigma is None:
            object.__setattr__(self, "sigma", 0.3 * g.R)
        if self.kind == "mollified-tent":
            if self.delta is None:
                object.__setattr__(self, "delta", 2 * g.h)
            if self.radius is None:
                object.__setattr__(self, "radius", g.R - self.delta)
            if self.radius + self.delta + np.linalg.norm(c) > g.R + 1e-12:
                raise ModelError("tent support r0 + delta + |center| exceeds R")
        logg = self.log_gamma
        if not np.all(np.isfinite(logg)):
            raise ModelError("gamma must be positive and finite")
        gam = np.exp(logg)
        object.__setattr__(self, "c0", float(min(gam.min(), 1.0 / gam.max())))
        if self.kind != "constant":
            s = check_support(SpectralField(g, logg), "ball", g.R, SUPPORT_TAIL_TOL)
            self._meta["support"] = s
        sup = float(np.sqrt(sum(np.abs(d) ** 2 for d in self.grad_values)).max())
        self._meta["grad_sup"] = sup
        object.__setattr__(self, "A", 1.05 * max(sup, 1.0))

    @cached_property
    def _meta(self) -> dict:
        return {}

    def _shifted_coords(self):
        return [x - a for x, a in zip(self.grid.coords(), self.center)]

    @cached_property
    def log_gamma(self) -> np.ndarray:
        g = self.grid
        if self.kind == "constant":
            return np.zeros(g.shape)
        xs = self._shifted_coords()
        r2 = np.broadcast_to(sum(x ** 2 for x in xs), g.shape)
        if self.kind == "gaussian-log":
            return 2 * self.epsilon * np.exp(-r2 / (2 * self.sigma ** 2))
        tent = self.epsilon * np.maximum(0.0, 1.0 - np.sqrt(r2) / self.radius)
        rho = _bump_mollifier(g, self.delta)
        sm = np.real(ifftn(fftn(tent) * fftn(rho))) * g.cell_volume
        sm[np.abs(sm) < 1e-300] = 0.0
        return 2 * sm

    @property
    def gamma(self) -> np.ndarray:
        return np.exp(self.log_gamma)

    @cached_property
    def grad_values(self) -> tuple:
        g = self.grid
        L = self.log_gamma
        if self.kind == "constant":
            return tuple(np.zeros(g.shape) for _ in range(g.n))
        Lh = fftn(L)
        return tuple(np.real(ifftn(g.dsym(j) * Lh)) for j in range(g.n))

    @cached_property
    def potential(self) -> "PotentialView":
        return PotentialView(self)

    @property
    def grad_sup(self) -> float:
        return self._meta["grad_sup"]

    def describe(self) -> dict:
        d = {"kind": self.kind, "epsilon": self.epsilon, "center": list(self.center),
             "c0": self.c0, "A": self.A, "grad_sup": self.grad_sup}
        if self.kind == "gaussian-log":
            d["sigma"] = self.sigma
        if self.kind == "mollified-tent":
            d["delta"] = self.delta
            d["radius"] = self.radius
        return d


class PotentialView:
    """Strong-form q and lattice weak coefficients for one model."""

    def __init__(self, model: ConductivityModel):
        self.model = model
        self._modes: dict = {}

    @cached_property
    def strong_values(self) -> np.ndarray:
        m, g = self.model, self.model.grid
        if m.kind == "constant":
            return np.zeros(g.shape)
        gl = m.grad_values
        lap = sum(np.real(ifftn(g.dsym(j) * fftn(gl[j]))) for j in range(g.n))
        return 0.25 * sum(d ** 2 for d in gl) + 0.5 * lap

    @property
    def strong_q(self) -> SpectralField:
        return SpectralField(self.model.grid, self.strong_values)

    @cached_property
    def coefficients(self) -> np.ndarray:
        """<q, exp(-i xi.x)> for every lattice xi, from the bilinear form."""
        m, g = self.model, self.model.grid
        if m.kind == "constant":
            return np.zeros(g.shape, complex)
        gl = m.grad_values
        h = g.cell_volume
        sign = _sign(g)
        out = fftn(0.25 * sum(d ** 2 for d in gl))
        for j in range(g.n):
            # grad exp(-i xi.x) = -dsym_j exp(-i xi.x)
            out = out + 0.5 * g.dsym(j) * fftn(gl[j])
        return out * h * sign

    def mode(self, k) -> complex:
        key = tuple(np.round(np.asarray(k, float), 12).tolist())
        if key not in self._modes:
            self._modes.setdefault(key, _pairing_values(self.model, plane_wave(self.model.grid, k, -1)))
        return self._modes[key]


def _sign(g: GridSpec):
    z = np.fft.fftfreq(g.N, d=1.0 / g.N)
    s = np.where(z % 2 == 0, 1.0, -1.0)
    out = np.ones(g.shape)
    for j in range(g.n):
        sh = [1] * g.n
        sh[j] = g.N
        out = out * s.reshape(sh)
    return out


def grad_log_gamma(model: ConductivityModel) -> tuple:
    """Spectral gradient of log gamma."""
    return tuple(SpectralField(model.grid, d) for d in model.grad_values)


def grad_log_gamma_exact(model: ConductivityModel) -> tuple:
    """Closed-form gradient for the gaussian-log and constant kinds."""
    g = model.grid
    if model.kind == "constant":
        return tuple(SpectralField(g, np.zeros(g.shape)) for _ in range(g.n))
    if model.kind != "gaussian-log":
        raise ModelError("closed-form gradient only for gaussian-log models")
    xs = model._shifted_coords()
    L = model.log_gamma
    return tuple(SpectralField(g, -L * np.broadcast_to(x, g.shape) / model.sigma ** 2) for x in xs)


def _pairing_values(model: ConductivityModel, f: SpectralField) -> complex:
    """<q, f> for a single field f (possibly on a shifted lattice)."""
    if model.kind == "constant":
        return 0j
    g = f.grid
    if g.unshifted() != model.grid:
        raise ParameterError("field and model live on different grids")
    gl = model.grad_values
    fv = f.pvalues()
    lam = 0.25 * sum(d ** 2 for d in gl)
    total = np.sum(lam * fv)
    for j in range(g.n):
        total = total - 0.5 * np.sum(gl[j] * apply_symbol(g, fv, g.dsym(j)))
    return complex(total * g.cell_volume)


def q_pairing(model: ConductivityModel, f: SpectralField) -> complex:
    """<q, f> = 1/4 int |grad L|^2 f - 1/2 int grad L . grad f."""
    return _pairing_values(model, f)


def q_bilinear(model: ConductivityModel, u: SpectralField, v: SpectralField) -> complex:
    """<q u, v>; the product u v carries the sum of the two lattice offsets."""
    return _pairing_values(model, multiply(u, v))


def q_fourier(model: ConductivityModel, k) -> complex:
    """<q, exp(-i k.x)> for a lattice frequency k."""
    model.grid.index_of(k)
    return model.potential.mode(k)


def q_lattice_coefficients(model: ConductivityModel) -> np.ndarray:
    """Normalized coefficients q_hat = (2 pi)^{-n/2} <q, exp(-i xi.x)> on the lattice."""
    g = model.grid
    return model.potential.coefficients / (2 * np.pi) ** (g.n / 2)


def _norm_from_coeffs(grid: GridSpec, c, zeta: ZetaVector, b: float) -> float:
    w = x_weight(grid, zeta) ** (2 * b)
    return float(np.sqrt(np.sum(w * np.abs(c) ** 2) * grid.freq_cell))


def q_norm_X(model: ConductivityModel, zeta: ZetaVector, b: float = -0.5) -> float:
    """||q||_{X^b_zeta} from the lattice weak coefficients."""
    if model.kind == "constant":
        return 0.0
    return _norm_from_coeffs(model.grid, q_lattice_coefficients(model), zeta, b)


def q_difference_norm_X(m1: ConductivityModel, m2: ConductivityModel, zeta: ZetaVector,
                        b: float = -0.5) -> float:
    c = q_lattice_coefficients(m1) - q_lattice_coefficients(m2)
    return _norm_from_coeffs(m1.grid, c, zeta, b)


def sphere_directions(n: int, count: int) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors."""
    if n == 1:
        return np.array([[1.0]])
    if n == 2:
        t = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    # Fibonacci lattice on S^2, padded with zeros for n > 3
    i = np.arange(count) + 0.5
    z = 1 - 2 * i / count
    r = np.sqrt(1 - z ** 2)
    ph = np.pi * (1 + 5 ** 0.5) * i
    d = np.stack([r * np.cos(ph), r * np.sin(ph), z], axis=1)
    if n > 3:
        d = np.concatenate([d, np.zeros((count, n - 3))], axis=1)
    return d


def modulus_of_continuity(model: ConductivityModel, h: float, sample_count: int = 32) -> float:
    """max_y ||grad L - grad L(. - h y)||^2_{L2} over sampled unit y.

    The shift is a phase exp(-i h xi.y) on the coefficients.
    """
    g = model.grid
    if not 0 < h < g.L / 2:
        raise ParameterError(f"h must lie in (0, L/2), got {h}")
    if model.kind == "constant":
        return 0.0
    power = sum(np.abs(fftn(d)) ** 2 for d in model.grad_values)
    scale = g.cell_volume / g.N ** g.n
    best = 0.0
    for y in sphere_directions(g.n, sample_count):
        ph = sum(h * y[j] * g.freq(j) for j in range(g.n))
        val = float(np.sum(np.abs(1 - np.exp(-1j * ph)) ** 2 * power) * scale)
        best = max(best, val)
    return best
