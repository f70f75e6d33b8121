"""CGO solutions v = exp(zeta.x)(1 + w) of (-Laplacian + q) v = 0.

The remainder solves (-Laplacian - 2 zeta.grad + q) w = -q. The constant
coefficient part has symbol |xi|^2 - 2i zeta.xi, which vanishes on a sphere
of radius tau in the hyperplane Re zeta . xi = 0. The integer lattice always
contains xi = 0 on that set, so solves run on a lattice shifted by half a
cell per axis (``lattice_shift``); w is stored as exp(i alpha.x) times a
periodic field.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .lattice import (
    GridSpec,
    ParameterError,
    SpectralField,
    fftn,
    ifftn,
    make_test_function,
    to_periodic,
    from_periodic,
)
from .media import ConductivityModel, q_bilinear, q_norm_X
from .symbols import ZetaVector, norm_X, x_weight

__all__ = [
    "ZetaPair",
    "CgoSolution",
    "CharacteristicCollision",
    "make_zeta_pair",
    "rotation_to_en",
    "faddeev_symbol",
    "faddeev_operator",
    "faddeev_apply",
    "min_symbol",
    "shifted_grid",
    "choose_tau",
    "solve_cgo",
    "verify_solution",
    "CgoSolver",
]


class CharacteristicCollision(ArithmeticError):
    def __init__(self, xi, value, floor):
        self.xi = list(map(float, xi))
        super().__init__(
            f"characteristic collision: |symbol| = {value:.3e} < {floor:.3e} at xi = {self.xi}; "
            "perturb tau")


@dataclass(frozen=True)
class ZetaPair:
    k: tuple
    tau: float
    eta: tuple
    theta: tuple
    zeta1: ZetaVector
    zeta2: ZetaVector


def _unit(v):
    v = np.asarray(v, float)
    return v / np.linalg.norm(v)


def _orthogonalize(v, basis):
    v = np.asarray(v, float).copy()
    for _ in range(2):
        for b in basis:
            v -= (v @ b) * b
    return v


def _pick(candidates, basis):
    best, bn = None, -1.0
    for c in candidates:
        r = _orthogonalize(c, basis)
        nr = np.linalg.norm(r)
        if nr > 0.5:
            return r / nr
        if nr > bn:
            best, bn = r, nr
    if bn < 1e-8:
        raise ParameterError("could not complete an orthonormal frame")
    return best / bn


def make_zeta_pair(k, tau: float, eta_seed=None) -> ZetaPair:
    """zeta_1 = tau eta + i(-k/2 + s theta), zeta_2 = -tau eta + i(-k/2 - s theta),
    s = (tau^2 - |k|^2/4)^(1/2), with eta, theta orthonormal and orthogonal to k.

    ``eta_seed`` is a vector orthogonalized against k, an integer seeding a
    random vector, or None (first basis vector e_2, ..., e_n, e_1 that fits).
    """
    k = np.asarray(k, float).ravel()
    n = k.size
    if n < 2:
        raise ParameterError("need n >= 2")
    kn = float(np.linalg.norm(k))
    if not tau > kn:
        raise ParameterError(f"need tau > |k|, got tau={tau}, |k|={kn}")
    if kn > 0 and n < 3:
        raise ParameterError("nonzero k needs n >= 3 (eta, theta must be orthogonal to k)")
    basis = [k / kn] if kn > 0 else []
    eye = np.eye(n)
    if eta_seed is None:
        eta = _pick([eye[j] for j in list(range(1, n)) + [0]], basis)
    elif isinstance(eta_seed, (int, np.integer)):
        v = np.random.default_rng(int(eta_seed)).standard_normal(n)
        eta = _pick([v] + [eye[j] for j in range(n)], basis)
    else:
        eta = _pick([np.asarray(eta_seed, float)] + [eye[j] for j in range(n)], basis)
    theta = _pick([eye[j] for j in [n - 1] + list(range(n - 1))], basis + [eta])
    return pair_from_frame(k, tau, eta, theta)


def pair_from_frame(k, tau, eta, theta) -> ZetaPair:
    k = np.asarray(k, float)
    s = np.sqrt(tau ** 2 - (k @ k) / 4)
    z1 = ZetaVector(tau * eta, -k / 2 + s * theta, tau)
    z2 = ZetaVector(-tau * eta, -k / 2 - s * theta, tau)
    return ZetaPair(tuple(k.tolist()), float(tau), tuple(eta.tolist()), tuple(theta.tolist()), z1, z2)


def rotation_to_en(re_zeta) -> np.ndarray:
    """Proper rotation T with T e_n = re_zeta / |re_zeta|, from two Householder reflections."""
    v = np.asarray(re_zeta, float).ravel()
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ParameterError("re_zeta must be nonzero")
    n = v.size
    a = v / nv
    e = np.zeros(n)
    e[-1] = 1.0

    def house(u):
        u = u / np.linalg.norm(u)
        return np.eye(n) - 2 * np.outer(u, u)

    # reflect e_n to a, then fix the determinant with a reflection that keeps a
    d = e - a
    if np.linalg.norm(d) < 1e-14:
        return np.eye(n)
    H1 = house(d)
    w = _pick([np.eye(n)[j] for j in range(n)], [a])
    H2 = house(w)
    return H2 @ H1


# -- constant coefficient operator -----------------------------------------

def faddeev_symbol(grid: GridSpec, zeta: ZetaVector) -> np.ndarray:
    """Symbol of -Laplacian - 2 zeta.grad on the grid's lattice: |xi|^2 - 2i zeta.xi."""
    dz = sum((a + 1j * b) * np.broadcast_to(d, grid.shape)
             for a, b, d in zip(zeta.re, zeta.im, (grid.dsym(j) for j in range(grid.n))))
    return -grid.laplacian_symbol() - 2 * dz


def min_symbol(grid: GridSpec, zeta: ZetaVector) -> float:
    return float(np.abs(faddeev_symbol(grid, zeta)).min())


def shifted_grid(grid: GridSpec, lattice_shift=0.5) -> GridSpec:
    """Grid whose lattice is shifted by lattice_shift cells (scalar or per axis)."""
    frac = np.broadcast_to(np.asarray(lattice_shift, float), (grid.n,))
    return grid.with_offset(tuple((frac * grid.dk).tolist()))


def faddeev_operator(f: SpectralField, zeta: ZetaVector) -> SpectralField:
    g = f.grid
    c = f.svalues() * faddeev_symbol(g, zeta)
    return SpectralField(g, c, "spectral")


def faddeev_apply(f: SpectralField, zeta: ZetaVector, floor: float | None = None) -> SpectralField:
    """Spectral division by |xi|^2 - 2i zeta.xi."""
    g = f.grid
    s = faddeev_symbol(g, zeta)
    floor = 1e-6 * zeta.tau ** 2 if floor is None else floor
    a = np.abs(s)
    i = np.unravel_index(int(np.argmin(a)), a.shape)
    if a[i] < floor:
        xi = g.frequency_vectors()[i]
        raise CharacteristicCollision(xi, float(a[i]), floor)
    return SpectralField(g, f.svalues() / s, "spectral")


def choose_tau(k, tau: float, grid: GridSpec, eta_seed=None, lattice_shift=0.5,
               floor: float | None = None, max_rel: float = 1e-3, trials: int = 21) -> tuple:
    """Keep tau unless a zeta of the pair collides with the lattice; otherwise
    move tau by at most max_rel (relative) to maximize the smaller min_symbol."""
    gs = shifted_grid(grid, lattice_shift)
    floor = 1e-6 * tau ** 2 if floor is None else floor

    def score(t):
        p = make_zeta_pair(k, t, eta_seed)
        return min(min_symbol(gs, p.zeta1), min_symbol(gs, p.zeta2))

    s0 = score(tau)
    if s0 >= floor:
        return tau, s0
    cands = tau * (1 + np.linspace(-max_rel, max_rel, trials))
    scores = [score(t) for t in cands]
    j = int(np.argmax(scores))
    return float(cands[j]), float(scores[j])


# -- fixed point solver ----------------------------------------------------

@dataclass
class CgoSolution:
    zeta: ZetaVector
    w: SpectralField
    iterations: int
    residual_X: float
    wnorm_X: float
    qnorm_X: float
    min_symbol: float
    converged: bool
    tol: float
    history: dict = field(default_factory=dict)
    gate_group: float = float("nan")

    def diagnostics(self) -> dict:
        return {
            "tau": self.zeta.tau,
            "iterations": self.iterations,
            "residual_X": self.residual_X,
            "wnorm_X": self.wnorm_X,
            "qnorm_X": self.qnorm_X,
            "min_symbol": self.min_symbol,
            "converged": self.converged,
            "tol": self.tol,
            "tau_over_R3A4": self.gate_group,
            "residual_history": list(self.history.get("residual", [])),
            "step_history": list(self.history.get("step", [])),
            "contraction": list(self.history.get("contraction", [])),
        }


def _xnorm(grid, coef_raw, weight, b):
    # raw FFT coefficients -> continuum weighted norm
    scale = grid.cell_volume / grid.N ** grid.n
    return float(np.sqrt(np.sum(weight ** (2 * b) * np.abs(coef_raw) ** 2) * scale))


def solve_cgo(model: ConductivityModel, zeta: ZetaVector, tol: float = 1e-8, max_iter: int = 50,
              lattice_shift=0.5, floor: float | None = None) -> CgoSolution:
    """Fixed point w <- faddeev_apply(-q (1 + w)), q in strong form.

    Stops when the X^{-1/2} residual drops below tol * ||q||_{X^{-1/2}}.
    Non-convergence is reported in the result, not raised.
    """
    g0 = model.grid
    gs = shifted_grid(g0, lattice_shift)
    s = faddeev_symbol(gs, zeta)
    floor = 1e-6 * zeta.tau ** 2 if floor is None else floor
    smin = float(np.abs(s).min())
    if smin < floor:
        a = np.abs(s)
        i = np.unravel_index(int(np.argmin(a)), a.shape)
        raise CharacteristicCollision(gs.frequency_vectors()[i], smin, floor)
    qnorm = q_norm_X(model, zeta)
    R, A = g0.R, model.A
    group = zeta.tau / (R ** 3 * A ** 4)
    weight = x_weight(gs, zeta)
    q = model.potential.strong_values
    # periodic frame: w = exp(i alpha.x) wt
    src = to_periodic(gs, np.asarray(q, complex))
    wt = np.zeros(gs.shape, complex)
    hist = {"residual": [], "step": [], "contraction": []}
    converged = False
    it = 0
    if qnorm == 0.0:
        converged, it = True, 1
        hist["residual"].append(0.0)
    else:
        for it in range(1, max_iter + 1):
            rhs = -(src + q * wt)
            new = ifftn(fftn(rhs) / s)
            diff = new - wt
            step = _xnorm(gs, fftn(diff), weight, 0.5)
            # residual of the new iterate equals q * (new - old)
            res = _xnorm(gs, fftn(q * diff), weight, -0.5)
            wt = new
            if hist["step"]:
                prev = hist["step"][-1]
                hist["contraction"].append(step / prev if prev > 0 else 0.0)
            hist["step"].append(step)
            hist["residual"].append(res)
            if res <= tol * qnorm:
                converged = True
                break
    # independent evaluation of the final residual
    r = ifftn(s * fftn(wt)) + q * wt + src
    residual = _xnorm(gs, fftn(r), weight, -0.5) if qnorm > 0 else 0.0
    wnorm = _xnorm(gs, fftn(wt), weight, 0.5)
    w = SpectralField(gs, from_periodic(gs, wt))
    return CgoSolution(zeta, w, it, residual, wnorm, qnorm, smin, converged, tol, hist, group)


def _transposed_operator(u: SpectralField, zeta: ZetaVector) -> np.ndarray:
    """(-Laplacian + 2 zeta.grad) u, physical values."""
    g = u.grid
    dz = sum((a + 1j * b) * np.broadcast_to(g.dsym(j), g.shape)
             for j, (a, b) in enumerate(zip(zeta.re, zeta.im)))
    sym = -g.laplacian_symbol() + 2 * dz
    return from_periodic(g, ifftn(sym * fftn(to_periodic(g, u.pvalues()))))


def verify_solution(sol: CgoSolution, model: ConductivityModel, test_count: int = 20,
                    tol: float = 1e-7, seed: int = 0) -> dict:
    """Weak-form check of (-Laplacian - 2 zeta.grad + q) w = -q against
    test functions u supported in |x| <= R:

        |<w, (-Laplacian + 2 zeta.grad) u> + <q (1 + w), u>| <= tol ||u||_{X^{1/2}} ||q||_{X^{-1/2}}
    """
    g = model.grid
    rng = np.random.default_rng(seed)
    zeta = sol.zeta
    wv = sol.w.pvalues()
    one = SpectralField(g, np.ones(g.shape))
    rows = []
    for i in range(test_count):
        c = rng.uniform(-0.1, 0.1, g.n) * g.R
        width = rng.uniform(0.22, 0.26) * g.R
        u = make_test_function(g, "gaussian-bump", {"center": c, "width": width}, check=False)
        mod = rng.uniform(-2, 2, g.n)
        u = u * np.exp(1j * sum(m * x for m, x in zip(mod, g.coords())))
        lhs1 = complex(np.sum(wv * _transposed_operator(u, zeta)) * g.cell_volume)
        lhs2 = q_bilinear(model, one, u) + q_bilinear(model, sol.w, u)
        defect = abs(lhs1 + lhs2)
        scale = norm_X(u, 0.5, zeta) * sol.qnorm_X
        ratio = defect / scale if scale > 0 else 0.0
        rows.append({"defect": defect, "scale": scale, "ratio": ratio})
    worst = max((r["ratio"] for r in rows), default=0.0)
    return {
        "name": "cgo-weak-form",
        "tol": tol,
        "test_count": test_count,
        "max_ratio": worst,
        "max_defect": max((r["defect"] for r in rows), default=0.0),
        "ratios": [r["ratio"] for r in rows],
        "passed": bool(worst <= tol),
    }


class CgoSolver(BaseEstimator):
    """Estimator wrapper: ``fit(model)`` solves for the remainder w at zeta_1
    (or zeta_2 with ``branch=2``) of the pair built from (k, tau, eta_seed)."""

    def __init__(self, tau=20.0, k=None, eta_seed=None, branch=1, tol=1e-8, max_iter=50,
                 lattice_shift=0.5):
        self.tau = tau
        self.k = k
        self.eta_seed = eta_seed
        self.branch = branch
        self.tol = tol
        self.max_iter = max_iter
        self.lattice_shift = lattice_shift

    def fit(self, model: ConductivityModel, y=None):
        if not isinstance(model, ConductivityModel):
            raise TypeError("CgoSolver.fit expects a ConductivityModel")
        if self.branch not in (1, 2):
            raise ParameterError("branch must be 1 or 2")
        k = np.zeros(model.grid.n) if self.k is None else np.asarray(self.k, float)
        self.pair_ = make_zeta_pair(k, self.tau, self.eta_seed)
        zeta = self.pair_.zeta1 if self.branch == 1 else self.pair_.zeta2
        self.solution_ = solve_cgo(model, zeta, self.tol, self.max_iter, self.lattice_shift)
        self.w_ = self.solution_.w
        self.converged_ = self.solution_.converged
        return self

    def transform(self, model: ConductivityModel):
        return self.fit(model).w_

    def score(self, model: ConductivityModel, y=None) -> float:
        """Negative relative X^{-1/2} residual of the fitted solution."""
        sol = self.solution_
        return -sol.residual_X / sol.qnorm_X if sol.qnorm_X > 0 else 0.0
