"""Empirical checks of the Carleman-type inequalities.

Each check evaluates both sides of an inequality on sampled inputs and
returns an EstimateReport. Inequalities with an explicit constant use it
directly ("paper-explicit"); the others use a calibration-then-hold
budget: the max ratio on a calibration set times a headroom factor,
asserted on disjoint hold sets ("derived-sweep").
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .lattice import (
    SUPPORT_TAIL_TOL,
    GridSpec,
    ParameterError,
    SpectralField,
    check_support,
    fftn,
    from_periodic,
    ifftn,
    make_test_function,
    smoothstep7,
    to_periodic,
)
from .media import ConductivityModel
from .symbols import (
    CarlemanParams,
    RegimeError,
    _closed,
    _m2,
    _m_grid,
    _jet,
    carleman_parts,
    conjugated_laplacian,
    m_inverse_sqrt_d1,
    m_inverse_sqrt_d2,
    norm_Y,
)

__all__ = [
    "CutoffProfile",
    "EstimateReport",
    "DEGENERATE_NORM",
    "sample_bumps",
    "sample_packets",
    "sample_offset_packets",
    "fiber_grid",
    "calibrated",
    "held",
    "check_prop41",
    "check_energy_identity",
    "check_theorem2",
    "check_commutator_lemma",
    "commutator_m_half",
    "commutator_two_path",
    "check_multiplication_lemma",
    "multiplication_l1_norm",
    "check_quotient_bound",
    "check_pseudolocality",
    "check_derivative_L1",
    "derivative_l1_profile",
    "check_estimate_q",
]

DEGENERATE_NORM = 1e-14
PROP41_SLACK = 0.05
IDENTITY_TOL = 1e-10


@dataclass(frozen=True)
class CutoffProfile:
    """chi(x_n) = 1 on |x_n| <= a, 0 on |x_n| >= b, order-7 polynomial step between."""

    a: float = 2.0
    b: float = 4.0
    order: int = 7

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise ParameterError("need 0 < a < b")
        if self.order != 7:
            raise ParameterError("only the order-7 smoothstep is implemented")

    @classmethod
    def for_radius(cls, R: float) -> "CutoffProfile":
        return cls(2 * R, 4 * R)

    def __call__(self, x):
        t = (np.abs(np.asarray(x, float)) - self.a) / (self.b - self.a)
        return 1.0 - smoothstep7(t)


@dataclass
class EstimateReport:
    name: str
    params: dict
    sample_count: int
    ratios: list
    max_ratio: float
    budget: float
    passed: bool
    provenance: str
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in ("paper-explicit", "derived-sweep"):
            raise ParameterError(f"unknown provenance {self.provenance!r}")

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kw)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else repr(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    if isinstance(x, GridSpec):
        return {"n": x.n, "N": x.N, "L": x.L, "R": x.R, "offset": list(x.offset)}
    return x


def _report(name, params, ratios, budget, provenance, details=None, degenerate=0) -> EstimateReport:
    ratios = [float(r) for r in ratios]
    mx = max(ratios) if ratios else 0.0
    d = dict(details or {})
    d["degenerate"] = int(degenerate)
    return EstimateReport(name, params, len(ratios), ratios, mx, float(budget),
                          bool(mx <= budget), provenance, d)


def calibrated(report: EstimateReport, headroom: float = 1.5) -> float:
    """Budget from a calibration report."""
    return headroom * report.max_ratio


def held(report: EstimateReport, budget: float, calibration: dict | None = None) -> EstimateReport:
    """Re-assert a report against a calibrated budget."""
    d = dict(report.details)
    if calibration is not None:
        d["calibration"] = calibration
    return EstimateReport(report.name, report.params, report.sample_count, report.ratios,
                          report.max_ratio, float(budget), bool(report.max_ratio <= budget),
                          "derived-sweep", d)


def _pmap(fn, items, workers: int = 1):
    items = list(items)
    if workers and workers > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _as_list(u):
    return [u] if isinstance(u, SpectralField) else list(u)


def _params(p: CarlemanParams, grid: GridSpec | None = None, **extra) -> dict:
    d = p.as_dict()
    if grid is not None:
        d["grid"] = grid
        if grid.n < 3:
            d["low_dimension"] = True
    d.update(extra)
    return d


def _degenerate(u: SpectralField) -> bool:
    return u.l2norm() < DEGENERATE_NORM


def _check_slab(u: SpectralField, R: float):
    check_support(u, "slab", R, SUPPORT_TAIL_TOL)


# -- sample families -------------------------------------------------------

def sample_bumps(grid: GridSpec, count: int, seed: int = 0,
                 kinds=("gaussian-bump", "slab-bump", "random-bandlimited")) -> list:
    """Deterministic family of smooth fields supported in |x_n| <= R."""
    rng = np.random.default_rng(seed)
    R, n = grid.R, grid.n
    out = []
    for i in range(count):
        kind = kinds[i % len(kinds)]
        if kind == "gaussian-bump":
            c = np.concatenate([rng.uniform(-0.5, 0.5, n - 1), rng.uniform(-0.15, 0.15, 1)]) * R
            pr = {"center": c, "width": rng.uniform(0.24, 0.27) * R,
                  "width_prime": rng.uniform(0.25, 0.5) * R}
            f = make_test_function(grid, kind, pr)
            mod = rng.uniform(-1.5, 1.5, n)
            f = f * np.exp(1j * sum(m * x for m, x in zip(mod, grid.coords())))
        elif kind == "slab-bump":
            pr = {"half_width": rng.uniform(0.1, 0.2) * R, "edge": rng.uniform(0.23, 0.27) * R,
                  "width_prime": rng.uniform(0.3, 0.5) * grid.L / 4,
                  "center": np.concatenate([rng.uniform(-0.5, 0.5, n - 1), [0.0]]) * R}
            f = make_test_function(grid, kind, pr)
        else:
            f = make_test_function(grid, kind, {"width": rng.uniform(0.23, 0.25) * R},
                                   seed=int(rng.integers(2 ** 31)))
        out.append(f)
    return out


def fiber_grid(p: CarlemanParams, xi_prime: float, N: int | None = None) -> GridSpec:
    """Two-dimensional grid whose x_1 lattice is shifted to xi_prime.

    The operators act fiberwise in x', so a field exp(i xi' x_1) b(x_n) probes
    the symbols at |xi'| = xi_prime. N grows with M so that packets with
    |kappa| <= M stay resolved.
    """
    L = 4 * p.R
    if N is None:
        need = 2 * L * (p.M + 40) / np.pi
        N = max(256, int(2 ** np.ceil(np.log2(need))))
    return GridSpec(2, N, L, p.R, (float(xi_prime), 0.0))


def sample_packets(p: CarlemanParams, count: int, seed: int = 0, N: int | None = None,
                   spread: float = 1.0) -> list:
    """Wave packets exp(i xi' x_1 + i kappa x_n) b(x_n) near the characteristic set.

    xi' = tau + M u with u uniform in [-spread, spread], |kappa| <= M; the first
    packets sit at the points where m is smallest.
    """
    rng = np.random.default_rng(seed)
    M, tau, R = p.M, p.tau, p.R
    pts = [(tau, 0.7 * M), (tau, 0.0), (tau, -0.7 * M)]
    while len(pts) < count:
        pts.append((tau + M * rng.uniform(-spread, spread), M * rng.uniform(-1, 1)))
    out = []
    for xp, kap in pts[:count]:
        g = fiber_grid(p, xp, N)
        c = rng.uniform(-0.1, 0.1) * R
        out.append(make_test_function(g, "wave-packet", {"kappa": kap, "center": c, "width": R / 4}))
    return out


def sample_offset_packets(grid: GridSpec, tau: float, count: int, seed: int = 0,
                          kappa: float = 2.0) -> list:
    """Packets exp(i tau x_1 + i kappa x_n) b(x_n) on ``grid`` shifted by tau e_1.

    They sit on the set |xi'| = tau where m is smallest, without needing a
    grid that resolves tau itself.
    """
    rng = np.random.default_rng(seed)
    off = (float(tau),) + (0.0,) * (grid.n - 1)
    g = grid.unshifted().with_offset(off)
    return [make_test_function(g, "wave-packet",
                               {"kappa": rng.uniform(-kappa, kappa),
                                "center": rng.uniform(-0.1, 0.1) * grid.R, "width": grid.R / 4})
            for _ in range(count)]


# -- explicit-constant estimate and the energy identity ---------------------

def check_prop41(u, p: CarlemanParams, slack: float = PROP41_SLACK, workers: int = 1) -> EstimateReport:
    """||u||_{Y^1}^2 <= 50 R^2 (1 + slack) ||exp(phi)(-Laplacian)(exp(-phi)u)||^2."""
    p.require("tau>2MR")
    samples = _as_list(u)

    def one(f):
        if _degenerate(f):
            return None
        _check_slab(f, p.R)
        lhs = norm_Y(f, 1.0, p) ** 2
        rhs = 50 * p.R ** 2 * conjugated_laplacian(f, p).l2norm() ** 2
        return lhs, rhs

    res = _pmap(one, samples, workers)
    good = [r for r in res if r is not None]
    ratios = [a / b for a, b in good]
    return _report("prop41", _params(p, samples[0].grid if samples else None, slack=slack),
                   ratios, 1.0 + slack, "paper-explicit",
                   {"lhs": [a for a, _ in good], "rhs": [b for _, b in good]},
                   degenerate=len(res) - len(good))


def _energy_terms(f: SpectralField, p: CarlemanParams):
    parts = carleman_parts(f, p)
    o = parts["ops"]
    h = f.grid.cell_volume
    n2 = lambda a: float(np.sum(np.abs(a) ** 2) * h)
    a, b, conj = parts["A"], parts["B"], parts["conj"]
    # [A, B] u by composition A(Bu) - B(Au)
    comm = complex(np.vdot(o.u, o.A(b) - o.B(a)) * h)
    return n2(conj), n2(a), n2(b), comm, _closed(o)


def check_energy_identity(u, p: CarlemanParams, tol: float = IDENTITY_TOL, workers: int = 1) -> list:
    """Three reports: the energy identity, the closed form of <[A,B]u,u>, and its positivity.

    Ratios are relative defects, budget ``tol``.
    """
    samples = _as_list(u)

    def one(f):
        if _degenerate(f):
            return None
        nc, na, nb, comm, closed = _energy_terms(f, p)
        ident = abs(nc - na - nb - comm) / max(nc, 1e-300)
        cf = abs(comm - closed) / max(closed, 1e-300)
        neg = max(0.0, -comm.real, abs(comm.imag)) / max(closed, 1e-300)
        return ident, cf, neg, comm.real

    res = _pmap(one, samples, workers)
    good = [r for r in res if r is not None]
    deg = len(res) - len(good)
    g = samples[0].grid if samples else None
    pr = _params(p, g)
    return [
        _report("energy-identity", pr, [r[0] for r in good], tol, "paper-explicit", degenerate=deg),
        _report("commutator-closed-form", pr, [r[1] for r in good], tol, "paper-explicit", degenerate=deg),
        _report("commutator-positivity", pr, [r[2] for r in good], tol, "paper-explicit",
                {"min_commutator": min((r[3] for r in good), default=0.0)}, degenerate=deg),
    ]


# -- Y^{1/2} by Y^{-1/2} estimate ----------------------------------------------

def _theorem2_ratio(f: SpectralField, p: CarlemanParams, extra=None):
    conj = conjugated_laplacian(f, p)
    if extra is not None:
        conj = conj + extra
    return norm_Y(f, 0.5, p) / (p.R * norm_Y(conj, -0.5, p))


def check_theorem2(u, p: CarlemanParams, budget: float | None = None, headroom: float = 1.5,
                   workers: int = 1) -> EstimateReport:
    """||u||_{Y^{1/2}} / (R ||conjugated u||_{Y^{-1/2}}).

    Without a budget the report is a calibration run (budget = headroom * max).
    """
    p.require("tau>8MR")
    samples = _as_list(u)

    def one(f):
        if _degenerate(f):
            return None
        _check_slab(f, p.R)
        return _theorem2_ratio(f, p)

    res = _pmap(one, samples, workers)
    ratios = [r for r in res if r is not None]
    deg = len(res) - len(ratios)
    g = samples[0].grid if samples else None
    rep = _report("theorem2", _params(p, g), ratios, np.inf, "derived-sweep", degenerate=deg)
    if budget is None:
        rep = held(rep, headroom * rep.max_ratio if ratios else 0.0, {"role": "calibration"})
        rep.details["role"] = "calibration"
    else:
        rep = held(rep, budget)
        rep.details["role"] = "hold"
    return rep


# -- commutator with m(D)^{-1/2} ----------------------------------------------

def _g_derivs(grid: GridSpec, p: CarlemanParams):
    xn = np.broadcast_to(grid.freq(grid.n - 1), grid.shape)
    xp2 = grid.xi_squared() - xn ** 2
    return m_inverse_sqrt_d1(xp2, xn, p), m_inverse_sqrt_d2(xp2, xn, p), xn


def commutator_m_half(u: SpectralField, p: CarlemanParams) -> SpectralField:
    """[exp(phi)(-Laplacian)exp(-phi), m(D)^{-1/2}] u from the symbol expansion

        (M^2 g'' - 2i tau M g' - 2M xi_n g')(D) u - 2i M^2 g'(D)(x_n u),

    g = m^{-1/2}, primes in xi_n. Only multipliers act on u and on x_n u,
    so the unbounded weight never meets a delocalized field.
    """
    g = u.grid
    g1, g2, xn = _g_derivs(g, p)
    M, tau = p.M, p.tau
    sym = M ** 2 * g2 - 2j * tau * M * g1 - 2 * M * xn * g1
    uv = u.pvalues()
    x = np.broadcast_to(g.coord(g.n - 1), g.shape)
    a = fftn(to_periodic(g, uv))
    b = fftn(to_periodic(g, x * uv))
    out = ifftn(sym * a - 2j * M ** 2 * g1 * b)
    return SpectralField(g, from_periodic(g, out))


def commutator_two_path(u: SpectralField, p: CarlemanParams) -> SpectralField:
    """conj(m^{-1/2} u) - m^{-1/2} conj(u) evaluated literally."""
    g = u.grid
    mh = _m_grid(g, p) ** -0.5
    vals = u.pvalues()
    first = SpectralField(g, from_periodic(g, ifftn(mh * fftn(to_periodic(g, vals)))))
    a = conjugated_laplacian(first, p, check=False).pvalues()
    c = conjugated_laplacian(u, p, check=False).pvalues()
    b = from_periodic(g, ifftn(mh * fftn(to_periodic(g, c))))
    return SpectralField(g, a - b)


def check_commutator_lemma(u, p: CarlemanParams, budget: float | None = None, headroom: float = 1.5,
                           workers: int = 1) -> EstimateReport:
    """||[conj, m(D)^{-1/2}] u|| M^{1/2} / ||u||_{Y^{1/2}}."""
    p.require("tau>8MR")
    samples = _as_list(u)

    def one(f):
        if _degenerate(f):
            return None
        _check_slab(f, p.R)
        return commutator_m_half(f, p).l2norm() * np.sqrt(p.M) / norm_Y(f, 0.5, p)

    res = _pmap(one, samples, workers)
    ratios = [r for r in res if r is not None]
    rep = _report("commutator", _params(p, samples[0].grid if samples else None), ratios,
                  np.inf, "derived-sweep", degenerate=len(res) - len(ratios))
    b = headroom * rep.max_ratio if budget is None else budget
    out = held(rep, b)
    out.details["role"] = "calibration" if budget is None else "hold"
    return out


# -- multiplication bound and the symbol quotient ------------------------------

def _profile_values(grid: GridSpec, f):
    x = grid.axis()
    vals = f(x) if callable(f) else np.asarray(f)
    if vals.shape != (grid.N,):
        raise ParameterError("profile must have one value per x_n grid point")
    return vals.astype(complex)


def multiplication_l1_norm(grid: GridSpec, f, p: CarlemanParams) -> float:
    """(2 pi)^{-1/2} int (M^{-1}|s| + 1)^2 |f_hat(s)| ds on the x_n lattice.

    The (2 pi)^{-1/2} matches F(f u) = (2 pi)^{-1/2} f_hat * u_hat, so f = 1 gives 1.
    """
    v = _profile_values(grid, f)
    z = np.fft.fftfreq(grid.N, d=1.0 / grid.N)
    sign = np.where(z % 2 == 0, 1.0, -1.0)
    fh = np.fft.fft(v) * sign * grid.h / np.sqrt(2 * np.pi)
    s = grid.dk * z
    w = (np.abs(s) / p.M + 1) ** 2
    return float(np.sum(w * np.abs(fh)) * grid.dk / np.sqrt(2 * np.pi))


def check_multiplication_lemma(f, u, p: CarlemanParams, budget: float | None = None,
                               headroom: float = 1.5, workers: int = 1) -> EstimateReport:
    """||f u||_{Y^{1/2}} / (||p f_hat||_{L1} ||u||_{Y^{1/2}}) for a profile f(x_n)."""
    if not p.tau > p.M:
        raise RegimeError("tau>M")
    samples = _as_list(u)
    g = samples[0].grid
    fv = _profile_values(g, f)
    shape = [1] * g.n
    shape[-1] = g.N
    fb = fv.reshape(shape)
    l1 = multiplication_l1_norm(g, fv, p)

    def one(s):
        if _degenerate(s):
            return None
        return norm_Y(s * fb, 0.5, p) / (l1 * norm_Y(s, 0.5, p))

    res = _pmap(one, samples, workers)
    ratios = [r for r in res if r is not None]
    rep = _report("multiplication", _params(p, g, l1=l1), ratios, np.inf, "derived-sweep",
                  degenerate=len(res) - len(ratios))
    out = held(rep, headroom * rep.max_ratio if budget is None else budget)
    out.details["role"] = "calibration" if budget is None else "hold"
    return out


def quotient_ratio(xp2, xn, en, p: CarlemanParams):
    """m(xi', xi_n) / m(xi', eta_n) divided by (M^{-1}|eta_n - xi_n| + 1)^2."""
    a = np.sqrt(_m2(xp2 + xn ** 2, xn, p))
    b = np.sqrt(_m2(xp2 + en ** 2, en, p))
    return a / b / (np.abs(en - xn) / p.M + 1) ** 2


def check_quotient_bound(p: CarlemanParams, sweep: dict | None = None, budget: float | None = None,
                         headroom: float = 1.5) -> EstimateReport:
    """Max over a lattice of triples (|xi'|, xi_n, eta_n) of the normalized quotient.

    ``sweep`` keys: counts (3 ints), extent (multiple of tau, default 3).
    """
    if not p.tau > p.M:
        raise RegimeError("tau>M")
    sweep = dict(sweep or {})
    c1, c2, c3 = sweep.get("counts", (100, 101, 101))
    ext = float(sweep.get("extent", 3.0)) * p.tau
    xp = np.linspace(0.0, ext, c1)
    xn = np.linspace(-ext, ext, c2)
    en = np.linspace(-ext, ext, c3)
    per = []
    for v in xp:
        r = quotient_ratio(v ** 2, xn[:, None], en[None, :], p)
        per.append(float(r.max()))
    rep = _report("quotient", _params(p, None, triples=c1 * c2 * c3, extent=ext), per, np.inf,
                  "derived-sweep")
    rep.details["finite"] = bool(np.all(np.isfinite(per)))
    out = held(rep, headroom * rep.max_ratio if budget is None else budget)
    out.details["role"] = "calibration" if budget is None else "hold"
    out.details["finite"] = rep.details["finite"]
    return out


# -- pseudo-locality -----------------------------------------------------------

MULTIPLIERS = ("resolvent-shift", "tau-dxn", "tau-plain")


def _pl_symbol(grid: GridSpec, p: CarlemanParams, tag: str):
    mh = _m_grid(grid, p) ** -0.5
    xn = np.broadcast_to(grid.freq(grid.n - 1), grid.shape)
    if tag == "resolvent-shift":
        return (p.tau ** 2 - grid.xi_squared()) * mh
    if tag == "tau-dxn":
        return 1j * p.tau * xn * mh
    if tag == "tau-plain":
        return p.tau * mh
    raise ParameterError(f"unknown multiplier {tag!r}; choose from {MULTIPLIERS}")


def pseudolocality_lhs(u: SpectralField, p: CarlemanParams, tag: str) -> float:
    """||(1 - chi) P(D) u||_{L2}."""
    g = u.grid
    sym = _pl_symbol(g, p, tag)
    pu = from_periodic(g, ifftn(sym * fftn(to_periodic(g, u.pvalues()))))
    chi = CutoffProfile.for_radius(p.R)(np.broadcast_to(g.coord(g.n - 1), g.shape))
    return float(np.sqrt(np.sum(np.abs((1 - chi) * pu) ** 2) * g.cell_volume))


def check_pseudolocality(u, p: CarlemanParams, P: str = "tau-plain", N: int = 1,
                         budget: float | None = None, headroom: float = 1.5,
                         workers: int = 1) -> EstimateReport:
    """||(1 - chi) P(D) u|| R^N M^N / ||u||_{Y^{1/2}}; details keep the raw LHS."""
    p.require("tau>8MR")
    if N not in (1, 2):
        raise ParameterError("N must be 1 or 2")
    samples = _as_list(u)

    def one(f):
        if _degenerate(f):
            return None
        _check_slab(f, p.R)
        lhs = pseudolocality_lhs(f, p, P)
        return lhs, norm_Y(f, 0.5, p)

    res = _pmap(one, samples, workers)
    good = [r for r in res if r is not None]
    ratios = [a * (p.R * p.M) ** N / b for a, b in good]
    rep = _report("pseudolocality", _params(p, samples[0].grid if samples else None, multiplier=P, N=N),
                  ratios, np.inf, "derived-sweep",
                  {"lhs": [a for a, _ in good], "lhs_over_Y": [a / b for a, b in good]},
                  degenerate=len(res) - len(good))
    out = held(rep, headroom * rep.max_ratio if budget is None else budget)
    out.details["role"] = "calibration" if budget is None else "hold"
    return out


def pseudolocality_trend(lhs_small: list, lhs_large: list, N: int) -> dict:
    """Doubling M must shrink the worst LHS by at least 2^N / 2."""
    a, b = max(lhs_small), max(lhs_large)
    factor = 2 ** N * 0.5
    return {"lhs_M": a, "lhs_2M": b, "required_factor": factor,
            "observed_factor": a / b if b > 0 else np.inf, "passed": bool(b * factor <= a)}


# -- derivatives of m^{-1/2} ------------------------------------------------------

def _xi_n_nodes(p: CarlemanParams, per_scale: int = 40, extent: float = 6.0):
    """Nodes on [-extent tau, extent tau] with spacing max(M, |xi_n|) / per_scale."""
    M, top = p.M, extent * p.tau
    inner = np.arange(0.0, M, M / per_scale)
    r = 1.0 + 1.0 / per_scale
    outer = M * r ** np.arange(0, int(np.ceil(np.log(top / M) / np.log(r))) + 1)
    pos = np.concatenate([inner, outer[outer <= top], [top]])
    pos = np.unique(pos)
    return np.concatenate([-pos[:0:-1], pos])


def _xi_prime_samples(p: CarlemanParams, count: int = 24, dense: int = 25):
    coarse = np.linspace(0.0, 3 * p.tau, count)
    near = p.tau + p.M * np.linspace(-3, 3, dense)
    return np.unique(np.concatenate([coarse, near[near >= 0]]))


def derivative_l1_profile(k: int, p: CarlemanParams, xi_prime=None) -> tuple:
    """int |d^k m^{-1/2} / dxi_n^k| dxi_n for each |xi'| sample (trapezoid on graded nodes)."""
    xp = _xi_prime_samples(p) if xi_prime is None else np.atleast_1d(np.asarray(xi_prime, float))
    nodes = _xi_n_nodes(p)
    vals = []
    for v in xp:
        d = _jet(np.full_like(nodes, v * v), nodes, p, k)[k]
        vals.append(float(np.trapezoid(np.abs(d), nodes)))
    return xp, np.asarray(vals)


def check_derivative_L1(k: int, p: CarlemanParams, budget: float | None = None,
                        headroom: float = 1.5, xi_prime=None) -> EstimateReport:
    """sup_{xi'} ||d^k m^{-1/2}||_{L1(dxi_n)} times M^{k/4 - 3/4} tau^{1/2}."""
    if k < 8:
        raise ParameterError(f"order k must be at least 8, got {k}")
    if not p.tau > p.M:
        raise RegimeError("tau>M")
    xp, vals = derivative_l1_profile(k, p, xi_prime)
    norm = p.M ** (k / 4 - 0.75) * np.sqrt(p.tau)
    ratios = (vals * norm).tolist()
    j = int(np.argmax(vals))
    rep = _report("derivative-l1", _params(p, None, k=k), ratios, np.inf, "derived-sweep",
                  {"argmax_xi_prime": float(xp[j]), "raw_sup": float(vals[j])})
    out = held(rep, headroom * rep.max_ratio if budget is None else budget)
    out.details["role"] = "calibration" if budget is None else "hold"
    return out


# -- the first-order perturbation ----------------------------------------------

def check_estimate_q(u, model: ConductivityModel, p: CarlemanParams, budget_a: float | None = None,
                     budget_b: float | None = None, headroom: float = 1.5, workers: int = 1) -> tuple:
    """(a) ||q u||_{Y^{-1/2}} M^{1/2} / (A^2 ||u||_{Y^{1/2}});
    (b) ||u||_{Y^{1/2}} / (R ||conj u + q u||_{Y^{-1/2}}).

    The rotation is the identity (Re zeta along e_n); q acts in strong form.
    """
    p.require("tau>8MR")
    A = model.A
    if not p.M >= p.c * p.R ** 2 * A ** 4:
        raise RegimeError("M>=cR^2A^4", f"M={p.M:g}, A={A:.3g}")
    samples = _as_list(u)
    q = model.potential.strong_values

    def one(f):
        if _degenerate(f):
            return None
        _check_slab(f, p.R)
        if f.grid.unshifted() != model.grid:
            raise ParameterError("sample and model grids differ")
        qu = f * q
        yu = norm_Y(f, 0.5, p)
        ra = norm_Y(qu, -0.5, p) * np.sqrt(p.M) / (A ** 2 * yu)
        rb = _theorem2_ratio(f, p, qu)
        return ra, rb

    res = _pmap(one, samples, workers)
    good = [r for r in res if r is not None]
    deg = len(res) - len(good)
    g = samples[0].grid if samples else None
    pr = _params(p, g, model=model.kind, A=A)
    ra = _report("estimate-q-a", pr, [r[0] for r in good], np.inf, "derived-sweep", degenerate=deg)
    rb = _report("estimate-q-b", pr, [r[1] for r in good], np.inf, "derived-sweep", degenerate=deg)
    ra = held(ra, headroom * ra.max_ratio if budget_a is None else budget_a)
    rb = held(rb, headroom * rb.max_ratio if budget_b is None else budget_b)
    return ra, rb
