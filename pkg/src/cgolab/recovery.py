"""Fourier-mode recovery from CGO solutions and the averaged-norm experiment.

With gamma_2 = 1 the pairing <q v_1, v_2> over the CGO pair reduces to

    q_hat_est(k; tau) = <q, exp(-i k.x) (1 + w_1)>

because exp(zeta_1.x) exp(zeta_2.x) = exp(-i k.x). No large exponential is
ever formed. The difference from the exact mode <q, exp(-i k.x)> is the
remainder pairing <q, exp(-i k.x) w_1>, which decays as tau grows.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .carleman import EstimateReport, _jsonable, _report, held
from .cgo import ZetaPair, choose_tau, make_zeta_pair, pair_from_frame, solve_cgo
from .lattice import ParameterError, SpectralField, plane_wave
from .media import ConductivityModel, modulus_of_continuity, q_bilinear, q_difference_norm_X, q_fourier

__all__ = [
    "RecoveryRecord",
    "AveragingRecord",
    "alessandrini_pair",
    "conjugate_pair",
    "recover_fourier_mode",
    "recovery_sweep",
    "remainder_bound_check",
    "averaging_experiment",
    "averaging_decays",
    "FourierModeRecovery",
]

CLOSURE_TOL = 1e-9


@dataclass
class RecoveryRecord:
    k: tuple
    tau: float
    q_hat_true: complex
    q_hat_est: complex
    remainders: tuple
    error: float
    closure: float
    wnorm_X: float = float("nan")
    qnorm_X: float = float("nan")
    iterations: int = 0
    min_symbol: float = float("nan")
    converged: bool = True
    residual_X: float = 0.0

    @property
    def closes(self) -> bool:
        return self.closure <= CLOSURE_TOL

    def row(self) -> dict:
        d = {f"k{j}": float(v) for j, v in enumerate(self.k)}
        d.update(
            tau=self.tau,
            q_hat_true_re=self.q_hat_true.real,
            q_hat_true_im=self.q_hat_true.imag,
            q_hat_est_re=self.q_hat_est.real,
            q_hat_est_im=self.q_hat_est.imag,
            error=self.error,
            wnorm_X=self.wnorm_X,
            qnorm_X=self.qnorm_X,
            iterations=self.iterations,
            min_symbol=self.min_symbol,
            converged=int(self.converged),
            closure=self.closure,
        )
        return d


@dataclass
class AveragingRecord:
    lam: float
    directions: list
    tau_nodes: list
    value: float
    values: list = field(default_factory=list)
    modulus: float = 0.0
    rhs_terms: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return _jsonable(asdict(self))


def alessandrini_pair(model1: ConductivityModel, model2: ConductivityModel, v1: SpectralField,
                      v2: SpectralField) -> complex:
    """<(q_1 - q_2) v_1, v_2>, each potential in weak form."""
    if model1.grid != model2.grid:
        raise ParameterError("models live on different grids")
    return q_bilinear(model1, v1, v2) - q_bilinear(model2, v1, v2)


def conjugate_pair(pair: ZetaPair) -> ZetaPair:
    """Pair for -k whose zeta_1 is the complex conjugate of pair.zeta1.

    For real q the remainder at conj(zeta) is conj(w), so the estimates obey
    q_hat_est(-k) = conj(q_hat_est(k)) up to solver tolerance.
    """
    k = -np.asarray(pair.k, float)
    return pair_from_frame(k, pair.tau, np.asarray(pair.eta), -np.asarray(pair.theta))


def _closure(est, true, rems):
    gap = abs(est - true + sum(rems))
    scale = max(abs(true), abs(est), 1e-300)
    return 0.0 if gap == 0 else gap / scale


def recover_fourier_mode(model: ConductivityModel, k, tau: float, config: dict | None = None,
                         pair: ZetaPair | None = None) -> RecoveryRecord:
    """Estimate q_hat(k) from the CGO remainder at zeta_1.

    ``config`` keys: tol, max_iter, lattice_shift, eta_seed, adjust_tau
    (move tau by at most 1e-3 relative if the pair hits the lattice).
    Solver non-convergence is flagged in the record.
    """
    cfg = dict(config or {})
    g = model.grid
    k = np.asarray(k, float).reshape(g.n)
    g.index_of(k)
    shift = cfg.get("lattice_shift", 0.5)
    if pair is None:
        if cfg.get("adjust_tau", True):
            tau, _ = choose_tau(k, tau, g, cfg.get("eta_seed"), shift)
        pair = make_zeta_pair(k, tau, cfg.get("eta_seed"))
    sol = solve_cgo(model, pair.zeta1, cfg.get("tol", 1e-8), cfg.get("max_iter", 50), shift)
    ek = plane_wave(g, k, -1)
    one = SpectralField(g, np.ones(g.shape))
    true = q_fourier(model, k)
    # one pairing against 1 + w_1, and the remainder pairing on its own
    est = q_bilinear(model, ek, one) + q_bilinear(model, ek, sol.w)
    r1 = q_bilinear(model, ek, sol.w)
    rems = (-r1,)
    return RecoveryRecord(
        k=tuple(float(v) for v in k),
        tau=float(pair.tau),
        q_hat_true=complex(true),
        q_hat_est=complex(est),
        remainders=tuple(complex(r) for r in rems),
        error=float(abs(est - true)),
        closure=_closure(est, true, rems),
        wnorm_X=sol.wnorm_X,
        qnorm_X=sol.qnorm_X,
        iterations=sol.iterations,
        min_symbol=sol.min_symbol,
        converged=sol.converged,
        residual_X=sol.residual_X,
    )


def recovery_sweep(model: ConductivityModel, ks, taus, config: dict | None = None,
                   workers: int = 1) -> list:
    """Records for every (k, tau), ordered k-major regardless of ``workers``."""
    jobs = [(np.asarray(k, float), float(t)) for k in ks for t in taus]

    def one(job):
        return recover_fourier_mode(model, job[0], job[1], config)

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            return list(ex.map(one, jobs))
    return [one(j) for j in jobs]


def error_decays(records, factor: float = 0.8) -> bool:
    """error(2 tau) <= factor * error(tau) along a tau-sorted series for one k."""
    recs = sorted(records, key=lambda r: r.tau)
    errs = [r.error for r in recs]
    if all(e == 0 for e in errs):
        return True
    return all(b <= factor * a for a, b in zip(errs, errs[1:]))


def remainder_bound_check(model: ConductivityModel, k, tau: float, budget=None,
                          model2: ConductivityModel | None = None, config: dict | None = None,
                          headroom: float = 1.25) -> EstimateReport:
    """Ratios of the remainder pairings to their bounds.

        |<q, e_k w_j>| / ((1 + |k|) ||q||_{X^{-1/2}_{zeta_j}} ||w_j||_{X^{1/2}_{zeta_j}}),  j = 1, 2
        |<q, e_k w_1 w_2>| / ((c0^{-2} + |k|)^2 ||w_1||_{X^{1/2}} ||w_2||_{X^{1/2}})

    with q = q_1 - q_2 and e_k = exp(-i k.x). w_1 solves for model at zeta_1,
    w_2 for model2 at zeta_2; without model2 the second potential is zero and
    w_2 is taken from model itself, so each ratio is still an instance of
    the bound. ``budget`` is None (calibrate) or a list of three budgets.
    """
    cfg = dict(config or {})
    g = model.grid
    k = np.asarray(k, float).reshape(g.n)
    shift = cfg.get("lattice_shift", 0.5)
    tol, it = cfg.get("tol", 1e-8), cfg.get("max_iter", 50)
    pair = make_zeta_pair(k, tau, cfg.get("eta_seed"))
    other = model if model2 is None else model2
    s1 = solve_cgo(model, pair.zeta1, tol, it, shift)
    s2 = solve_cgo(other, pair.zeta2, tol, it, shift)
    ek = plane_wave(g, k, -1)
    kn = float(np.linalg.norm(k))

    def pair_q(f):
        if model2 is None:
            return q_bilinear(model, ek, f)
        return alessandrini_pair(model, model2, ek, f)

    def qn(z):
        if model2 is None:
            return q_difference_norm_X(model, ConductivityModel(g, "constant"), z)
        return q_difference_norm_X(model, model2, z)

    terms = []
    for s, z in ((s1, pair.zeta1), (s2, pair.zeta2)):
        den = (1 + kn) * qn(z) * s.wnorm_X
        terms.append(abs(pair_q(s.w)) / den if den > 0 else 0.0)
    c0 = min(model.c0, other.c0)
    den = (c0 ** -2 + kn) ** 2 * s1.wnorm_X * s2.wnorm_X
    terms.append(abs(pair_q(s1.w * s2.w)) / den if den > 0 else 0.0)
    params = {"k": k.tolist(), "tau": tau, "model": model.kind,
              "model2": None if model2 is None else model2.kind}
    rep = _report("remainder-bound", params, terms, np.inf, "derived-sweep",
                  {"terms": ["w1", "w2", "w1w2"], "converged": bool(s1.converged and s2.converged)})
    if budget is None:
        budgets = [headroom * t for t in terms]
        role = "calibration"
    else:
        budgets = [float(b) for b in budget]
        role = "hold"
    ok = all(t <= b or t == 0 for t, b in zip(terms, budgets))
    out = held(rep, max(budgets))
    out.passed = bool(ok and rep.details["converged"])
    out.details["budgets"] = budgets
    out.details["role"] = role
    return out


# -- averaging -------------------------------------------------------------

def _plane_frame(k, n):
    """Orthonormal basis of the plane P swept by eta, plus the companion for theta."""
    k = np.asarray(k, float)
    eye = np.eye(n)
    basis = []
    kn = np.linalg.norm(k)
    ref = [k / kn] if kn > 0 else []
    for e in [eye[j] for j in range(n)]:
        v = e.copy()
        for b in ref + basis:
            v -= (v @ b) * b
        if np.linalg.norm(v) > 1e-6:
            basis.append(v / np.linalg.norm(v))
        if len(basis) == 2:
            break
    return basis


def _theta_for(k, eta, n):
    k = np.asarray(k, float)
    kn = np.linalg.norm(k)
    ref = ([k / kn] if kn > 0 else []) + [eta]
    for e in [np.eye(n)[j] for j in [n - 1] + list(range(n - 1))]:
        v = e.copy()
        for _ in range(2):
            for b in ref:
                v -= (v @ b) * b
        if np.linalg.norm(v) > 0.5:
            return v / np.linalg.norm(v)
    raise ParameterError("no unit vector orthogonal to k and eta")


def tau_nodes(lam: float, per_octave: int = 8) -> np.ndarray:
    """Log-spaced nodes covering [lam, 2 lam], endpoints included."""
    return lam * 2.0 ** (np.arange(per_octave + 1) / per_octave)


def averaging_experiment(model: ConductivityModel, k, lambdas, direction_count: int = 8,
                         per_octave: int = 8, modulus_samples: int = 32,
                         workers: int = 1) -> list:
    """(1/lam) int_S int_lam^{2 lam} ||q||^2_{X^{-1/2}_{zeta_1}} dtau dl for each lam.

    S is the unit circle of a plane orthogonal to k, with arc-length measure
    (trapezoid on equispaced directions). The tau integral is the composite
    trapezoid rule on log-spaced nodes.
    """
    g = model.grid
    k = np.asarray(k, float).reshape(g.n)
    kn = float(np.linalg.norm(k))
    if direction_count < 8:
        raise ParameterError("direction_count must be at least 8")
    if per_octave < 8:
        raise ParameterError("need at least 8 tau nodes per octave")
    e1, e2 = _plane_frame(k, g.n)
    angles = 2 * np.pi * np.arange(direction_count) / direction_count
    etas = [np.cos(a) * e1 + np.sin(a) * e2 for a in angles]
    thetas = [_theta_for(k, eta, g.n) for eta in etas]
    zero = ConductivityModel(g, "constant")
    out = []
    for lam in lambdas:
        lam = float(lam)
        if not lam >= max(kn, 1.0):
            raise ParameterError(f"need lambda >= max(|k|, 1), got {lam}")
        nodes = tau_nodes(lam, per_octave)
        if not nodes[0] > kn:
            raise ParameterError("tau nodes must exceed |k|")

        def one(job):
            eta, th, t = job
            z = pair_from_frame(k, t, eta, th).zeta1
            return q_difference_norm_X(model, zero, z) ** 2

        jobs = [(eta, th, t) for eta, th in zip(etas, thetas) for t in nodes]
        if workers > 1:
            with ThreadPoolExecutor(workers) as ex:
                vals = list(ex.map(one, jobs))
        else:
            vals = [one(j) for j in jobs]
        table = np.asarray(vals).reshape(direction_count, nodes.size)
        per_dir = np.trapezoid(table, nodes, axis=1)
        value = float(per_dir.sum() * (2 * np.pi / direction_count) / lam)
        h = lam ** -0.25
        mod = modulus_of_continuity(model, h, modulus_samples)
        c0, R = model.c0, g.R
        terms = {
            "c0^-8/lambda": c0 ** -8 / lam,
            "lambda^-1/2 R^(n/2) c0^-4": lam ** -0.5 * R ** (g.n / 2) * c0 ** -4,
            "(1+|k|^2) modulus": (1 + kn ** 2) * mod,
        }
        out.append(AveragingRecord(lam, [e.tolist() for e in etas], nodes.tolist(), value,
                                   per_dir.tolist(), mod, terms))
    return out


def averaging_decays(records) -> bool:
    """Averaged value strictly decreasing in lambda (all zero counts as decaying)."""
    recs = sorted(records, key=lambda r: r.lam)
    vals = [r.value for r in recs]
    if all(v == 0 for v in vals):
        return True
    return all(b < a for a, b in zip(vals, vals[1:]))


class FourierModeRecovery(BaseEstimator):
    """``fit(model)`` binds a conductivity model; ``predict(K)`` returns the
    CGO estimates of q_hat at the rows of K (lattice frequencies)."""

    def __init__(self, tau=40.0, tol=1e-8, max_iter=50, lattice_shift=0.5, eta_seed=None,
                 adjust_tau=True):
        self.tau = tau
        self.tol = tol
        self.max_iter = max_iter
        self.lattice_shift = lattice_shift
        self.eta_seed = eta_seed
        self.adjust_tau = adjust_tau

    def _config(self):
        return {"tol": self.tol, "max_iter": self.max_iter, "lattice_shift": self.lattice_shift,
                "eta_seed": self.eta_seed, "adjust_tau": self.adjust_tau}

    def fit(self, model: ConductivityModel, y=None):
        if not isinstance(model, ConductivityModel):
            raise TypeError("FourierModeRecovery.fit expects a ConductivityModel")
        self.model_ = model
        self.records_ = []
        return self

    def predict(self, K) -> np.ndarray:
        K = np.atleast_2d(np.asarray(K, float))
        recs = [recover_fourier_mode(self.model_, k, self.tau, self._config()) for k in K]
        self.records_ = recs
        return np.array([r.q_hat_est for r in recs])

    def score(self, K, y=None) -> float:
        """Negative largest absolute error against the exact lattice modes."""
        self.predict(K)
        return -max(r.error for r in self.records_)
