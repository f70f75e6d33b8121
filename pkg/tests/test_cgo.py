import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from cgolab.cgo import (
    CgoSolver,
    CharacteristicCollision,
    choose_tau,
    faddeev_apply,
    faddeev_operator,
    make_zeta_pair,
    min_symbol,
    pair_from_frame,
    rotation_to_en,
    shifted_grid,
    solve_cgo,
    verify_solution,
)
from cgolab.lattice import GridSpec, ParameterError, SpectralField
from cgolab.media import ConductivityModel
from cgolab.symbols import ZetaVector, p_symbol

SQRT2475 = 4.974937185533100


def _dot(a, b):
    return np.sum(np.asarray(a) * np.asarray(b))


def test_worked_pair():
    p = pair_from_frame((1.0, 0, 0), 5.0, np.array([0, 1.0, 0]), np.array([0, 0, 1.0]))
    assert np.allclose(p.zeta1.re, (0, 5, 0))
    assert np.allclose(p.zeta1.im, (-0.5, 0, SQRT2475), atol=1e-15)
    assert p.zeta1.self_dot() == pytest.approx(0, abs=1e-12)
    v = p.zeta1.vector + p.zeta2.vector
    assert np.allclose(v, (-1j, 0, 0))
    # symbol value at xi = e_1
    assert p_symbol((1.0, 0, 0), p.zeta1) == pytest.approx(2.0)


def test_default_frame_matches_worked_pair():
    p = make_zeta_pair((1.0, 0, 0), 5.0)
    assert np.allclose(p.eta, (0, 1, 0)) and np.allclose(p.theta, (0, 0, 1))


def test_pair_algebra_100_triples():
    rng = np.random.default_rng(7)
    for i in range(100):
        n = int(rng.integers(3, 6))
        k = rng.normal(size=n) * rng.uniform(0, 5)
        tau = np.linalg.norm(k) * rng.uniform(1.01, 50) + 1e-3
        p = make_zeta_pair(k, tau, int(rng.integers(1e6)))
        eta, theta = np.array(p.eta), np.array(p.theta)
        for a, b in ((eta, k), (theta, k), (eta, theta)):
            assert abs(a @ b) <= 1e-12 * max(1, np.linalg.norm(b))
        assert abs(eta @ eta - 1) <= 1e-12 and abs(theta @ theta - 1) <= 1e-12
        for z in (p.zeta1, p.zeta2):
            assert abs(z.self_dot()) <= 1e-9 * tau ** 2
        assert np.abs(p.zeta1.vector + p.zeta2.vector + 1j * k).max() <= 1e-10 * tau


def test_phase_identity(grid):
    k = np.array([2, -1, 0]) * grid.dk
    p = make_zeta_pair(k, 20.0, 3)
    x = np.stack(np.broadcast_arrays(*grid.coords()), -1)
    e1 = np.exp(x @ p.zeta1.vector)
    e2 = np.exp(x @ p.zeta2.vector)
    ref = np.exp(-1j * (x @ k))
    assert np.abs(e1 * e2 - ref).max() <= 1e-9


def test_pair_errors():
    with pytest.raises(ParameterError):
        make_zeta_pair((3.0, 0, 0), 2.0)
    with pytest.raises(ParameterError):
        make_zeta_pair((1.0,), 5.0)
    with pytest.raises(ParameterError):
        make_zeta_pair((1.0, 0), 5.0)
    assert abs(make_zeta_pair((0.0, 0), 5.0).zeta1.self_dot()) < 1e-12
    p = make_zeta_pair((0.0, 0, 0), 5.0)
    assert abs(p.zeta1.self_dot()) < 1e-12


def test_eta_seed_vector():
    p = make_zeta_pair((1.0, 0, 0), 5.0, (1.0, 1.0, 1.0))
    assert np.allclose(p.eta, np.array([0, 1, 1]) / np.sqrt(2))


def test_rotation_identity_and_axes():
    assert np.allclose(rotation_to_en((0, 0, 2.0)), np.eye(3), atol=1e-15)
    T = rotation_to_en((1.0, 0, 0))
    assert np.allclose(T @ np.array([0, 0, 1.0]), (1, 0, 0))
    assert np.allclose(T.T @ T, np.eye(3), atol=1e-12)
    with pytest.raises(ParameterError):
        rotation_to_en((0, 0, 0))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2 ** 31))
def test_rotation_properties(n, seed):
    v = np.random.default_rng(seed).normal(size=n)
    if np.linalg.norm(v) < 1e-6:
        return
    T = rotation_to_en(v)
    assert np.abs(T.T @ T - np.eye(n)).max() <= 1e-12
    assert abs(np.linalg.det(T) - 1) <= 1e-12
    assert np.allclose(T[:, -1], v / np.linalg.norm(v), atol=1e-12)


def test_faddeev_round_trip(grid, rng):
    gs = shifted_grid(grid)
    zeta = make_zeta_pair(np.array([1, 0, 0]) * grid.dk, 20.0).zeta1
    f = SpectralField(gs, rng.normal(size=gs.shape) + 1j * rng.normal(size=gs.shape))
    back = faddeev_apply(faddeev_operator(f, zeta), zeta)
    assert np.abs(back.pvalues() - f.pvalues()).max() <= 1e-11 * np.abs(f.pvalues()).max()
    zero = SpectralField(gs, np.zeros(gs.shape, complex))
    assert np.all(faddeev_apply(zero, zeta).pvalues() == 0)


def test_faddeev_single_mode(grid):
    gs = shifted_grid(grid)
    zeta = make_zeta_pair(np.zeros(3), 20.0).zeta1
    c = np.zeros(gs.shape, complex)
    c[3, 5, 7] = 1.0
    f = SpectralField(gs, c, "spectral")
    xi = gs.frequency_vectors()[3, 5, 7]
    out = faddeev_apply(f, zeta).svalues()[3, 5, 7]
    assert out == pytest.approx(1 / (xi @ xi - 2j * (zeta.vector @ xi)), rel=1e-12)


def test_characteristic_collision(grid, gauss_model):
    zeta = make_zeta_pair(np.zeros(3), 20.0).zeta1
    f = SpectralField(grid, np.ones(grid.shape, complex))
    with pytest.raises(CharacteristicCollision) as e:
        faddeev_apply(f, zeta)
    assert "perturb tau" in str(e.value)
    with pytest.raises(CharacteristicCollision):
        solve_cgo(gauss_model, zeta, lattice_shift=0.0)


def test_choose_tau_keeps_good_tau(grid):
    k = np.array([1, 0, 0]) * grid.dk
    t, s = choose_tau(k, 20.0, grid)
    assert t == 20.0 and s >= 1e-6 * 400
    t2, _ = choose_tau(k, 20.0, grid, floor=1e9)
    assert abs(t2 / 20 - 1) <= 1e-3


def test_constant_model_one_iteration(const_model):
    zeta = make_zeta_pair(np.zeros(3), 20.0).zeta1
    sol = solve_cgo(const_model, zeta)
    assert sol.converged and sol.iterations == 1
    assert np.all(sol.w.pvalues() == 0)
    rep = verify_solution(sol, const_model, 5)
    assert rep["max_defect"] == 0 and rep["passed"]


@pytest.fixture(scope="module")
def converged(request):
    g = GridSpec(3, 64, 4.0, 1.0)
    model = ConductivityModel(g, "gaussian-log", 0.1)
    zeta = make_zeta_pair(np.array([1, 0, 0]) * g.dk, 20.0).zeta1
    return model, zeta, solve_cgo(model, zeta, 1e-8, 50)


def test_gaussian_converges(converged):
    model, zeta, sol = converged
    assert sol.converged and sol.iterations <= 50
    assert sol.residual_X <= 1e-8 * sol.qnorm_X
    assert sol.min_symbol > 0
    assert all(c < 1 for c in sol.history["contraction"])
    rep = verify_solution(sol, model, 20, 1e-7)
    assert rep["passed"], rep["max_ratio"]
    d = sol.diagnostics()
    assert d["tau"] == 20.0 and len(d["residual_history"]) == sol.iterations


def test_truncated_iteration_negative_control(converged):
    model, zeta, sol = converged
    short = solve_cgo(model, zeta, 1e-8, 2)
    assert not short.converged and short.iterations == 2
    a = verify_solution(short, model, 10, 1e-7)
    b = verify_solution(sol, model, 10, 1e-7)
    assert a["max_defect"] > 10 * b["max_defect"]
    assert not a["passed"]


def test_cgo_solver_estimator(gauss_model):
    est = CgoSolver(tau=20.0, k=np.array([1.0, 0, 0]) * gauss_model.grid.dk)
    assert est.fit(gauss_model) is est
    assert est.converged_ and est.score(gauss_model) >= -1e-8
    c = clone(est)
    assert c.get_params()["tau"] == 20.0 and not hasattr(c, "solution_")
    with pytest.raises(TypeError):
        est.fit("not a model")
    with pytest.raises(ParameterError):
        CgoSolver(branch=3).fit(gauss_model)
    w2 = CgoSolver(tau=20.0, branch=2).transform(gauss_model)
    assert isinstance(w2, SpectralField)
