import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cgolab.lattice import GridSpec, ParameterError, SpectralField, laplacian, make_test_function, plane_wave
from cgolab.symbols import (
    A_op,
    B_op,
    CarlemanParams,
    NumericError,
    RegimeError,
    ZetaVector,
    apply_multiplier,
    carleman_parts,
    commutator_AB,
    commutator_closed_form,
    conjugated_laplacian,
    m_inverse_sqrt_d1,
    m_inverse_sqrt_d2,
    m_inverse_sqrt_jet,
    m_power,
    m_symbol,
    norm_X,
    norm_Y,
    p_symbol,
    power_jet,
    x_weight,
)

from conftest import random_field

# frozen: 40-digit evaluation of the closed-form symbol
SQRT2900 = 53.85164807134504031250710491540329556295
SQRT2475 = 4.974937185533099773672399105006030025891
# d^j/dxi_n^j m^{-1/2} at M=4, tau=100, xi'=0, xi_n=7 (mpmath, 40 digits)
JET_ORACLE = [0.01415374177071195387779015554521310256357265,
              0.000004921384692514472341672329341503978574226759,
              0.0000006976947506231688199087560301759130259965606,
              -0.000000002343037890119063160705558076129598803063333,
              -0.0000000003675669755994895389890542089199065439305451]


def test_params_gates():
    p = CarlemanParams(16, 4, 1)
    assert p.gates == {"tau>2MR": True, "tau>8MR": False, "M>cR^2": True}
    with pytest.raises(RegimeError) as e:
        p.require("tau>8MR")
    assert e.value.gate == "tau>8MR"
    assert CarlemanParams(16, 4, 1, c=5).gates["M>cR^2"] is False
    for bad in [(1, 4, 1), (16, 1, 1), (16, 4, 0.5)]:
        with pytest.raises(ParameterError):
            CarlemanParams(*bad)


def test_m_symbol_examples():
    p = CarlemanParams(10, 4)
    assert m_symbol([0, 0, 0], p) == pytest.approx(SQRT2900, rel=1e-14)
    assert m_symbol([10, 0, 0], p) == pytest.approx(20.0, rel=1e-14)
    assert m_symbol([0, 0, 10], p) == pytest.approx(SQRT2900, rel=1e-14)


@given(st.lists(st.floats(-300, 300), min_size=3, max_size=3), st.floats(2, 200), st.floats(1.5, 50))
def test_m_lower_bound(xi, tau, M):
    p = CarlemanParams(tau, M)
    assert m_symbol(xi, p) >= np.sqrt(M) * tau * (1 - 1e-14)


def test_zeta_invariants():
    z = ZetaVector((0, 5, 0), (-0.5, 0, SQRT2475))
    assert z.tau == pytest.approx(5)
    assert z.norm == pytest.approx(np.sqrt(2) * 5)
    assert abs(z.self_dot()) <= 1e-9 * 25
    with pytest.raises(ParameterError):
        ZetaVector((1, 0, 0), (1, 0, 0))
    with pytest.raises(ParameterError):
        ZetaVector((1, 0, 0), (0, 2, 0))


def test_p_symbol_examples():
    z = ZetaVector((0, 5, 0), (-0.5, 0, SQRT2475))
    assert p_symbol([1, 0, 0], z) == pytest.approx(2.0, abs=1e-14)
    assert p_symbol([0, 0, 0], z) == 0
    assert abs(p_symbol(2 * np.asarray(z.im), z)) <= 1e-12


def _mode(grid, z, c=1.0):
    xi = np.asarray(z) * grid.dk
    u = SpectralField(grid, c * plane_wave(grid, xi).values)
    return u, xi


def test_single_mode_norms(grid):
    p = CarlemanParams(16, 4)
    zeta = ZetaVector((0, 0, 16.0), (16.0, 0, 0))
    u, xi = _mode(grid, (3, 1, -2), 0.7)
    c = u.svalues()[grid.index_of(xi)]
    assert norm_Y(u, 0.5, p) == pytest.approx(abs(c) * m_symbol(xi, p) ** 0.5 * grid.freq_cell ** 0.5, rel=1e-12)
    w = zeta.norm + abs(p_symbol(xi, zeta))
    assert norm_X(u, -0.5, zeta) == pytest.approx(abs(c) * w ** -0.5 * grid.freq_cell ** 0.5, rel=1e-12)
    assert norm_Y(u, 0, p) == pytest.approx(u.l2norm(), rel=1e-14)
    assert norm_X(u, 0, zeta) == pytest.approx(u.l2norm(), rel=1e-14)


def test_norm_bridges(rng):
    g = GridSpec(3, 16, 4.0, 1.0)
    p = CarlemanParams(24, 3)
    zeta = ZetaVector((0, 0, 24.0), (0, 24.0, 0))
    for _ in range(50):
        u = random_field(g, rng)
        l2 = u.l2norm()
        assert l2 <= p.M ** -0.25 * p.tau ** -0.5 * norm_Y(u, 0.5, p) * (1 + 1e-12)
        assert norm_Y(u, -0.5, p) <= p.M ** -0.25 * p.tau ** -0.5 * l2 * (1 + 1e-12)
        assert norm_X(u, 0.5, zeta) * norm_X(u, -0.5, zeta) >= l2 ** 2 * (1 - 1e-12)


def test_gradient_bridge_100(rng):
    g = GridSpec(3, 16, 4.0, 1.0)
    p = CarlemanParams(24, 3)
    worst = 0.0
    for _ in range(100):
        v = random_field(g, rng)
        grad2 = -np.vdot(v.values, laplacian(v).values).real * g.cell_volume
        bound = (p.tau ** 0.5 * p.M ** -0.25 + p.M ** 0.25) * norm_Y(v, 0.5, p)
        worst = max(worst, np.sqrt(grad2) / bound)
    assert worst <= 4


def test_dn_bridge_per_mode(grid):
    # |xi_n| m^{-1/2} <= (M^{1/2} / tau) m^{1/2} mode by mode
    p = CarlemanParams(16, 4)
    mg = m_symbol(grid.frequency_vectors(), p)
    xn = grid.frequency_vectors()[..., -1]
    assert np.all(np.abs(xn) * mg ** -0.5 <= np.sqrt(p.M) / p.tau * mg ** 0.5 * (1 + 1e-12))


def test_x_weight_positive(grid):
    zeta = ZetaVector((0, 0, 16.0), (16.0, 0, 0))
    assert x_weight(grid, zeta).min() >= np.sqrt(2) * 16


def test_apply_multiplier(grid, rng):
    p = CarlemanParams(16, 4)
    u = make_test_function(grid, "random-bandlimited", seed=3)
    one = apply_multiplier(u, lambda xi: np.ones(xi.shape[:-1]))
    assert np.allclose(one.svalues(), u.svalues(), rtol=0, atol=0)
    rt = apply_multiplier(apply_multiplier(u, m_power(p, 0.5)), m_power(p, -0.5))
    assert np.abs(rt.svalues() - u.svalues()).max() <= 1e-12 * np.abs(u.svalues()).max()
    v = apply_multiplier(u, m_power(p, -0.5))
    assert norm_Y(v, 0.5, p) == pytest.approx(u.l2norm(), rel=1e-12)
    bad = np.ones(grid.shape)
    bad[1, 2, 3] = np.inf
    with pytest.raises(NumericError, match="xi ="):
        apply_multiplier(u, bad)


def test_conjugated_laplacian_pointwise_oracle():
    # explicit exponentials at tau = 8, M = 2 on a fine 2-d grid
    g = GridSpec(2, 128, 4.0, 1.0)
    p = CarlemanParams(8, 2)
    u = make_test_function(g, "gaussian-bump", {"width": 0.2})
    x = np.broadcast_to(g.coord(1), g.shape)
    phi = p.tau * x + p.M * x ** 2 / 2
    v = SpectralField(g, np.exp(-phi) * u.values)
    direct = -np.exp(phi) * laplacian(v).values
    ours = conjugated_laplacian(u, p).values
    sl = (slice(None, None, 8), slice(None, None, 8))
    mask = np.abs(u.values[sl]) > 1e-6
    rel = np.abs(direct[sl] - ours[sl])[mask] / np.abs(ours).max()
    assert rel.max() <= 1e-6


def test_A_plus_B(grid):
    p = CarlemanParams(16, 4)
    u = make_test_function(grid, "slab-bump")
    a, b, c = A_op(u, p).values, B_op(u, p).values, conjugated_laplacian(u, p).values
    assert np.abs(a + b - c).max() <= 1e-13 * np.abs(c).max()


def test_zero_field(grid):
    p = CarlemanParams(16, 4)
    z = SpectralField(grid, np.zeros(grid.shape))
    for op in (A_op, B_op, commutator_AB, conjugated_laplacian):
        assert np.abs(op(z, p).values).max() == 0


def test_commutator_identities(grid):
    p = CarlemanParams(32, 4)
    u = make_test_function(grid, "gaussian-bump", {"width": 0.25, "center": (0.1, -0.2, 0.05)})
    parts = carleman_parts(u, p)
    h = grid.cell_volume
    pair = np.vdot(u.values, commutator_AB(u, p).values) * h
    closed = commutator_closed_form(u, p)
    assert abs(pair.imag) <= 1e-10 * closed
    assert pair.real == pytest.approx(closed, rel=1e-10)
    lhs = np.sum(np.abs(parts["conj"]) ** 2) * h
    rhs = (np.sum(np.abs(parts["A"]) ** 2) + np.sum(np.abs(parts["B"]) ** 2)) * h + pair.real
    assert lhs == pytest.approx(rhs, rel=1e-10)
    assert closed > 0


def test_support_precondition(grid):
    p = CarlemanParams(16, 4)
    u = make_test_function(grid, "gaussian-bump", {"center": (0, 0, 3.5), "width": 0.3}, check=False)
    with pytest.raises(ParameterError, match="support"):
        conjugated_laplacian(u, p)


def test_jet_orders_1_2_closed_forms():
    p = CarlemanParams(100, 4)
    xn = np.linspace(-300, 300, 41)
    for xp in (0.0, 50.0, 100.0):
        jet = m_inverse_sqrt_jet([xp, 0.0], xn, p, 2)
        d1 = m_inverse_sqrt_d1(xp ** 2, xn, p)
        d2 = m_inverse_sqrt_d2(xp ** 2, xn, p)
        assert np.abs(jet[1] - d1).max() <= 1e-12 * np.abs(d1).max()
        assert np.abs(jet[2] - d2).max() <= 1e-12 * np.abs(d2).max()


def test_jet_against_high_precision_oracle():
    p = CarlemanParams(100, 4)
    jet = m_inverse_sqrt_jet([0.0, 0.0], 7.0, p, 4)
    for j in range(5):
        assert float(jet[j]) == pytest.approx(JET_ORACLE[j], rel=1e-9)


def test_jet_order4_central_difference_step_1e2():
    # 5-point central stencil at step 1e-2, evaluated with 40 digits: the
    # stencil error is O(h^2), float64 rounding would swamp it
    mp.mp.dps = 40
    M, tau = 4, 100

    def g(x):
        x = mp.mpf(x)
        return (((x ** 2 - tau ** 2) ** 2 + tau ** 2 * x ** 2) / M + M * tau ** 2) ** mp.mpf(-0.25)

    h = mp.mpf("0.01")
    x = mp.mpf(7)
    fd = (g(x + 2 * h) - 4 * g(x + h) + 6 * g(x) - 4 * g(x - h) + g(x - 2 * h)) / h ** 4
    jet = m_inverse_sqrt_jet([0.0, 0.0], 7.0, CarlemanParams(tau, M), 4)[4]
    assert float(jet) == pytest.approx(float(fd), rel=1e-4)


def test_jet_order_bounds():
    p = CarlemanParams(100, 4)
    with pytest.raises(ParameterError):
        m_inverse_sqrt_jet([0, 0], 1.0, p, 17)
    assert m_inverse_sqrt_jet([0, 0], 1.0, p, 16).shape == (17,)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.5, 3), min_size=3, max_size=3), st.floats(-0.9, 0.9), st.integers(1, 10))
def test_power_jet_matches_series(a, alpha, k):
    # (a0 + a1 t + a2 t^2)^alpha against a direct mpmath Taylor expansion
    mp.mp.dps = 30
    f = lambda t: (a[0] + a[1] * t + a[2] * t ** 2) ** alpha
    ref = mp.taylor(f, 0, k)
    got = power_jet([np.float64(v) for v in a], alpha, k)
    for r, g_ in zip(ref, got):
        assert float(g_) == pytest.approx(float(r), rel=1e-9, abs=1e-12)
