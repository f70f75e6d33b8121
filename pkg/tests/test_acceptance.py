"""Acceptance criteria 1-12 at their stated tolerances and default parameters.

Each test prints one line ``criterion N: PASS|FAIL ...`` to the terminal,
also under capture. Run alone with ``pytest tests/test_acceptance.py -v``.
"""
import time

import numpy as np
import pytest

from cgolab import carleman as ca
from cgolab.cgo import make_zeta_pair
from cgolab.cli import main
from cgolab.config import load_config
from cgolab.lattice import GridSpec, SpectralField, forward_transform, integrate, inverse_transform
from cgolab.media import ConductivityModel, q_bilinear
from cgolab.suite import VERIFY_TASKS, average_task, cgo_task, recover_task

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def cfg():
    return load_config()


@pytest.fixture
def report(capsys):
    def emit(n, title, ok, detail="", seconds=None, limit=None):
        within = limit is None or seconds <= limit
        status = "PASS" if ok and within else "FAIL"
        t = "" if seconds is None else f" [{seconds:.1f}s" + (f" <= {limit:g}s]" if limit else "]")
        with capsys.disabled():
            print(f"\ncriterion {n}: {status} {title}: {detail}{t}")
        assert ok, detail
        assert within, f"runtime {seconds:.1f}s over {limit}s"
    return emit


def _timed(fn, *a):
    t = time.perf_counter()
    out = fn(*a)
    return out, time.perf_counter() - t


def _worst(reps):
    return max((r.max_ratio for r in reps), default=0.0)


def test_criterion_01_prop41(cfg, report):
    reps, dt = _timed(VERIFY_TASKS["prop41"], cfg, 1)
    ok = all(r.passed for r in reps) and all(r.sample_count == 200 for r in reps)
    report(1, "explicit-constant Carleman", ok,
           f"max ratio {_worst(reps):.4f} <= 1.05 over tau {cfg['estimates']['prop41']['taus']}",
           dt, 120)


def test_criterion_02_energy_identity(cfg, report):
    reps, dt = _timed(VERIFY_TASKS["energy-identity"], cfg, 1)
    ok = all(r.passed and r.budget == 1e-10 for r in reps) and all(r.sample_count == 200 for r in reps)
    worst = {name: max(r.max_ratio for r in reps if r.name == name)
             for name in ("energy-identity", "commutator-closed-form", "commutator-positivity")}
    report(2, "energy identity and commutator positivity", ok,
           ", ".join(f"{k} {v:.2e}" for k, v in worst.items()) + " (tol 1e-10)", dt)


def test_criterion_03_theorem2(cfg, report):
    reps, dt = _timed(VERIFY_TASKS["theorem2"], cfg, 1)
    cal = reps[0]
    holds = [r for r in reps if r.details.get("role") == "hold"]
    ok = all(r.passed for r in reps) and len(holds) == 2
    report(3, "Y^{1/2} estimate calibrate-then-hold", ok,
           f"calibrated {cal.max_ratio:.4f} at M=16 tau=256; holds "
           + ", ".join(f"M={r.params['M']:g} tau={r.params['tau']:g}: {r.max_ratio:.4f}" for r in holds)
           + f" <= {cal.budget:.4f}", dt, 180)


def test_criterion_04_quotient(cfg, report):
    reps, dt = _timed(VERIFY_TASKS["quotient"], cfg, 1)
    stab = reps[-1]
    ok = stab.passed and stab.details["finite"] and stab.details["triples"] >= 10 ** 6
    report(4, "quotient bound", ok,
           f"{stab.details['triples']} triples, finite max {reps[0].max_ratio:.4f}, "
           f"tau-doubling change {stab.max_ratio:.2%} < 20%", dt, 60)


def test_criterion_05_commutator(cfg, report):
    reps, dt = _timed(VERIFY_TASKS["commutator"], cfg, 1)
    band = next(r for r in reps if r.name == "commutator-band")
    two = next(r for r in reps if r.name == "commutator-two-path")
    ok = band.passed and two.passed
    report(5, "commutator with m^{-1/2} scaling", ok,
           f"scaled max {['%.4f' % v for v in band.details['scaled_max']]}, spread {band.max_ratio:.3f} <= 3; "
           f"two-path {two.max_ratio:.1e}", dt, 120)


def test_criterion_06_derivative_l1(cfg, report):
    reps, dt = _timed(VERIFY_TASKS["derivative-l1"], cfg, 1)
    main_reps = [r for r in reps if r.name == "derivative-l1"]
    ok = all(r.passed for r in main_reps) and len(main_reps) == 4
    report(6, "derivative L1 bound at k=8", ok,
           ", ".join(f"(M={r.params['M']:g}, tau={r.params['tau']:g}) {r.max_ratio:.4f}" for r in main_reps)
           + f" <= {main_reps[0].budget:.4f}", dt, 60)


def test_criterion_07_zeta_pairs(report):
    t = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_dot = worst_sum = 0.0
    for _ in range(100):
        k = rng.normal(size=3) * rng.uniform(0, 10)
        tau = float(np.linalg.norm(k) * rng.uniform(1.01, 100) + 1e-3)
        p = make_zeta_pair(k, tau, int(rng.integers(2 ** 31)))
        worst_dot = max(worst_dot, max(abs(z.self_dot()) for z in (p.zeta1, p.zeta2)) / tau ** 2)
        worst_sum = max(worst_sum, np.abs(p.zeta1.vector + p.zeta2.vector + 1j * k).max() / tau)
    ok = worst_dot <= 1e-9 and worst_sum <= 1e-10
    report(7, "zeta-pair algebra", ok,
           f"max |z.z|/tau^2 {worst_dot:.1e}, max |z1+z2+ik|/tau {worst_sum:.1e}", time.perf_counter() - t, 10)


@pytest.fixture(scope="module")
def cgo_run(cfg):
    return _timed(cgo_task, cfg, 1)


def test_criterion_08_cgo_solve(cgo_run, report):
    (rows, reps), dt = cgo_run
    r = rows[0]
    ok = (abs(r["tau"] - 20) <= 20e-3 and r["converged"] and r["iterations"] <= 50
          and r["residual_rel"] <= 1e-8 and r["weak_form_max_ratio"] <= 1e-7)
    report(8, "CGO solve at tau=20", ok,
           f"{r['iterations']} iterations, residual {r['residual_rel']:.2e} <= 1e-8, "
           f"weak form {r['weak_form_max_ratio']:.2e} <= 1e-7", dt, 300)


def test_criterion_09_norm_shadow(cgo_run, report):
    (rows, reps), dt = cgo_run
    shadow = next(r for r in reps if r.name == "cgo-norm-shadow")
    report(9, "norm-bound shadow", shadow.passed,
           f"wnorm/qnorm {['%.4f' % v for v in shadow.details['norm_ratio']]}, "
           f"step ratios {['%.3f' % v for v in shadow.ratios]} <= 1.1")


def test_criterion_10_recovery(cfg, report):
    (recs, reps, _), dt = _timed(recover_task, cfg, 1)
    decay = [r for r in reps if r.name == "recovery-decay"]
    closure = next(r for r in reps if r.name == "recovery-closure")
    kmax = max(np.linalg.norm(r.k) for r in recs)
    ok = all(r.passed for r in reps) and kmax <= 4 * np.pi / cfg.grid().L + 1e-12
    report(10, "recovery decay and closure", ok,
           "; ".join(f"k={r.params['k_index']} ratios {['%.3f' % v for v in r.ratios]}" for r in decay)
           + f"; closure {closure.max_ratio:.1e} <= 1e-9", dt, 600)


def test_criterion_11_averaging(cfg, report):
    (results, reps), dt = _timed(average_task, cfg, 1)
    tent = [r.value for r in results["mollified-tent"]]
    zero = [r.value for r in results["constant"]]
    ok = all(b < a for a, b in zip(tent, tent[1:])) and all(v == 0 for v in zero)
    report(11, "averaging experiment", ok,
           f"tent {['%.4e' % v for v in tent]} strictly decreasing; constant {zero}", dt, 600)


def test_criterion_12_infrastructure(cfg, report, tmp_path):
    t = time.perf_counter()
    rng = np.random.default_rng(12)
    rt = pl = 0.0
    for off in ((0.0, 0.0, 0.0), (0.3, -0.1, 0.05)):
        g = GridSpec(3, 32, 4.0, 1.0, off)
        for _ in range(20):
            f = SpectralField(g, rng.normal(size=g.shape) + 1j * rng.normal(size=g.shape))
            fh = forward_transform(f)
            rt = max(rt, np.abs(inverse_transform(fh).values - f.values).max() / np.abs(f.values).max())
            a = np.sum(np.abs(f.values) ** 2) * g.cell_volume
            pl = max(pl, abs(np.sum(np.abs(fh.values) ** 2) * g.freq_cell / a - 1))
    g = cfg.grid()
    ws = 0.0
    for kind in ("gaussian-log", "mollified-tent"):
        m = ConductivityModel(g, kind, 0.1)
        for u, v in zip(ca.sample_bumps(g, 6, 1), ca.sample_bumps(g, 6, 2)):
            weak = q_bilinear(m, u, v)
            strong = integrate(SpectralField(g, m.potential.strong_values * u.values * v.values))
            ws = max(ws, abs(weak - strong) / abs(strong))
    same = True
    for name in ("a", "b"):
        assert main(["recover", "--out", str(tmp_path / name)]) == 0
    for f in ("recover.csv", "reports.json", "series/error_k1_0_0.dat", "series/error_k4_0_0.dat"):
        same &= (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    ok = rt <= 1e-12 and pl <= 1e-12 and ws <= 1e-8 and same
    report(12, "infrastructure", ok,
           f"round trip {rt:.1e}, Plancherel {pl:.1e}, weak/strong {ws:.1e}, reruns byte-identical {same}",
           time.perf_counter() - t)
