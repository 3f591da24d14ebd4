import numpy as np
import pytest

from sirsb import verify
from sirsb.model import State, default_parameters, dfe
from sirsb.operators import make_grid
from sirsb.presets import load_preset
from sirsb.solver import SolverConfig, simulate


@pytest.fixture(scope="module")
def extinction_cfg():
    return load_preset("extinction")


@pytest.fixture(scope="module")
def persistence_cfg():
    return load_preset("persistence")


def test_report_verdict_requires_every_criterion():
    rep = verify.ExperimentReport("x", {}, 0.5, verify.FAIL, criteria={"a": True, "b": False})
    assert verify._finish(rep, 0.0).verdict == verify.FAIL
    rep.criteria["b"] = True
    assert verify._finish(rep, 0.0).passed
    empty = verify.ExperimentReport("y", {}, 0.5, verify.FAIL)
    assert verify._finish(empty, 0.0).verdict == verify.FAIL


def test_random_initials_bounded_and_deterministic():
    p = default_parameters(b=2.0)
    grid = make_grid(32)
    a = verify.random_initials(p, grid, np.random.default_rng(3))
    b = verify.random_initials(p, grid, np.random.default_rng(3))
    assert len(a) == 8
    for s, t in zip(a, b):
        assert np.array_equal(s.as_array(), t.as_array())
        assert s.is_nonnegative() and s.as_array().max() <= 5 * p.m_star


def test_extinction_trivial_and_disease_free_initials(extinction_cfg):
    p = extinction_cfg.parameters
    n = 32
    cfg = SolverConfig(t_end=200.0, grid=make_grid(n))
    rng = np.random.default_rng(0)
    inits = [dfe(p, n), State(rng.uniform(0, 3, n), np.zeros(n), rng.uniform(0, 3, n), np.zeros(n))]
    assert verify.experiment_extinction(p, inits, cfg).passed


def test_extinction_precondition(persistence_cfg):
    rep = verify.experiment_extinction(persistence_cfg.parameters, config=SolverConfig(t_end=1.0, grid=make_grid(16)))
    assert rep.verdict == verify.INDETERMINATE
    assert rep.notes[0].startswith("precondition R0 < 1 violated")


def test_persistence_precondition(extinction_cfg):
    rep = verify.experiment_persistence(extinction_cfg.parameters, config=SolverConfig(t_end=1.0, grid=make_grid(16)))
    assert rep.verdict == verify.INDETERMINATE
    p = load_preset("persistence").parameters.replace(g=2.0, K_B=100.0)
    rep = verify.experiment_persistence(p, config=SolverConfig(t_end=1.0, grid=make_grid(16)))
    assert rep.verdict == verify.INDETERMINATE


def test_extinction_and_persistence_exclusive(extinction_cfg, persistence_cfg):
    short = SolverConfig(t_end=1.0, grid=make_grid(16))
    for cfg in (extinction_cfg, persistence_cfg):
        a = verify.experiment_extinction(cfg.parameters, config=short)
        b = verify.experiment_persistence(cfg.parameters, config=short)
        assert (a.verdict == verify.INDETERMINATE) != (b.verdict == verify.INDETERMINATE)


def test_persistence_floors_monotone_in_window(persistence_cfg):
    p = persistence_cfg.parameters
    n = 32
    ini = State(np.full(n, p.m_star), np.zeros(n), np.zeros(n), np.full(n, 0.1))
    traj = simulate(ini, p, SolverConfig(t_end=100.0, grid=make_grid(n), stop_at_steady=False))
    prev = None
    for frac in (0.0, 0.2, 0.5, 0.8, 0.95):
        fl = verify.late_window_floors(traj, frac)
        if prev is not None:
            assert all(fl[k] >= prev[k] for k in fl)
        prev = fl
    assert min(prev.values()) > 0


def test_persistence_rejects_disease_free_initials(persistence_cfg):
    p = persistence_cfg.parameters
    with pytest.raises(ValueError):
        verify.experiment_persistence(p, [dfe(p, 16)], SolverConfig(t_end=1.0, grid=make_grid(16)))


def test_scalar_attractor_examples():
    n = 64
    grid = make_grid(n)
    cfg = SolverConfig(t_end=60.0, grid=grid)
    x = grid.centers
    inits = [np.zeros(n), np.full(n, 10.0), 3.0 * x]
    rep = verify.experiment_scalar_attractor(0.1, 0.0, 3.0, 2.0, inits, cfg)
    assert rep.passed and rep.metrics["closed_form_error"] < 1e-8
    rep = verify.experiment_scalar_attractor(0.1, 0.5, 1.0, 1.0, inits, cfg)
    assert rep.passed and "closed_form" not in rep.criteria
    assert rep.criteria["comparison_order"]


def test_population_law_examples():
    p = default_parameters()
    n = 32
    grid = make_grid(n)
    rng = np.random.default_rng(1)
    s = rng.uniform(0, 0.5, n)
    flat = State(p.m_star - s, s, np.zeros(n), rng.uniform(0, 1, n))  # V = m* exactly
    rep = verify.experiment_population_law(p, flat, SolverConfig(t_end=5.0, grid=grid))
    assert rep.passed and rep.criteria["stays_at_m_star"]
    generic = State(*(rng.uniform(0, 2, n) for _ in range(4)))
    rep = verify.experiment_population_law(p, generic, SolverConfig(t_end=20.0, grid=grid))
    assert rep.passed
    assert abs(rep.metrics["fitted_rate"] - p.d) <= 0.05 * p.d
    rep = verify.experiment_population_law(p.replace(D2=0.3), generic, SolverConfig(t_end=1.0, grid=grid))
    assert rep.verdict == verify.INDETERMINATE


def test_apriori_bound_examples():
    p = default_parameters()
    n = 16
    zero = State(*(np.zeros(n) for _ in range(4)))
    assert verify.experiment_apriori_bound(p, zero, 1.0).passed
    ini = State(*(np.random.default_rng(2).uniform(0, 3, n) for _ in range(4)))
    rep = verify.experiment_apriori_bound(p, ini, 1.0)
    assert rep.passed and rep.metrics["ratio"] <= 1


def test_classify_thresholds():
    n = 4
    z = np.zeros(n)
    assert verify.classify(State(np.ones(n), z, z, np.full(n, 1e-5))) == "extinct"
    assert verify.classify(State(np.ones(n), np.full(n, 0.5), z, z)) == "persistent"
    assert verify.classify(State(np.ones(n), np.full(n, 1e-3), z, z)) == "indeterminate"


def test_sample_parameters_and_common_D():
    rng = np.random.default_rng(0)
    p = verify.sample_parameters(default_parameters(), {"D": (0.01, 1.0), "beta1": (0.5, 0.6)}, rng)
    assert p.D1 == p.D2 == p.D3 and 0.01 <= p.D1 <= 1.0 and 0.5 <= p.beta1 <= 0.6
    with pytest.raises(ValueError):
        verify.sample_parameters(default_parameters(), {"beta1": (-1.0, 1.0)}, rng)


def test_sweep_records_errors_and_is_deterministic():
    grid = make_grid(16)
    cfg = SolverConfig(t_end=50.0, grid=grid)
    ranges = {"beta1": (0.1, 4.0), "beta2": (0.1, 4.0)}
    a = verify.sweep_threshold(ranges, 6, grid, cfg, seed=5)
    b = verify.sweep_threshold(ranges, 6, grid, cfg, seed=5, workers=2)
    assert [r["r0_pde"] for r in a] == [r["r0_pde"] for r in b]
    assert all(verify.sign_agrees(r) is not False for r in a)
    bad = dict(a[0], r0_pde=float("nan"))
    assert verify.sign_agrees(bad) is None


def test_sweep_outcomes_match_threshold():
    grid = make_grid(16)
    cfg = SolverConfig(t_end=400.0, grid=grid)
    rows = verify.sweep_threshold({"beta1": (0.05, 6.0), "beta2": (0.05, 6.0)}, 12, grid, cfg, seed=1)
    for r in rows:
        if r["r0_pde"] < 0.9:
            assert r["outcome"] == "extinct"
        elif r["r0_pde"] > 1.1 and r["params"].g < r["params"].delta:
            assert r["outcome"] == "persistent"
