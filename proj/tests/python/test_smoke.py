import math

import numpy as np
import pytest

import pprs_lab as lab


def test_objective_evaluation_and_depth():
    obj = lab.linf_objective(4, 2.0, 1.0)
    assert obj.param_dim == 4
    # center is (R/sqrt(d)) * ones, so f(0) = L * R/sqrt(d) * ... = L * 0.5
    assert obj.value(np.zeros(4)) == pytest.approx(1.0)
    g = obj.gradient(np.zeros(4))
    assert g.shape == (4,)
    assert np.all(np.isfinite(g))

    chained = lab.chain_partition(obj, 9)
    assert chained.depth == 9
    theta = np.array([0.3, -0.1, 0.2, 0.05])
    assert chained.value(theta) == pytest.approx(obj.value(theta))


def test_fig1_matches_closed_form():
    obj = lab.fig1_objective()
    theta = np.array([math.pi, 2.0])
    expected = math.log1p(math.exp(math.pi / 2)) + abs(
        math.pi / 2 - 2.0 * math.sin(math.pi)
    )
    assert obj.value(theta) == pytest.approx(expected, rel=1e-12)


def test_smoothed_gradient_accounting_and_accuracy():
    obj = lab.quadratic_objective(6, 2.0)
    theta = np.full(6, 0.25)
    est = lab.smoothed_gradient(obj, theta, gamma=1e-6, samples=64, seed=3)
    assert est.elapsed == 2 * 64
    chained = lab.chain_partition(obj, 5)
    est_piped = lab.smoothed_gradient(
        chained, theta, gamma=1e-6, samples=64, seed=3, pipeline_depth=5
    )
    assert est_piped.elapsed == 2 * (64 + 5 - 1)
    # tiny radius: the estimate hugs the exact gradient beta * (theta - c)
    exact = obj.gradient(theta)
    assert np.linalg.norm(est.g - exact) < 1e-4


def test_rate_presets():
    sched = lab.lambda_sequence(3)
    assert sched.lambda_[2] == pytest.approx((1 + math.sqrt(5)) / 2)
    assert sched.mu[0] == 0.0

    p3 = lab.theorem3_params(1.0, 1.0, 16, 99)
    assert p3.samples == 25
    assert p3.eta == pytest.approx(0.005)
    assert lab.theorem3_error_bound(1.0, 1.0, 16, 99, 25) == pytest.approx(0.07)

    p4 = lab.theorem4_params(1.0, 0.5, 4, 0.1, 0.3)
    assert p4.samples == 200
    assert p4.mu == 0.0
    with pytest.raises(ValueError, match="InvalidEpsilon"):
        lab.theorem4_params(1.0, 0.5, 4, 0.1, 3.5)


def test_optimizer_runs_are_deterministic():
    obj = lab.chain_partition(lab.linf_objective(4, 1.0, 1.0), 9)
    runs = [
        lab.pprs_run(
            obj, iterations=7, samples=5, eta=0.05, gamma=0.01, seed=11, delta=9
        )
        for _ in range(2)
    ]
    assert len(runs[0].history) == 8
    assert runs[0].total_time == 7 * 2 * (5 + 9 - 1)
    assert not runs[0].diverged
    assert runs[0].best_loss <= runs[0].history[0].loss
    assert runs[0].best_loss == runs[1].best_loss
    assert np.array_equal(runs[0].final_point, runs[1].final_point)

    # exact-gradient one-step optimum on the quadratic at eta = 1/beta
    quad = lab.quadratic_objective(5, 2.0)
    rec = lab.gd_run(quad, eta=0.5, iterations=1)
    assert rec.final_loss == pytest.approx(0.0, abs=1e-28)
    agd = lab.agd_run(quad, eta=0.25, mu=0.0, iterations=40)
    assert agd.best_loss < 1e-8


def test_clarke_min_norm_vanishes_at_kink():
    obj = lab.linf_objective(1, 1.0)
    est = lab.clarke_min_norm(obj, np.zeros(1), r=0.1, n_samples=64, seed=5)
    assert est.min_norm <= 1e-8
    assert sum(est.weights) == pytest.approx(1.0)


def test_schedules():
    sched = lab.make_schedule("bubbling", 4, k=4)
    assert sched.makespan == 2 * (4 + 4 - 1)
    assert lab.validate_schedule(sched) is None
    assert len(lab.utilization(sched)) == 4
    csv = lab.schedule_csv(sched)
    assert csv.splitlines()[0] == "unit,slot,kind,microbatch"
    assert lab.make_schedule("nse", 3).makespan == 6
    with pytest.raises(ValueError, match="UnknownMode"):
        lab.make_schedule("zigzag", 3)


def test_experiment_round_trip():
    cfg = lab.parse_config_text(
        """
        objective.name = quadratic
        objective.d = 4
        objective.stages = 2
        run.algorithms = gd, pprs
        run.iterations = 30
        run.seeds = 1, 2
        grid.lr = 0.25
        grid.gamma = 0.01
        grid.k = 2
        """
    )
    assert cfg.objective_name == "quadratic"
    assert cfg.seeds == [1, 2]
    result = lab.run_experiment(cfg)
    assert len(result.runs) == 4  # gd: 2 seeds, pprs: 1 grid point x 2 seeds
    csv = lab.records_csv(result)
    header = csv.splitlines()[0]
    assert header == (
        "run_id,algorithm,delta,K,gamma,eta,seed,iteration,"
        "simulated_time,loss,best_loss,grad_est_norm,clarke_min_norm,diverged"
    )
    assert "best per algorithm:" in lab.summary_text(result)
    assert all(row.mean_best_loss >= 0 for row in result.best)


def test_error_translation():
    net = lab.make_desk_net(6, 8, 4, 1)
    with pytest.raises(ValueError, match="LabelOutOfRange"):
        lab.margin_attack_objective(net, np.zeros(6), 7, 300.0)
    with pytest.raises(ValueError, match="ConfigParseError"):
        lab.parse_config_text("objective.name quadratic")


def test_time_to_reach():
    assert lab.time_to_reach([(0, 1.0), (10, 0.2)], 0.3) == 10
    assert lab.time_to_reach([(0, 1.0)], 0.3) is None
