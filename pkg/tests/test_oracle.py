"""Monte Carlo action oracle: loss surface, optimizer, evaluation sets."""

import math

import numpy as np
import pytest

from actorinfer.actor import ActorParams, closed_form_action, make_cost
from actorinfer.ioutil import derive_rng
from actorinfer.oracle import (
    EvaluationSet,
    OracleConfig,
    OracleConvergenceError,
    build_evaluation_set,
    expected_loss,
    solve_optimal_action,
)

FAST = OracleConfig(n_states=2000, n_responses=2000, seed=3)


def _random_params(rng, family):
    pname = {"quadratic": None, "quadratic_effort": "beta", "asymmetric_quadratic": "alpha"}[family]
    param = None
    if pname == "beta":
        param = float(rng.uniform(0.5, 1.0))
    elif pname == "alpha":
        param = float(rng.uniform(0.15, 0.85))
    return ActorParams(
        float(rng.uniform(0.5, 4.0)), float(rng.uniform(0.08, 0.3)),
        float(rng.uniform(0.08, 0.3)), float(rng.uniform(0.08, 0.3)),
        make_cost(family, param),
    )


def test_oracle_matches_closed_forms():
    rng = derive_rng(20)
    for family in ("quadratic", "quadratic_effort"):
        rel = []
        for _ in range(10):
            p = _random_params(rng, family)
            m = float(rng.uniform(0.5, 3.0))
            a_hat = solve_optimal_action(p, m, FAST)
            a_ref = closed_form_action(p, m)
            rel.append(abs(a_hat - a_ref) / a_ref)
        # 2000-sample banks with stratification: sub-percent accuracy
        assert np.median(rel) < 5e-3, f"{family}: median rel err {np.median(rel):.2e}"


def test_loss_surface_minimum_at_solution():
    p = ActorParams(1.5, 0.15, 0.2, 0.1, make_cost("asymmetric_quadratic", 0.3))
    a_hat = solve_optimal_action(p, 1.5, FAST)
    l0 = expected_loss(p, 1.5, a_hat, FAST)
    for bump in (0.97, 1.03):
        assert expected_loss(p, 1.5, a_hat * bump, FAST) >= l0


def test_asymmetry_shifts_action():
    # alpha < 0.5 penalizes overshoot, so the optimum sits below the
    # symmetric solution; alpha > 0.5 sits above
    base = ActorParams(1.5, 0.15, 0.2, 0.1, make_cost("quadratic"))
    a_sym = closed_form_action(base, 1.5)
    lo = ActorParams(1.5, 0.15, 0.2, 0.1, make_cost("asymmetric_quadratic", 0.25))
    hi = ActorParams(1.5, 0.15, 0.2, 0.1, make_cost("asymmetric_quadratic", 0.75))
    assert solve_optimal_action(lo, 1.5, FAST) < a_sym < solve_optimal_action(hi, 1.5, FAST)


def test_oracle_deterministic():
    p = ActorParams(2.0, 0.2, 0.2, 0.15, make_cost("asymmetric_quadratic", 0.4))
    a1 = solve_optimal_action(p, 2.0, FAST)
    a2 = solve_optimal_action(p, 2.0, FAST)
    assert a1 == a2
    a3 = solve_optimal_action(p, 2.0, OracleConfig(n_states=2000, n_responses=2000, seed=4))
    assert a1 != a3  # different bank seed moves the MC estimate


def test_unstratified_banks_still_converge():
    cfg = OracleConfig(n_states=4000, n_responses=4000, seed=5, stratified=False)
    p = ActorParams(1.5, 0.15, 0.2, 0.1, make_cost("quadratic"))
    a_hat = solve_optimal_action(p, 1.5, cfg)
    a_ref = closed_form_action(p, 1.5)
    assert abs(a_hat - a_ref) / a_ref < 0.05


def test_bracket_edge_raises():
    p = ActorParams(1.5, 0.15, 0.2, 0.1, make_cost("quadratic"))
    cfg = OracleConfig(n_states=100, n_responses=100, bracket=(10.0, 100.0))
    with pytest.raises(OracleConvergenceError):
        solve_optimal_action(p, 1.5, cfg)  # optimum ~1.4 sits below the bracket


def test_config_validation():
    with pytest.raises(ValueError):
        OracleConfig(n_states=1)
    with pytest.raises(ValueError):
        OracleConfig(bracket=(1.0, 0.5))
    with pytest.raises(ValueError):
        OracleConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        expected_loss(
            ActorParams(1, 0.1, 0.1, 0.1, make_cost("quadratic")), 1.0, -1.0, FAST
        )


def test_evaluation_set_round_trip(tmp_path):
    cfg = OracleConfig(n_states=500, n_responses=500, seed=9)
    es = build_evaluation_set(6, "quadratic_effort", cfg=cfg)
    assert len(es) == 6
    assert es.meta["reference"] == "closed_form"
    path = tmp_path / "eval.csv"
    es.write_csv(path)
    es2 = EvaluationSet.read_csv(path)
    np.testing.assert_array_equal(es.a_star, es2.a_star)
    np.testing.assert_array_equal(es.m, es2.m)
    assert es2.cost_family == "quadratic_effort"

    # per-entry seeding: a larger set starts with the same entries
    es3 = build_evaluation_set(8, "quadratic_effort", cfg=cfg)
    np.testing.assert_array_equal(es3.m[:6], es.m)
    np.testing.assert_array_equal(es3.a_star[:6], es.a_star)


def test_evaluation_set_numeric_reference():
    cfg = OracleConfig(n_states=800, n_responses=800, seed=9)
    es = build_evaluation_set(3, "asymmetric_quadratic", cfg=cfg)
    assert es.meta["reference"] == "numeric"
    assert np.all(es.a_star > 0)
    with pytest.raises(ValueError):
        build_evaluation_set(3, "asymmetric_quadratic", cfg=cfg, reference="closed_form")


def test_quadratic_effort_reference_consistency():
    # the numeric path and the closed form must agree on the same entries
    cfg = OracleConfig(n_states=4000, n_responses=4000, seed=11)
    a = build_evaluation_set(4, "quadratic_effort", cfg=cfg, reference="closed_form")
    b = build_evaluation_set(4, "quadratic_effort", cfg=cfg, reference="numeric")
    np.testing.assert_allclose(b.a_star, a.a_star, rtol=5e-3)
