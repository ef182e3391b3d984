"""Cost families, belief fusion, closed-form actions, and datasets."""

import math

import numpy as np
import pytest

from actorinfer.actor import (
    ActorParams,
    Dataset,
    DatasetFormatError,
    closed_form_action,
    cost,
    make_cost,
    posterior,
    posterior_log_params,
    sample_response,
    simulate_trials,
)
from actorinfer.ioutil import derive_rng


def test_cost_values():
    r = np.array([0.5, 1.0, 2.0, 3.0])
    s = np.array([1.0, 1.0, 1.0, 4.0])
    np.testing.assert_allclose(cost(make_cost("quadratic"), r, s), (r - s) ** 2)

    beta = 0.7
    np.testing.assert_allclose(
        cost(make_cost("quadratic_effort", beta), r, s),
        beta * (s - r) ** 2 + (1 - beta) * r**2,
    )

    alpha = 0.3
    w = 2.0 * np.abs(alpha - (r >= s))
    np.testing.assert_allclose(
        cost(make_cost("asymmetric_quadratic", alpha), r, s), w * (r - s) ** 2
    )


def test_asymmetric_weights_direction():
    # alpha < 0.5: overshoot costs more than an equal undershoot
    spec = make_cost("asymmetric_quadratic", 0.3)
    over = cost(spec, 1.5, 1.0)
    under = cost(spec, 0.5, 1.0)
    assert over > under
    # alpha > 0.5 flips the preference
    spec = make_cost("asymmetric_quadratic", 0.7)
    assert cost(spec, 1.5, 1.0) < cost(spec, 0.5, 1.0)


def test_degenerate_cases_reduce_to_quadratic():
    r = np.linspace(0.2, 3.0, 7)
    s = np.linspace(0.5, 2.0, 7)
    base = cost(make_cost("quadratic"), r, s)
    np.testing.assert_allclose(cost(make_cost("quadratic_effort", 1.0), r, s), base)
    np.testing.assert_allclose(cost(make_cost("asymmetric_quadratic", 0.5), r, s), base)


def test_make_cost_validation():
    with pytest.raises(ValueError):
        make_cost("quadratic_effort", 0.0)
    with pytest.raises(ValueError):
        make_cost("quadratic_effort", 1.5)
    with pytest.raises(ValueError):
        make_cost("asymmetric_quadratic", 1.0)
    with pytest.raises(ValueError):
        make_cost("nonsense")
    with pytest.raises(ValueError):
        make_cost("quadratic_effort")  # parameter required


def test_actor_params_validation():
    q = make_cost("quadratic")
    with pytest.raises(ValueError):
        ActorParams(-1.0, 0.1, 0.1, 0.1, q)
    with pytest.raises(ValueError):
        ActorParams(1.0, 0.0, 0.1, 0.1, q)
    with pytest.raises(ValueError):
        ActorParams(1.0, 0.1, math.inf, 0.1, q)


def test_posterior_fusion_precision_weighting():
    rng = derive_rng(101)
    for _ in range(50):
        mu0 = float(rng.uniform(0.2, 5.0))
        s0 = float(rng.uniform(0.05, 0.6))
        sm = float(rng.uniform(0.05, 0.6))
        ln_m = float(rng.normal())
        ln_mu, sp = posterior_log_params(mu0, s0, sm, ln_m)
        var = 1.0 / (1.0 / s0**2 + 1.0 / sm**2)
        np.testing.assert_allclose(sp**2, var, rtol=1e-12)
        np.testing.assert_allclose(
            ln_mu, var * (math.log(mu0) / s0**2 + ln_m / sm**2), rtol=1e-12
        )
        # the posterior mean lies between prior and measurement in log space
        lo, hi = sorted([math.log(mu0), ln_m])
        assert lo - 1e-12 <= ln_mu <= hi + 1e-12


def test_posterior_limits():
    # tiny measurement noise: belief follows the measurement
    b = posterior(ActorParams(1.5, 0.5, 1e-5, 0.1, make_cost("quadratic")), 2.0)
    np.testing.assert_allclose(b.mu_post, 2.0, rtol=1e-6)
    # tiny prior spread: belief stays at the prior median
    b = posterior(ActorParams(1.5, 1e-5, 0.5, 0.1, make_cost("quadratic")), 2.0)
    np.testing.assert_allclose(b.mu_post, 1.5, rtol=1e-6)


def test_closed_form_quadratic_structure():
    # a* = mu_post * exp((sigma_post^2 - 3 sigma_r^2)/2)
    p = ActorParams(1.5, 0.15, 0.2, 0.1, make_cost("quadratic"))
    b = posterior(p, 1.8)
    a = closed_form_action(p, 1.8)
    np.testing.assert_allclose(
        a, b.mu_post * math.exp(0.5 * (b.sigma_post**2 - 3 * p.sigma_r**2)), rtol=1e-14
    )


def test_closed_form_scale_equivariance():
    # quadratic cost in log-normal coordinates is scale-free: scaling
    # mu0 and m by the same factor scales the action by that factor
    rng = derive_rng(102)
    for _ in range(20):
        p = ActorParams(
            float(rng.uniform(0.5, 3.0)), float(rng.uniform(0.05, 0.4)),
            float(rng.uniform(0.05, 0.4)), float(rng.uniform(0.05, 0.4)),
            make_cost("quadratic"),
        )
        m = float(rng.uniform(0.5, 3.0))
        lam = float(rng.uniform(0.5, 4.0))
        p2 = ActorParams(lam * p.mu0, p.sigma0, p.sigma, p.sigma_r, p.cost)
        np.testing.assert_allclose(
            closed_form_action(p2, lam * m), lam * closed_form_action(p, m), rtol=1e-12
        )


def test_effort_scales_action_by_beta():
    rng = derive_rng(103)
    for _ in range(20):
        mu0 = float(rng.uniform(0.5, 3.0))
        beta = float(rng.uniform(0.1, 1.0))
        pq = ActorParams(mu0, 0.2, 0.25, 0.15, make_cost("quadratic"))
        pe = ActorParams(mu0, 0.2, 0.25, 0.15, make_cost("quadratic_effort", beta))
        m = float(rng.uniform(0.5, 3.0))
        np.testing.assert_allclose(
            closed_form_action(pe, m), beta * closed_form_action(pq, m), rtol=1e-12
        )


def test_no_closed_form_for_asymmetric():
    p = ActorParams(1.0, 0.2, 0.2, 0.2, make_cost("asymmetric_quadratic", 0.3))
    assert closed_form_action(p, 1.0) is None
    with pytest.raises(ValueError):
        simulate_trials(p, [1.0, 2.0], derive_rng(0))


def test_sample_response_is_lognormal_in_action():
    rng = derive_rng(104)
    noise = rng.standard_normal(200_000)
    r = sample_response(2.0, 0.3, noise)
    # median exp(ln a), log-sd sigma_r
    np.testing.assert_allclose(np.median(r), 2.0, rtol=0.01)
    np.testing.assert_allclose(np.std(np.log(r)), 0.3, rtol=0.01)
    with pytest.raises(ValueError):
        sample_response(-1.0, 0.3, noise[:3])


def test_simulate_trials_deterministic():
    p = ActorParams(1.5, 0.15, 0.2, 0.1, make_cost("quadratic"))
    stim = np.array([1.0, 1.5, 2.0])
    d1, m1, a1 = simulate_trials(p, stim, derive_rng(7))
    d2, m2, a2 = simulate_trials(p, stim, derive_rng(7))
    np.testing.assert_array_equal(d1.responses, d2.responses)
    np.testing.assert_array_equal(m1, m2)
    np.testing.assert_array_equal(a1, a2)
    assert np.all(m1 > 0) and np.all(a1 > 0) and np.all(d1.responses > 0)


def test_dataset_csv_round_trip(tmp_path):
    d = Dataset(np.array([1.0, 2.5]), np.array([0.9, 2.7]))
    path = tmp_path / "d.csv"
    d.write_csv(path)
    d2 = Dataset.read_csv(path)
    np.testing.assert_array_equal(d.stimuli, d2.stimuli)
    np.testing.assert_array_equal(d.responses, d2.responses)
    # writing again is byte-identical
    text = path.read_text()
    d2.write_csv(path)
    assert path.read_text() == text


def test_dataset_rejects_bad_input(tmp_path):
    with pytest.raises((ValueError, DatasetFormatError)):
        Dataset(np.array([1.0, -2.0]), np.array([1.0, 1.0]))
    bad = tmp_path / "bad.csv"
    bad.write_text("foo,bar\n1.0,2.0\n")
    with pytest.raises(DatasetFormatError):
        Dataset.read_csv(bad)
    empty = tmp_path / "empty.csv"
    empty.write_text("stimulus,response\n")
    with pytest.raises(DatasetFormatError):
        Dataset.read_csv(empty)
