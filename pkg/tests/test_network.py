"""Amortizer network: initialization, forward pass, checkpoints."""

import json

import numpy as np
import pytest

from actorinfer.actor import ActorParams, make_cost
from actorinfer.ioutil import derive_rng
from actorinfer.network import (
    AmortizerNetwork,
    CostFamilyMismatch,
    demo_params,
    forward,
    forward_batch,
    gradients,
    init_network,
    load_checkpoint,
    relative_errors,
    save_checkpoint,
    weight_count,
)
from actorinfer.oracle import OracleConfig, build_evaluation_set


def test_weight_count():
    # trunk 16-64-16-8 with 3 output heads
    for d in (5, 6):
        expected = (
            16 * d + 16
            + 64 * 16 + 64
            + 16 * 64 + 16
            + 8 * 16 + 8
            + 3 * 8 + 3
        )
        assert weight_count(d) == expected
    assert weight_count(5) == 2387


def test_init_network_shapes_and_determinism():
    n1 = init_network("quadratic", seed=0)
    n2 = init_network("quadratic", seed=0)
    np.testing.assert_array_equal(n1.weights, n2.weights)
    assert n1.input_names == ("mu0", "sigma0", "sigma", "sigma_r", "ln_m")
    assert n1.weights.shape == (weight_count(5),)

    n3 = init_network("quadratic", seed=1)
    assert not np.array_equal(n1.weights, n3.weights)

    ne = init_network("quadratic_effort", seed=0)
    assert "beta" in ne.input_names
    assert ne.weights.shape == (weight_count(6),)


def test_forward_positive_over_input_box():
    rng = derive_rng(30)
    for family in ("quadratic", "quadratic_effort", "asymmetric_quadratic"):
        net = init_network(family, seed=2)
        for _ in range(50):
            p = ActorParams(
                float(rng.uniform(0.1, 5.0)), float(rng.uniform(0.02, 0.5)),
                float(rng.uniform(0.02, 0.5)), float(rng.uniform(0.02, 0.5)),
                make_cost(family, float(rng.uniform(0.2, 0.8))
                          if family != "quadratic" else None),
            )
            a = forward(net, p, float(rng.uniform(0.05, 8.0)))
            assert np.isfinite(a) and a > 0


def test_forward_batch_matches_scalar():
    net = init_network("quadratic_effort", seed=3)
    rng = derive_rng(31)
    n = 40
    mu0 = rng.uniform(0.5, 4.0, n)
    s0 = rng.uniform(0.05, 0.4, n)
    s = rng.uniform(0.05, 0.4, n)
    sr = rng.uniform(0.05, 0.4, n)
    beta = rng.uniform(0.3, 1.0, n)
    m = rng.uniform(0.3, 5.0, n)
    batch = forward_batch(net, mu0, s0, s, sr, beta, m)
    single = np.array([
        forward(
            net,
            ActorParams(mu0[i], s0[i], s[i], sr[i], make_cost("quadratic_effort", beta[i])),
            float(m[i]),
        )
        for i in range(n)
    ])
    np.testing.assert_allclose(batch, single, rtol=1e-12)


def test_forward_validation():
    net = init_network("quadratic", seed=0)
    p_wrong = ActorParams(1.0, 0.1, 0.1, 0.1, make_cost("quadratic_effort", 0.5))
    with pytest.raises(CostFamilyMismatch):
        forward(net, p_wrong, 1.0)
    p = ActorParams(1.0, 0.1, 0.1, 0.1, make_cost("quadratic"))
    with pytest.raises(ValueError):
        forward(net, p, -1.0)
    with pytest.raises(ValueError):
        forward(net, p, float("nan"))


def test_gradients_keys_and_finiteness():
    net = init_network("quadratic", seed=4)
    g = gradients(net, demo_params("quadratic"), 1.3)
    assert set(g) == {"a", "mu0", "sigma0", "sigma", "sigma_r", "m"}
    assert all(np.isfinite(v) for v in g.values())
    assert g["a"] > 0


def test_checkpoint_round_trip(tmp_path):
    net = init_network("asymmetric_quadratic", seed=5).with_fidelity(0.01, note="unit")
    path = tmp_path / "net.json"
    save_checkpoint(net, path)
    net2 = load_checkpoint(path)
    np.testing.assert_array_equal(net.weights, net2.weights)
    np.testing.assert_array_equal(net.centers, net2.centers)
    assert net2.cost_family == "asymmetric_quadratic"
    assert net2.fidelity == 0.01
    assert net2.meta["note"] == "unit"
    # save -> load -> save is byte-stable
    text = path.read_text()
    save_checkpoint(net2, path)
    assert path.read_text() == text


def test_checkpoint_rejects_corruption(tmp_path):
    net = init_network("quadratic", seed=0)
    path = tmp_path / "net.json"
    save_checkpoint(net, path)
    obj = json.loads(path.read_text())

    bad = tmp_path / "bad.json"
    for mutate in (
        lambda o: o.update(format="something-else"),
        lambda o: o.update(version=999),
        lambda o: o.update(widths=[16, 64, 16]),
        lambda o: o.update(weights=o["weights"][:-1]),
    ):
        o = json.loads(json.dumps(obj))
        mutate(o)
        bad.write_text(json.dumps(o))
        with pytest.raises(ValueError):
            load_checkpoint(bad)


def test_relative_errors_definition():
    net = init_network("quadratic", seed=6)
    es = build_evaluation_set(
        5, "quadratic", cfg=OracleConfig(n_states=500, n_responses=500, seed=1)
    )
    rel = relative_errors(net, es)
    a_hat = forward_batch(net, es.mu0, es.sigma0, es.sigma, es.sigma_r, es.cost_param, es.m)
    np.testing.assert_allclose(rel, np.abs(a_hat - es.a_star) / np.abs(es.a_star))
