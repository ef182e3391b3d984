"""BehaviorModel: priors, transforms, gradients, collapsed mode."""

import math

import numpy as np
import pytest

from actorinfer.actor import ActorParams, make_cost, simulate_trials
from actorinfer.model import (
    AnalyticSolver,
    BehaviorModel,
    NetworkSolver,
    ParamPrior,
    default_priors,
)
from actorinfer.network import init_network
from actorinfer.regimes import COST_PARAM_BOXES, INFERENCE_MU0


def _toy_dataset(seed=0, n=12):
    rng = np.random.default_rng(seed)
    p = ActorParams(mu0=2.0, sigma0=0.2, sigma=0.15, sigma_r=0.1,
                    cost=make_cost("quadratic", None))
    stim = np.exp(rng.uniform(0.0, 1.5, n))
    data, _, _ = simulate_trials(p, stim, rng)
    return data


# -- priors -----------------------------------------------------------------

def test_param_prior_validation():
    with pytest.raises(ValueError):
        ParamPrior.half_normal(0.0)
    with pytest.raises(ValueError):
        ParamPrior.uniform(2.0, 2.0)
    with pytest.raises(ValueError):
        ParamPrior.uniform(0.5, 0.1)


def test_param_prior_transform_round_trip():
    rng = np.random.default_rng(4)
    hn = ParamPrior.half_normal(0.25)
    un = ParamPrior.uniform(0.1, 5.0)
    for _ in range(50):
        v = float(rng.uniform(0.02, 3.0))
        np.testing.assert_allclose(hn.to_constrained(hn.to_unconstrained(v)), v, rtol=1e-12)
        v = float(rng.uniform(0.11, 4.9))
        np.testing.assert_allclose(un.to_constrained(un.to_unconstrained(v)), v, rtol=1e-9)
    # support edges rejected
    with pytest.raises(ValueError):
        hn.to_unconstrained(-1.0)
    with pytest.raises(ValueError):
        un.to_unconstrained(5.5)
    with pytest.raises(ValueError):
        ParamPrior.fixed(1.0).to_unconstrained(1.0)


def test_default_priors_cover_family_parameters():
    q = default_priors("quadratic")
    assert set(q) == {"mu0", "sigma0", "sigma", "sigma_r"}
    assert q["mu0"].kind == "uniform"
    assert (q["mu0"].a, q["mu0"].b) == (INFERENCE_MU0.lo, INFERENCE_MU0.hi)
    e = default_priors("quadratic_effort")
    assert e["beta"].kind == "uniform"
    assert (e["beta"].a, e["beta"].b) == (
        COST_PARAM_BOXES["quadratic_effort"].lo,
        COST_PARAM_BOXES["quadratic_effort"].hi,
    )
    a = default_priors("asymmetric_quadratic")
    assert "alpha" in a


def test_default_priors_fixed_handling():
    pr = default_priors("quadratic", fixed={"sigma": 0.2})
    assert pr["sigma"].kind == "fixed" and pr["sigma"].a == 0.2
    with pytest.raises(ValueError):
        default_priors("quadratic", fixed={"beta": 0.7})  # not in this family
    with pytest.raises(ValueError):
        default_priors("quadratic", fixed={"nope": 1.0})


# -- solvers ----------------------------------------------------------------

def test_analytic_solver_family_restriction():
    AnalyticSolver("quadratic")
    AnalyticSolver("quadratic_effort")
    with pytest.raises(ValueError):
        AnalyticSolver("asymmetric_quadratic")


def test_network_solver_family_must_match_priors():
    data = _toy_dataset()
    net = init_network("quadratic_effort", seed=0)
    with pytest.raises(ValueError, match="beta"):
        # priors lacking the net's cost parameter are rejected up front
        BehaviorModel(data, default_priors("quadratic"), NetworkSolver(net))


def test_model_prior_set_validation():
    data = _toy_dataset()
    priors = default_priors("quadratic")
    del priors["sigma_r"]
    with pytest.raises(ValueError):
        BehaviorModel(data, priors, AnalyticSolver("quadratic"))
    priors = default_priors("quadratic")
    priors["extra"] = ParamPrior.half_normal(1.0)
    with pytest.raises(ValueError):
        BehaviorModel(data, priors, AnalyticSolver("quadratic"))
    with pytest.raises(ValueError):
        BehaviorModel(
            data, default_priors("quadratic", fixed={"sigma": -0.1}),
            AnalyticSolver("quadratic"),
        )


# -- geometry ---------------------------------------------------------------

def _model(fixed=None, collapsed=False, family="quadratic", seed=0):
    data = _toy_dataset(seed)
    if family == "quadratic":
        solver = AnalyticSolver(family)
    else:
        solver = NetworkSolver(init_network(family, seed=seed))
    return BehaviorModel(
        data, default_priors(family, fixed=fixed), solver,
        marginalize_measurements=collapsed,
    )


def test_dimensions_and_free_names():
    m = _model()
    assert m.free_names == ["mu0", "sigma0", "sigma", "sigma_r"]
    assert m.dim == 4 + 12
    mf = _model(fixed={"sigma": 0.15})
    assert mf.free_names == ["mu0", "sigma0", "sigma_r"]
    assert mf.dim == 3 + 12
    mc = _model(collapsed=True)
    assert mc.n_latent == 0 and mc.dim == 4
    with pytest.raises(ValueError):
        mc.latent_draws(np.zeros((2, 4)))


def test_constrain_unconstrain_identity():
    m = _model(fixed={"sigma": 0.15})
    vals = {"mu0": 2.3, "sigma0": 0.12, "sigma_r": 0.31}
    q = m.unconstrain(vals)
    back = m.constrain(q)
    for k, v in vals.items():
        np.testing.assert_allclose(back[k], v, rtol=1e-10)
    # vectorized path agrees with the scalar one
    rng = np.random.default_rng(8)
    draws = rng.normal(size=(6, m.dim))
    cd = m.constrain_draws(draws)
    for i in range(6):
        row = m.constrain(draws[i])
        np.testing.assert_allclose(cd[i], [row[k] for k in m.free_names], rtol=1e-12)


def test_log_joint_finite_at_initial_positions():
    for seed in range(20):
        m = _model(collapsed=bool(seed % 2))
        q = m.initial_position(np.random.default_rng(seed))
        lp, g = m.log_joint_grad(q)
        assert math.isfinite(lp)
        assert np.all(np.isfinite(g))


def test_gradient_matches_finite_differences():
    for fixed, collapsed in ((None, False), ({"sigma": 0.15}, False), (None, True)):
        m = _model(fixed=fixed, collapsed=collapsed)
        q = m.initial_position(np.random.default_rng(3)) * 0.8
        lp, g = m.log_joint_grad(q)
        h = 1e-6
        for j in range(q.shape[0]):
            qp = q.copy(); qp[j] += h
            qm = q.copy(); qm[j] -= h
            fd = (m.log_joint(qp) - m.log_joint(qm)) / (2 * h)
            np.testing.assert_allclose(g[j], fd, rtol=2e-5, atol=1e-6)


def test_collapsed_mode_is_plug_in_at_likelihood_mode():
    # collapsing substitutes ln m_i = ln s_i - sigma^2 and drops the
    # measurement likelihood; both effects are checkable exactly
    mf = _model(collapsed=False)
    mc = _model(collapsed=True)
    vals = {"mu0": 2.1, "sigma0": 0.18, "sigma": 0.22, "sigma_r": 0.12}
    qc = mc.unconstrain(vals)
    sig = vals["sigma"]
    latents = np.log(mf.data.stimuli) - sig * sig
    qf = np.concatenate([mf.unconstrain(vals), latents])
    T = len(mf.data)
    meas_term = T * (-math.log(sig) - 0.5 * math.log(2 * math.pi)) - 0.5 * T * sig * sig
    np.testing.assert_allclose(
        mf.log_joint(qf) - mc.log_joint(qc), meas_term, rtol=1e-10
    )


def test_params_at_reconstructs_actor():
    m = _model(fixed={"sigma": 0.15}, family="quadratic")
    vals = {"mu0": 2.3, "sigma0": 0.12, "sigma_r": 0.31}
    q = np.concatenate([m.unconstrain(vals), np.zeros(m.n_latent)])
    p = m.params_at(q)
    np.testing.assert_allclose(p.mu0, 2.3, rtol=1e-9)
    np.testing.assert_allclose(p.sigma, 0.15)
    assert p.cost.family == "quadratic"


def test_initial_position_respects_support():
    m = _model()
    for seed in range(30):
        q = m.initial_position(np.random.default_rng(seed))
        vals = m.constrain(q)
        assert INFERENCE_MU0.lo < vals["mu0"] < INFERENCE_MU0.hi
        for k in ("sigma0", "sigma", "sigma_r"):
            assert vals[k] > 0
