"""Posterior sampling pipeline: draws, summaries, predictive simulation."""

import numpy as np
import pytest

from actorinfer.actor import ActorParams, make_cost, simulate_trials
from actorinfer.ioutil import derive_rng
from actorinfer.model import AnalyticSolver, NetworkSolver, default_priors
from actorinfer.network import init_network
from actorinfer.posterior import (
    PosteriorSamples,
    SamplerConfig,
    band_csv_text,
    posterior_predictive,
    predictive_band,
    read_posterior_csv,
    sample_posterior,
)
from actorinfer.regimes import draw_params, params_from_arrays

TRUTH = ActorParams(2.5, 0.2, 0.15, 0.15, cost=make_cost("quadratic", None))


def _dataset(seed=9, trials=40):
    rng = np.random.default_rng(seed)
    stim = np.tile(np.geomspace(1.0, 7.0, 5), trials // 5)
    data, _, _ = simulate_trials(TRUTH, stim, rng)
    return data


@pytest.fixture(scope="module")
def fit():
    cfg = SamplerConfig(n_chains=2, n_warmup=600, n_draws=800, seed=42)
    return sample_posterior(
        _dataset(), default_priors("quadratic", fixed={"sigma": 0.15}),
        AnalyticSolver("quadratic"), cfg,
    )


def test_sampler_config_validation():
    with pytest.raises(ValueError):
        SamplerConfig(n_chains=0)
    with pytest.raises(ValueError):
        SamplerConfig(n_draws=0)
    with pytest.raises(ValueError):
        SamplerConfig(target_accept=1.0)
    with pytest.raises(ValueError):
        SamplerConfig(max_tree_depth=0)


def test_fit_shapes_and_names(fit):
    assert fit.param_names == ["mu0", "sigma0", "sigma_r"]
    assert fit.draws.shape == (2, 800, 3)
    assert fit.fixed == {"sigma": 0.15}
    assert fit.meta["solver"] == "analytic"
    assert fit.meta["n_trials"] == 40
    np.testing.assert_array_equal(fit.get("mu0"), fit.draws[:, :, 0])
    assert fit.flat("mu0").shape == (1600,)


def test_fit_recovers_truth_region(fit):
    # well-identified dataset: posterior concentrates near the truth
    assert abs(fit.flat("mu0").mean() - TRUTH.mu0) < 0.3
    assert abs(fit.flat("sigma0").mean() - TRUTH.sigma0) < 0.1
    assert abs(fit.flat("sigma_r").mean() - TRUTH.sigma_r) < 0.1
    s = fit.summary()
    for name in fit.param_names:
        assert s[name]["q3"] < s[name]["median"] < s[name]["q97"]
        assert s[name]["sd"] > 0


def test_value_columns_honors_fixed(fit):
    mu0, sig = fit.value_columns(["mu0", "sigma"])
    assert mu0.shape == sig.shape == (1600,)
    assert np.all(sig == 0.15)
    with pytest.raises(KeyError):
        fit.value_columns(["beta"])
    sub = fit.value_columns(["mu0"], idx=np.array([0, 5]))[0]
    assert sub.shape == (2,)


def test_convergence_warning_thresholds(fit):
    # thresholds far beyond reality never trigger; absurd ones always do
    assert fit.convergence_warnings(rhat_max=10.0, min_ess=1.0) == []
    warns = fit.convergence_warnings(rhat_max=1.0, min_ess=1e12)
    assert any("rhat" in w for w in warns)
    assert any("ess_bulk" in w for w in warns)


def test_csv_round_trip(tmp_path, fit):
    p = tmp_path / "post.csv"
    fit.write(p)
    names, draws = read_posterior_csv(p)
    assert names == fit.param_names
    np.testing.assert_allclose(draws, fit.draws, rtol=0, atol=1e-12)
    meta = (tmp_path / "post.csv.json").read_text()
    assert "diagnostics" in meta


def test_sampling_is_deterministic():
    cfg = SamplerConfig(n_chains=2, n_warmup=150, n_draws=150, seed=3)
    data = _dataset()
    pri = default_priors("quadratic", fixed={"sigma": 0.15})
    a = sample_posterior(data, pri, AnalyticSolver("quadratic"), cfg)
    b = sample_posterior(data, pri, AnalyticSolver("quadratic"), cfg)
    np.testing.assert_array_equal(a.draws, b.draws)


def test_keep_latents():
    cfg = SamplerConfig(n_chains=2, n_warmup=100, n_draws=100, seed=5)
    data = _dataset(trials=10)
    fit = sample_posterior(
        data, default_priors("quadratic", fixed={"sigma": 0.15}),
        AnalyticSolver("quadratic"), cfg, keep_latents=True,
    )
    assert fit.latent_lnm.shape == (2, 100, 10)
    # latent measurements track the observed stimuli within a few sigma
    med = np.median(fit.latent_lnm, axis=(0, 1))
    assert np.all(np.abs(med - np.log(data.stimuli)) < 5 * 0.15)


def test_poor_fidelity_network_warns():
    net = init_network("quadratic", seed=0).with_fidelity(0.25, backend="numpy")
    cfg = SamplerConfig(n_chains=2, n_warmup=50, n_draws=50, seed=1)
    with pytest.warns(UserWarning, match="fidelity"):
        sample_posterior(
            _dataset(trials=5), default_priors("quadratic"),
            NetworkSolver(net), cfg,
        )


def test_posterior_predictive(fit):
    stim = np.array([1.0, 2.5, 6.0])
    rng = derive_rng(0, 0x93D1)
    resp = posterior_predictive(fit, stim, AnalyticSolver("quadratic"), rng, max_draws=400)
    assert resp.shape == (400, 3)
    assert np.all(resp > 0)
    band = predictive_band(resp, stim)
    assert np.all(band["lo94"] < band["mean"]) and np.all(band["mean"] < band["hi94"])
    text = band_csv_text(band)
    assert text.splitlines()[0] == "stimulus,mean,lo94,hi94"
    # shrinkage toward the prior median: mean response above the smallest
    # stimulus, below the largest
    assert band["mean"][0] > stim[0]
    assert band["mean"][2] < stim[2]
    with pytest.raises(ValueError):
        posterior_predictive(fit, np.array([-1.0]), AnalyticSolver("quadratic"), rng)


def test_calibration_truth_inside_hdi():
    # simulate -> infer round trip: with everything free, the 94% marginal
    # interval contains the truth for most parameters in most replications
    ok_reps = 0
    for rep in range(8):
        rng = derive_rng(77, rep)
        truth = params_from_arrays(
            draw_params("evaluation", "quadratic", rng, 1), "quadratic", 0
        )
        stim = np.tile(np.geomspace(1.0, 7.0, 5), 12)
        data, _, _ = simulate_trials(truth, stim, rng)
        cfg = SamplerConfig(n_chains=2, n_warmup=500, n_draws=700,
                            seed=int(rng.integers(0, 2**63 - 1)))
        s = sample_posterior(data, default_priors("quadratic"),
                             AnalyticSolver("quadratic"), cfg)
        tv = {"mu0": truth.mu0, "sigma0": truth.sigma0,
              "sigma": truth.sigma, "sigma_r": truth.sigma_r}
        inside = sum(
            int(np.quantile(s.flat(n), 0.03) <= tv[n] <= np.quantile(s.flat(n), 0.97))
            for n in s.param_names
        )
        ok_reps += int(inside >= 3)
    assert ok_reps >= 7
