"""Cross-backend equivalence: compiled kernels against the NumPy reference.

Both backends implement the same four kernels; everything here asserts
they agree to floating-point roundoff over randomized inputs, including
edge cases (tiny measurements at the positivity floor, non-finite log
densities).  Skipped entirely when the compiled extension is not built.
"""

import numpy as np
import pytest

from actorinfer import backends
from actorinfer.actor import make_cost, optimal_action_quadratic, simulate_trials
from actorinfer.backends import numpy_backend as ref
from actorinfer.model import AnalyticSolver, BehaviorModel, NetworkSolver, default_priors
from actorinfer.network import init_network
from actorinfer.regimes import draw_params, params_from_arrays

cy = pytest.importorskip(
    "actorinfer.backends._core", reason="compiled backend not built"
)


def _random_weights(rng, d):
    w = rng.normal(0, 0.5, ref.weight_count(d))
    # keep the positive output head in a sane range
    w[-3:] = np.array([1.0, 1.0, 0.0]) + rng.normal(0, 0.2, 3)
    return w


def test_net_forward_matches():
    rng = np.random.default_rng(7)
    for d in (5, 6):
        for trial in range(20):
            w = _random_weights(rng, d)
            B = int(rng.integers(1, 40))
            Z = rng.uniform(-1.2, 1.2, (B, d))
            m = np.exp(rng.uniform(-40.0, 40.0, B))
            if trial == 0:
                m[0] = 1e-7  # below the output floor
            a0 = ref.net_forward(w, Z, m)
            a1 = cy.net_forward(w, Z, m)
            np.testing.assert_allclose(a1, a0, rtol=1e-10, atol=0)


def test_net_forward_input_grad_matches():
    rng = np.random.default_rng(8)
    for d in (5, 6):
        for _ in range(20):
            w = _random_weights(rng, d)
            B = int(rng.integers(1, 30))
            Z = rng.uniform(-1.2, 1.2, (B, d))
            m = np.exp(rng.uniform(-3.0, 3.0, B))
            r0 = ref.net_forward_input_grad(w, Z, m)
            r1 = cy.net_forward_input_grad(w, Z, m)
            for x0, x1, name in zip(r0, r1, ("a", "grad_Z", "grad_m")):
                np.testing.assert_allclose(x1, x0, rtol=1e-10, atol=1e-300, err_msg=name)


def test_net_loss_weight_grad_matches():
    rng = np.random.default_rng(9)
    for cid in (0, 1, 2):
        d = 5 if cid == 0 else 6
        for _ in range(10):
            w = rng.normal(0, 0.4, ref.weight_count(d))
            w[-3:] = [1.0, 1.0, 0.0]
            B = int(rng.integers(2, 30))
            Z = rng.uniform(-1.0, 1.0, (B, d))
            m = np.exp(rng.uniform(-2.0, 2.0, B))
            lmp = rng.uniform(-1.0, 1.0, B)
            sp = rng.uniform(0.05, 0.5, B)
            zeta = rng.normal(0, 1, 64)
            eps = rng.normal(0, 1, 48)
            sr = rng.uniform(0.02, 0.6, B)
            cp = rng.uniform(0.1, 0.9, B) if cid else np.zeros(B)
            l0, g0, p0 = ref.net_loss_weight_grad(w, Z, m, lmp, sp, zeta, eps, sr, cid, cp)
            l1, g1, p1 = cy.net_loss_weight_grad(w, Z, m, lmp, sp, zeta, eps, sr, cid, cp)
            np.testing.assert_allclose(l1, l0, rtol=1e-11)
            np.testing.assert_allclose(p1, p0, rtol=1e-11)
            np.testing.assert_allclose(g1, g0, rtol=2e-9, atol=1e-14)


def _model_cases():
    cases = []
    for fam in ("quadratic", "quadratic_effort", "asymmetric_quadratic"):
        for skind in ("analytic", "network"):
            if skind == "analytic" and fam == "asymmetric_quadratic":
                continue
            for collapsed in (False, True):
                for fixed in (None, {"sigma": 0.3}):
                    cases.append((fam, skind, collapsed, fixed))
    return cases


def _build_model(fam, skind, collapsed, fixed, seed):
    r = np.random.default_rng(seed)
    params = params_from_arrays(draw_params("inference", fam, r, 1), fam, 0)
    stim = np.exp(r.uniform(-0.5, 1.0, 25))
    if fam == "asymmetric_quadratic":
        # no closed form; simulate under a stand-in quadratic action
        afn = lambda p, m: optimal_action_quadratic(
            type(p)(p.mu0, p.sigma0, p.sigma, p.sigma_r, make_cost("quadratic", None)), m
        )
        data, _, _ = simulate_trials(params, stim, r, action_fn=afn)
    else:
        data, _, _ = simulate_trials(params, stim, r)
    if skind == "analytic":
        solver = AnalyticSolver(fam)
    else:
        solver = NetworkSolver(init_network(fam, seed=seed))
    return BehaviorModel(
        data, default_priors(fam, fixed=fixed), solver, marginalize_measurements=collapsed
    )


def test_log_joint_grad_matches():
    maxrel = 0.0
    for ci, (fam, skind, coll, fixed) in enumerate(_model_cases()):
        model = _build_model(fam, skind, coll, fixed, 100 + ci)
        for k in range(4):
            q = model.initial_position(np.random.default_rng(40 + k))
            q = q + 0.05 * np.random.default_rng(50 + k).normal(size=q.shape)
            args = model._args(q)
            lp0, g0 = ref.log_joint_grad(*args)
            lp1, g1 = cy.log_joint_grad(*args)
            if not np.isfinite(lp0):
                assert not np.isfinite(lp1)
                continue
            np.testing.assert_allclose(
                g1, g0, rtol=1e-9, atol=1e-12,
                err_msg=f"case {ci}: {fam} {skind} collapsed={coll}",
            )
            maxrel = max(maxrel, abs(lp1 - lp0) / max(1.0, abs(lp0)))
    assert maxrel < 1e-12


def test_active_backend_is_compiled_by_default():
    # the import selector prefers the extension when present
    assert backends.backend_name() == "cython"
    assert len(backends.available_backends()) == 2


def test_log_joint_grad_matches_finite_differences():
    # central differences on the numpy reference pin both backends to the
    # actual derivative, not merely to each other
    for ci, (fam, skind, coll, fixed) in enumerate(_model_cases()[:6]):
        model = _build_model(fam, skind, coll, fixed, 300 + ci)
        q = model.initial_position(np.random.default_rng(1)) * 0.9
        lp, g = model.log_joint_grad(q)
        assert np.isfinite(lp)
        h = 1e-6
        for j in range(min(5, q.shape[0])):
            qp = q.copy(); qp[j] += h
            qm = q.copy(); qm[j] -= h
            fd = (model.log_joint(qp) - model.log_joint(qm)) / (2 * h)
            np.testing.assert_allclose(g[j], fd, rtol=5e-5, atol=1e-6)
