"""Environment tests: ground truth generation, context streams, demand draws,
the misspecified model, and the polynomial context expansion."""

import math

import numpy as np
import pytest
from scipy import stats

from pricing_lab.environments import (
    CONTEXT_KINDS,
    DEMAND_KINDS,
    ContextStream,
    EnvError,
    EnvSpec,
    Expansion,
    adversarial_context,
    expand_context,
    gen_ground_truth,
    is_triangular,
    make_env,
    oracle_pair,
    sample_demand,
    stochastic_context,
    with_expansion,
)
from pricing_lab.link import LinkModel, survival

LINK = LinkModel(sigma=0.5)


# ---------------------------------------------------------------------------
# ground truth


def test_ground_truth_norms_and_positivity():
    for seed in range(20):
        theta, eta = gen_ground_truth(2, 0.3, seed)
        assert np.linalg.norm(theta) == pytest.approx(0.9, rel=1e-12)
        assert np.linalg.norm(eta) == pytest.approx(0.9, rel=1e-12)
        assert theta.min() > 0.0
        assert eta.min() >= 0.3


def test_ground_truth_deterministic_in_seed():
    a = gen_ground_truth(3, 0.3, 42)
    b = gen_ground_truth(3, 0.3, 42)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    c = gen_ground_truth(3, 0.3, 43)
    assert not np.array_equal(a[0], c[0])


def test_ground_truth_validates():
    with pytest.raises(EnvError):
        gen_ground_truth(0, 0.3, 1)
    with pytest.raises(EnvError):
        gen_ground_truth(2, 0.5, 1)  # rejection scheme needs c_beta <= 0.3


def test_high_dim_rejection_still_succeeds():
    # min entry condition tightens with d; budget must still cover d=8
    theta, eta = gen_ground_truth(8, 0.1, 7)
    assert eta.min() >= 0.1


# ---------------------------------------------------------------------------
# spec construction


def test_make_env_shapes():
    env = make_env(2, 0.5, 0.3, "stochastic-gaussian", "glm", seed=5)
    assert env.theta_star.shape == (2,)
    assert env.mu_x is not None and env.cov_x is not None
    assert np.allclose(env.cov_x, env.cov_x.T)
    assert np.linalg.eigvalsh(env.cov_x)[0] > 0.0
    assert env.policy_dim == 2


def test_adversarial_env_has_no_moments():
    env = make_env(2, 0.5, 0.3, "adversarial-triangular", "glm", seed=5)
    assert env.mu_x is None and env.cov_x is None


def test_env_spec_validation():
    theta, eta = gen_ground_truth(2, 0.3, 1)
    with pytest.raises(EnvError):
        EnvSpec(2, 0.5, 0.3, "uniform", "glm", theta, eta)
    with pytest.raises(EnvError):
        EnvSpec(2, 0.5, 0.3, "stochastic-gaussian", "poisson", theta, eta)
    with pytest.raises(EnvError):
        EnvSpec(2, 0.5, 0.3, "stochastic-gaussian", "glm", theta, np.ones(3))
    theta3, eta3 = gen_ground_truth(3, 0.3, 1)
    with pytest.raises(EnvError):
        EnvSpec(3, 0.5, 0.3, "adversarial-triangular", "glm", theta3, eta3)
    assert CONTEXT_KINDS == ("stochastic-gaussian", "adversarial-triangular")
    assert DEMAND_KINDS == ("glm", "valuation", "misspecified-valuation")


# ---------------------------------------------------------------------------
# triangular schedule and the adversarial stream


def test_is_triangular_exact_set():
    tri = {t for t in range(1, 4097) if is_triangular(t)}
    expect = set()
    k = 1
    while k * (k + 1) // 2 <= 4096:
        expect.add(k * (k + 1) // 2)
        k += 1
    assert tri == expect
    assert len(tri) == 90
    assert not is_triangular(0)
    assert not is_triangular(-3)


def test_adversarial_context_values():
    assert np.array_equal(adversarial_context(2, 1), [1.0, 0.0])
    assert np.array_equal(adversarial_context(2, 2), [0.0, 1.0])
    assert np.array_equal(adversarial_context(2, 3), [1.0, 0.0])
    assert np.array_equal(adversarial_context(2, 4), [0.0, 1.0])
    assert np.array_equal(adversarial_context(2, 6), [1.0, 0.0])
    with pytest.raises(EnvError):
        adversarial_context(3, 1)
    with pytest.raises(EnvError):
        adversarial_context(2, 0)


def test_context_stream_norms_and_determinism():
    env = make_env(2, 0.5, 0.3, "stochastic-gaussian", "glm", seed=9)
    s1 = ContextStream(env, np.random.default_rng(4))
    s2 = ContextStream(env, np.random.default_rng(4))
    for t in range(1, 50):
        x1 = s1.context(t)
        assert np.linalg.norm(x1) == pytest.approx(1.0, rel=1e-12)
        assert np.array_equal(x1, s2.context(t))


def test_stochastic_context_single_draw():
    env = make_env(2, 0.5, 0.3, "stochastic-gaussian", "glm", seed=9)
    x = stochastic_context(env, np.random.default_rng(8))
    assert np.linalg.norm(x) == pytest.approx(1.0, rel=1e-12)
    adv = make_env(2, 0.5, 0.3, "adversarial-triangular", "glm", seed=9)
    with pytest.raises(EnvError):
        stochastic_context(adv, np.random.default_rng(8))


# ---------------------------------------------------------------------------
# demand draws


def test_glm_demand_frequency_matches_survival():
    env = make_env(2, 0.5, 0.3, "stochastic-gaussian", "glm", seed=3)
    x = np.array([0.6, 0.8])
    p = 1.5
    w = p * float(x @ env.eta_star) - float(x @ env.theta_star)
    target = survival(LINK, w)
    rng = np.random.default_rng(12)
    n = 40000
    freq = np.mean([sample_demand(env, x, p, rng) for _ in range(n)])
    se = math.sqrt(target * (1 - target) / n)
    assert abs(freq - target) <= 4.0 * se


def test_valuation_demand_equals_glm_in_distribution():
    # buy iff p <= (a + N)/e is the same Bernoulli as the margin model
    base = make_env(2, 0.5, 0.3, "stochastic-gaussian", "glm", seed=6)
    val = EnvSpec(2, 0.5, 0.3, "stochastic-gaussian", "valuation",
                  base.theta_star, base.eta_star, base.mu_x, base.cov_x)
    x = np.array([0.8, 0.6])
    rng = np.random.default_rng(21)
    n = 30000
    for p in (0.8, 1.6, 3.0):
        w = p * float(x @ val.eta_star) - float(x @ val.theta_star)
        target = survival(LINK, w)
        freq = np.mean([sample_demand(val, x, p, rng) for _ in range(n)])
        se = math.sqrt(target * (1 - target) / n)
        assert abs(freq - target) <= 4.0 * se


def test_misspecified_demand_closed_form():
    # buy iff p <= a + e*N: frequency = 1 - Phi((p - a)/(e*sigma))
    base = make_env(2, 0.5, 0.3, "stochastic-gaussian", "glm", seed=6)
    mis = EnvSpec(2, 0.5, 0.3, "stochastic-gaussian", "misspecified-valuation",
                  base.theta_star, base.eta_star, base.mu_x, base.cov_x)
    x = np.array([0.8, 0.6])
    a = float(x @ mis.theta_star)
    e = float(x @ mis.eta_star)
    rng = np.random.default_rng(33)
    n = 30000
    for p in (0.6, 1.2, 2.0):
        target = survival(LinkModel(sigma=0.5 * e), p - a)
        freq = np.mean([sample_demand(mis, x, p, rng) for _ in range(n)])
        se = math.sqrt(target * (1 - target) / n)
        assert abs(freq - target) <= 4.0 * se


def test_demand_draw_consumes_exactly_one_variate():
    env = make_env(2, 0.5, 0.3, "stochastic-gaussian", "glm", seed=3)
    x = np.array([0.6, 0.8])
    r1 = np.random.default_rng(50)
    r2 = np.random.default_rng(50)
    sample_demand(env, x, 1.0, r1)
    r2.random()
    assert r1.random() == r2.random()  # streams stay aligned


def test_oracle_pair_by_demand_kind():
    base = make_env(2, 0.5, 0.3, "stochastic-gaussian", "glm", seed=6)
    x = np.array([0.8, 0.6])
    a = float(x @ base.theta_star)
    e = float(x @ base.eta_star)
    u, b = oracle_pair(base, x)
    assert (u, b) == (a, e)
    mis = EnvSpec(2, 0.5, 0.3, "stochastic-gaussian", "misspecified-valuation",
                  base.theta_star, base.eta_star, base.mu_x, base.cov_x)
    u2, b2 = oracle_pair(mis, x)
    assert u2 == pytest.approx(a / e, rel=1e-13)
    assert b2 == pytest.approx(1.0 / e, rel=1e-13)


def test_misspecified_oracle_pair_reproduces_probability():
    # S(beta* p - u*) must equal the true purchase probability
    base = make_env(2, 0.5, 0.3, "stochastic-gaussian", "glm", seed=8)
    mis = EnvSpec(2, 0.5, 0.3, "stochastic-gaussian", "misspecified-valuation",
                  base.theta_star, base.eta_star, base.mu_x, base.cov_x)
    x = np.array([0.6, 0.8])
    a = float(x @ mis.theta_star)
    e = float(x @ mis.eta_star)
    u, b = oracle_pair(mis, x)
    for p in (0.5, 1.0, 2.5):
        direct = survival(LinkModel(sigma=0.5 * e), p - a)
        via_pair = survival(LINK, b * p - u)
        assert via_pair == pytest.approx(direct, rel=1e-12)


# ---------------------------------------------------------------------------
# context expansion


def test_expand_context_zero_power_block():
    x = np.array([0.6, 0.8])
    out = expand_context(x, np.array([0.5, 0.5]), (0,))
    # stack [x, ones]/sqrt(2) has norm sqrt(3/2) > 1, so it lands on the ball
    expect = np.array([0.6, 0.8, 1.0, 1.0]) / math.sqrt(3.0)
    assert np.allclose(out, expect, rtol=1e-12)
    assert np.linalg.norm(out) == pytest.approx(1.0, rel=1e-12)


def test_expand_context_dimension_and_norm():
    x = np.array([0.3, 0.4])
    out = expand_context(x, np.array([0.5, 0.5]), (0, 1))
    assert out.shape == (6,)
    assert np.linalg.norm(out) <= 1.0 + 1e-12
    # power-1 block is the centered context, scaled by the stack factor
    assert np.allclose(out[4:], (x - 0.5) / math.sqrt(3.0), rtol=1e-12)


def test_expand_context_interior_stack_not_rescaled():
    x = np.array([0.1, 0.1])
    out = expand_context(x, np.array([0.1, 0.1]), (1,))
    assert np.allclose(out, np.array([0.1, 0.1, 0.0, 0.0]) / math.sqrt(2.0))


def test_expand_context_errors():
    with pytest.raises(EnvError):
        expand_context(np.array([0.5, 0.5]), np.array([0.5]), (1,))
    with pytest.raises(EnvError):
        expand_context(np.array([0.5, 0.5]), np.array([0.5, 0.5]), (-1,))


def test_with_expansion_policy_dim():
    env = make_env(2, 0.5, 0.3, "stochastic-gaussian", "misspecified-valuation", seed=4)
    exp = with_expansion(env, [0.5, 0.5], [0, 1])
    assert exp.policy_dim == 6
    assert env.policy_dim == 2
    assert isinstance(exp.expansion, Expansion)


def test_expansion_validation():
    with pytest.raises(EnvError):
        Expansion(x0=np.array([0.5, 0.5]), powers=())
    with pytest.raises(EnvError):
        Expansion(x0=np.array([[0.5]]), powers=(1,))
