import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fluxmap import (
    DomainError,
    GaussianTarget,
    LatentState,
    MixtureTarget,
    SceneOracle,
    StaticSceneOracle,
    condition_to_target,
    posterior_mean_gaussian,
    posterior_mean_mixture,
)
from fluxmap.corpus import make_scene
from fluxmap.oracle import mixture_responsibilities
from fluxmap import codec, simulate


# ---------------------------------------------------------------------------
# Independent oracle: brute-force posterior on a 1-D grid. Integrates the
# joint density numerically; the closed form must agree.
# ---------------------------------------------------------------------------


def grid_posterior_mean(prior_mean, prior_sigma, z_t, t, half_width=12.0, points=200_001):
    z0 = np.linspace(
        prior_mean - half_width * max(prior_sigma, 1e-3) - 5,
        prior_mean + half_width * max(prior_sigma, 1e-3) + 5,
        points,
    )
    log_prior = (
        -0.5 * ((z0 - prior_mean) / prior_sigma) ** 2 if prior_sigma > 0 else None
    )
    log_like = -0.5 * (z_t - (1 - t) * z0) ** 2 / t
    log_post = log_like + (log_prior if log_prior is not None else 0.0)
    log_post -= log_post.max()
    w = np.exp(log_post)
    return float(np.sum(w * z0) / np.sum(w))


def test_gaussian_matches_grid_posterior():
    cases = [
        (0.0, 1.0, 1.0, 0.5),
        (0.4, 0.3, -0.2, 0.25),
        (-1.0, 2.0, 0.7, 0.9),
        (0.2, 0.05, 0.15, 0.02),
    ]
    for mu, sigma, z_t, t in cases:
        target = GaussianTarget(mean=np.array([mu], np.float32), sigma=sigma)
        state = LatentState(z=np.array([z_t], np.float32), t=t)
        closed = posterior_mean_gaussian(target, state)[0]
        brute = grid_posterior_mean(mu, sigma, z_t, t)
        assert closed == pytest.approx(brute, abs=1e-4)


def test_sigma_zero_returns_target():
    target = GaussianTarget(mean=np.array([0.3, -0.7], np.float32), sigma=0.0)
    state = LatentState(z=np.array([5.0, 5.0], np.float32), t=0.8)
    assert np.array_equal(posterior_mean_gaussian(target, state), target.mean)


def test_small_t_returns_observation():
    target = GaussianTarget(mean=np.array([0.0], np.float32), sigma=1.0)
    state = LatentState(z=np.array([0.42], np.float32), t=1e-7)
    out = posterior_mean_gaussian(target, state)[0]
    assert out == pytest.approx(0.42, abs=1e-5)


def test_worked_gain_example():
    # z* = 0, sigma = 1, z_t = 1, t = 0.5: gain 2/3
    target = GaussianTarget(mean=np.array([0.0], np.float32), sigma=1.0)
    state = LatentState(z=np.array([1.0], np.float32), t=0.5)
    assert posterior_mean_gaussian(target, state)[0] == pytest.approx(2.0 / 3.0, abs=1e-7)


def test_denoiser_rejects_t_zero():
    target = GaussianTarget(mean=np.zeros(1, np.float32), sigma=1.0)
    with pytest.raises(DomainError):
        posterior_mean_gaussian(target, LatentState(z=np.zeros(1, np.float32), t=0.0))


# ---------------------------------------------------------------------------
# mixtures
# ---------------------------------------------------------------------------


def test_single_component_equals_gaussian():
    mean = np.array([0.2, 0.8], np.float32)
    mix = MixtureTarget(components=((1.0, mean, 0.4),))
    gauss = GaussianTarget(mean=mean, sigma=0.4)
    state = LatentState(z=np.array([0.5, 0.1], np.float32), t=0.3)
    assert np.allclose(
        posterior_mean_mixture(mix, state), posterior_mean_gaussian(gauss, state)
    )


def test_symmetric_mixture_balances():
    mu = np.array([1.0, -1.0], np.float32)
    mix = MixtureTarget(components=((0.5, mu, 0.0), (0.5, -mu, 0.0)))
    state = LatentState(z=np.zeros(2, np.float32), t=0.5)
    assert np.allclose(posterior_mean_mixture(mix, state), 0.0, atol=1e-7)


def test_mixture_snaps_to_dominant_component():
    # separation chosen so (1-t)^2 |mu1 - mu2|^2 / t >= 60
    t = 0.25
    mu1 = np.array([3.0, 0.0], np.float32)
    mu2 = np.array([-3.0, 0.0], np.float32)
    gap = (1 - t) ** 2 * float(np.sum((mu1 - mu2) ** 2)) / t
    assert gap >= 60
    mix = MixtureTarget(components=((0.5, mu1, 0.0), (0.5, mu2, 0.0)))
    state = LatentState(z=(1 - t) * mu1, t=t)
    assert np.allclose(posterior_mean_mixture(mix, state), mu1, atol=1e-6)


def test_mixture_matches_grid_posterior_1d():
    # quadrature over a two-component 1-D mixture prior
    t = 0.4
    comps = ((0.3, -1.0, 0.5), (0.7, 1.5, 0.2))
    z_t = 0.3
    z0 = np.linspace(-8, 8, 400_001)
    dens = np.zeros_like(z0)
    for w, mu, sigma in comps:
        dens += (
            w
            / (math.sqrt(2 * math.pi) * sigma)
            * np.exp(-0.5 * ((z0 - mu) / sigma) ** 2)
        )
    like = np.exp(-0.5 * (z_t - (1 - t) * z0) ** 2 / t)
    brute = float(np.sum(dens * like * z0) / np.sum(dens * like))
    mix = MixtureTarget(
        components=tuple((w, np.array([mu], np.float32), s) for w, mu, s in comps)
    )
    state = LatentState(z=np.array([z_t], np.float32), t=t)
    assert posterior_mean_mixture(mix, state)[0] == pytest.approx(brute, abs=1e-4)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    t=st.floats(0.01, 1.0),
)
def test_responsibilities_form_a_distribution(seed, t):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 5))
    weights = rng.dirichlet(np.ones(k))
    weights = weights / weights.sum()
    comps = tuple(
        (float(w), rng.normal(size=3).astype(np.float32), float(rng.uniform(0, 2)))
        for w in weights
    )
    # renormalize exactly to satisfy the 1e-12 weight-sum invariant
    total = sum(w for w, _, _ in comps)
    comps = tuple((w / total, m, s) for w, m, s in comps)
    mix = MixtureTarget(components=comps)
    state = LatentState(z=rng.normal(size=3).astype(np.float32), t=t)
    resp = mixture_responsibilities(mix, state)
    assert np.all(resp >= 0)
    assert resp.sum() == pytest.approx(1.0, abs=1e-10)


def test_mixture_validation():
    with pytest.raises(DomainError):
        MixtureTarget(components=())
    with pytest.raises(DomainError):
        MixtureTarget(components=((0.5, np.zeros(2, np.float32), 1.0),))
    with pytest.raises(DomainError):
        MixtureTarget(
            components=(
                (0.5, np.zeros(2, np.float32), 1.0),
                (0.5, np.zeros(3, np.float32), 1.0),
            )
        )


# ---------------------------------------------------------------------------
# scene-conditional oracles
# ---------------------------------------------------------------------------


def test_condition_to_target_caches():
    oracle = SceneOracle(sigma_target=0.05)
    scene = make_scene(3, n=32, n_buildings=4)
    a = condition_to_target(oracle, scene)
    b = condition_to_target(oracle, scene)
    assert a is b
    assert a.sigma == 0.05
    expected = codec.encode(simulate(scene), oracle.factor)
    assert np.array_equal(a.mean, expected)


def test_bs_move_changes_target():
    oracle = SceneOracle()
    scene = make_scene(3, n=32, n_buildings=4)
    moved = scene.with_bs(scene.bs.x + 1, scene.bs.y)
    a = oracle.target_for(scene)
    b = oracle.target_for(moved)
    assert float(np.linalg.norm(a.mean - b.mean)) > 0


def test_empty_scene_target_is_free_space_field():
    from fluxmap import BaseStation, EnvironmentScene

    scene = EnvironmentScene(n=32, resolution_m=2.0, bs=BaseStation(4, 4))
    oracle = SceneOracle()
    target = oracle.target_for(scene)
    assert np.array_equal(target.mean, codec.encode(simulate(scene), 4))


def test_static_oracle_shares_targets_across_bs_and_vehicles():
    from fluxmap import Rect

    oracle = StaticSceneOracle(m_bs=4)
    scene = make_scene(11, n=32, n_buildings=4)
    moved = scene.with_bs(scene.bs.x + 3, scene.bs.y + 2)
    with_vehicles = scene.with_vehicles((Rect(1, 1, 1, 1),))
    t1 = oracle.target_for(scene)
    t2 = oracle.target_for(moved)
    t3 = oracle.target_for(with_vehicles)
    assert t1 is t2 is t3


def test_static_oracle_average_is_deterministic():
    scene = make_scene(11, n=32, n_buildings=4)
    a = StaticSceneOracle(m_bs=4).target_for(scene)
    b = StaticSceneOracle(m_bs=4).target_for(scene)
    assert np.array_equal(a.mean, b.mean)
    c = StaticSceneOracle(m_bs=8).target_for(scene)
    assert not np.array_equal(a.mean, c.mean)


def test_static_oracle_explicit_positions():
    scene = make_scene(11, n=32, n_buildings=4)
    oracle = StaticSceneOracle(bs_positions=[(scene.bs.x, scene.bs.y)])
    target = oracle.target_for(scene)
    full = SceneOracle().target_for(scene.with_vehicles(()))
    assert np.array_equal(target.mean, full.mean)
