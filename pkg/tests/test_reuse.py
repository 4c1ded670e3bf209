import math
from fractions import Fraction

import numpy as np
import pytest

from fluxmap import (
    IntegrityError,
    MidpointCache,
    ReuseConfig,
    SceneOracle,
    SeedStream,
    StaticSceneOracle,
    ValidationError,
    estimate_flops_saving,
    generate_flux,
    generate_full,
    generate_vanilla_reuse,
    switch_steps,
)
from fluxmap.corpus import bs_move_pair, make_scene
from fluxmap.reuse import static_midpoint_key, vanilla_midpoint_key


@pytest.fixture(scope="module")
def scene_pair():
    return bs_move_pair(7, n=32, n_buildings=5)


@pytest.fixture(scope="module")
def oracle():
    return SceneOracle()


def test_reuse_config_validation():
    with pytest.raises(ValidationError):
        ReuseConfig(T=0)
    with pytest.raises(ValidationError):
        ReuseConfig(mode="none", r_reuse=0.5)
    with pytest.raises(ValidationError):
        ReuseConfig(mode="vanilla", r_reuse=1.0)
    with pytest.raises(ValidationError):
        ReuseConfig(mode="weird")
    cfg = ReuseConfig(T=100, r_reuse=0.98, mode="vanilla")
    assert cfg.reused_steps == 98 and cfg.fresh_steps == 2


@pytest.mark.parametrize("r", [0.1, 0.4, 0.7, 0.9, 0.95, 0.98])
def test_switch_steps_exact_for_decimal_ratios(r):
    assert switch_steps(r, 100) == math.ceil(Fraction(str(r)) * 100)


def test_switch_steps_ceils_fractional_products():
    assert switch_steps(0.25, 10) == 3
    assert switch_steps(0.7, 100) == 70
    assert switch_steps(0.98, 100) == 98


def test_full_generation_accounting(oracle, scene_pair):
    scene, _ = scene_pair
    rmap, traj, cplx = generate_full(
        oracle, scene, ReuseConfig(T=50, mode="none"), SeedStream(0)
    )
    assert cplx.denoiser_calls == 50
    assert cplx.speedup_vs_full == 1.0
    assert len(traj.states) == 51
    assert rmap.shape == (32, 32)


def test_full_generation_deterministic(oracle, scene_pair):
    scene, _ = scene_pair
    cfg = ReuseConfig(T=30, mode="none")
    a, _, _ = generate_full(oracle, scene, cfg, SeedStream(5))
    b, _, _ = generate_full(oracle, scene, cfg, SeedStream(5))
    assert np.array_equal(a.values, b.values)


def test_exact_target_reached_with_zero_sigma(scene_pair):
    scene, _ = scene_pair
    sharp = SceneOracle(sigma_target=0.0)
    rmap, traj, _ = generate_full(
        sharp, scene, ReuseConfig(T=100, mode="none"), SeedStream(1)
    )
    target = sharp.target_for(scene).mean
    err = float(np.sum((traj.final.z - target) ** 2) / np.sum(target**2))
    assert err < 1e-3


@pytest.mark.parametrize("r", [0.1, 0.5, 0.98])
def test_reuse_identity_bitwise(oracle, scene_pair, tmp_path, r):
    scene, _ = scene_pair
    full_map, full_traj, _ = generate_full(
        oracle, scene, ReuseConfig(T=100, mode="none"), SeedStream(11)
    )
    cfg = ReuseConfig(T=100, r_reuse=r, mode="vanilla")
    cache = MidpointCache(tmp_path / f"r{r}")
    cold, cold_traj, cold_cplx = generate_vanilla_reuse(
        oracle, scene, scene, cfg, cache, SeedStream(11)
    )
    warm, warm_traj, warm_cplx = generate_vanilla_reuse(
        oracle, scene, scene, cfg, cache, SeedStream(11)
    )
    assert np.array_equal(full_map.values, cold.values)
    assert np.array_equal(full_map.values, warm.values)
    assert np.array_equal(full_traj.final.z, warm_traj.final.z)
    assert cold_cplx.denoiser_calls == 100
    assert warm_cplx.denoiser_calls == 100 - switch_steps(r, 100)


def test_warm_step_count_law(oracle, scene_pair, tmp_path):
    initial, target = scene_pair
    cfg = ReuseConfig(T=100, r_reuse=0.98, mode="vanilla")
    cache = MidpointCache(tmp_path)
    generate_vanilla_reuse(oracle, initial, target, cfg, cache, SeedStream(2))
    _, traj, cplx = generate_vanilla_reuse(
        oracle, initial, target, cfg, cache, SeedStream(3)
    )
    assert cplx.denoiser_calls == 2
    assert cplx.speedup_vs_full == pytest.approx(50.0)
    assert traj.states[0].t == pytest.approx(0.02)


def test_vanilla_requires_reuse_ratio(oracle, scene_pair):
    initial, target = scene_pair
    with pytest.raises(ValidationError):
        generate_vanilla_reuse(
            oracle, initial, target,
            ReuseConfig(T=10, mode="none"), None, SeedStream(0),
        )


def test_cache_integrity_error_propagates_without_flag(oracle, scene_pair, tmp_path):
    initial, target = scene_pair
    cfg = ReuseConfig(T=20, r_reuse=0.5, mode="vanilla")
    cache = MidpointCache(tmp_path)
    generate_vanilla_reuse(oracle, initial, target, cfg, cache, SeedStream(4))
    key = vanilla_midpoint_key(initial, 20, 10)
    path = tmp_path / f"{key.hex()}.mid"
    blob = bytearray(path.read_bytes())
    blob[-2] ^= 0x55
    path.write_bytes(bytes(blob))
    with pytest.raises(IntegrityError):
        generate_vanilla_reuse(oracle, initial, target, cfg, cache, SeedStream(5))
    # with the fallback flag the corrupted record is regenerated in place
    rmap, _, cplx = generate_vanilla_reuse(
        oracle, initial, target, cfg, cache, SeedStream(5),
        fallback_on_cache_error=True,
    )
    assert cplx.denoiser_calls == 20
    fresh, _, _ = generate_vanilla_reuse(
        oracle, initial, target, cfg, cache, SeedStream(6)
    )
    assert fresh is not None


def test_flux_shares_midpoints_across_bs(tmp_path):
    oracle = SceneOracle()
    static_oracle = StaticSceneOracle(m_bs=4)
    scene_a = make_scene(21, n=32, n_buildings=4)
    free = np.argwhere(scene_a.static_grid() == 0)
    spot = next(
        (x, y) for y, x in map(tuple, free) if (x, y) != (scene_a.bs.x, scene_a.bs.y)
    )
    scene_b = scene_a.with_bs(*spot)
    cfg = ReuseConfig(T=40, r_reuse=0.9, mode="flux")
    cache = MidpointCache(tmp_path)
    _, _, first = generate_flux(
        static_oracle, oracle, scene_a, cfg, cache, SeedStream(31)
    )
    _, _, second = generate_flux(
        static_oracle, oracle, scene_b, cfg, cache, SeedStream(32)
    )
    assert first.denoiser_calls == 40
    assert second.denoiser_calls == 4  # warm across the BS move
    assert len(cache) == 1


def test_flux_with_own_bs_equals_full(oracle):
    scene = make_scene(22, n=32, n_buildings=4)  # no vehicles
    static_oracle = StaticSceneOracle(bs_positions=[(scene.bs.x, scene.bs.y)])
    full_map, _, _ = generate_full(
        oracle, scene, ReuseConfig(T=30, mode="none"), SeedStream(8)
    )
    flux_map, _, _ = generate_flux(
        static_oracle, oracle, scene,
        ReuseConfig(T=30, r_reuse=0.5, mode="flux"), None, SeedStream(8),
    )
    assert np.array_equal(full_map.values, flux_map.values)


def test_midpoint_keys_separate_conditions(scene_pair):
    initial, target = scene_pair
    assert vanilla_midpoint_key(initial, 100, 2) != vanilla_midpoint_key(target, 100, 2)
    assert vanilla_midpoint_key(initial, 100, 2) != vanilla_midpoint_key(initial, 100, 10)
    # static keys ignore the BS but track the averaging spec
    assert static_midpoint_key(initial, 100, 2, 16) == static_midpoint_key(
        target, 100, 2, 16
    )
    assert static_midpoint_key(initial, 100, 2, 16) != static_midpoint_key(
        initial, 100, 2, 8
    )
    assert static_midpoint_key(initial, 100, 2, 16, [(1, 1)]) != static_midpoint_key(
        initial, 100, 2, 16
    )


def test_f16_cache_dtype_roundtrip(oracle, scene_pair, tmp_path):
    initial, target = scene_pair
    cfg = ReuseConfig(T=20, r_reuse=0.5, mode="vanilla")
    cache = MidpointCache(tmp_path)
    cold, _, _ = generate_vanilla_reuse(
        oracle, initial, target, cfg, cache, SeedStream(41), cache_dtype="f16"
    )
    warm, _, _ = generate_vanilla_reuse(
        oracle, initial, target, cfg, cache, SeedStream(41), cache_dtype="f16"
    )
    # the cold path continues from the stored f16 latent, so warm == cold
    assert np.array_equal(cold.values, warm.values)
    key = vanilla_midpoint_key(initial, 20, 10)
    assert cache.get(key).dtype == "f16"


# ---------------------------------------------------------------------------
# flops accounting
# ---------------------------------------------------------------------------


def test_flops_golden_value():
    est = estimate_flops_saving(256, 3, 1, 128, 3)
    assert est.conv_flops_saved == 301_989_888
    assert est.conv_flops_saved >= 3e8
    assert est.denoiser_calls == 0


def test_flops_zero_when_channels_match():
    assert estimate_flops_saving(256, 3, 3, 128, 3).conv_flops_saved == 0


def test_flops_tiny_case():
    assert estimate_flops_saving(2, 3, 1, 1, 1).conv_flops_saved == 16


def test_flops_rejects_bad_dims():
    with pytest.raises(Exception):
        estimate_flops_saving(0, 3, 1, 128, 3)
