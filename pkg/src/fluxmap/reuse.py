"""Midpoint caching and reuse around the diffusion sampler.

Three generation paths share one step/stream layout, so that reusing a
midpoint is bitwise equivalent to having computed it in place:

  * full          - all T steps under the scene's own condition
  * vanilla reuse - the first ceil(R*T) steps under an initial condition
                    (or loaded from cache), the remaining steps under the
                    target condition
  * flux          - stage 1 under a static-layout-only oracle (cached per
                    layout, shared across BS positions and vehicle
                    layouts), stage 2 under the full condition

The midpoint is the state after ceil(R*T) reverse steps, i.e. at grid time
1 - R for reuse ratios aligned with the uniform grid. Step counts report
only freshly executed denoiser evaluations; with a warm cache that is
T - ceil(R*T), and the speedup column is T divided by it.

Cache keys digest the canonical generating condition (full scene for
vanilla, static layout plus the averaging spec for flux stage 1), the
stage tag, T, and the switch step index, so distinct conditions can never
collide on a reused latent.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

from . import codec
from .cache import MidpointCache, make_record
from .diffusion import DiffusionSchedule, LatentState, Trajectory, noise_state, sample
from .errors import DomainError, IntegrityError, ValidationError
from .oracle import SceneOracle, StaticSceneOracle
from .raster import RadioMap
from .rng import SeedStream
from .scene import (
    EnvironmentScene,
    canonical_scene_dict,
    canonical_static_dict,
    digest_of,
)
from .simulator import apply_building_mask

MODES = ("none", "vanilla", "flux")


@dataclass(frozen=True)
class ReuseConfig:
    """Sampler-level knobs: step count, reuse ratio, mode, reporting weight."""

    T: int = 100
    r_reuse: float = 0.0
    mode: str = "none"
    lambda_tradeoff: float = 0.0

    def __post_init__(self):
        if self.T <= 0:
            raise ValidationError("T must be positive")
        if self.mode not in MODES:
            raise ValidationError(f"mode must be one of {MODES}")
        if not 0.0 <= self.r_reuse < 1.0:
            raise ValidationError("r_reuse must lie in [0, 1)")
        if self.lambda_tradeoff < 0.0:
            raise ValidationError("lambda_tradeoff must be non-negative")
        if self.mode == "none" and self.r_reuse != 0.0:
            raise ValidationError("mode 'none' forces r_reuse = 0")

    @property
    def reused_steps(self) -> int:
        return switch_steps(self.r_reuse, self.T)

    @property
    def fresh_steps(self) -> int:
        return self.T - self.reused_steps


def switch_steps(r_reuse: float, T: int) -> int:
    """ceil(R * T) evaluated exactly on R's decimal value."""
    return math.ceil(Fraction(str(r_reuse)) * T)


@dataclass(frozen=True)
class ComplexityEstimate:
    """Denoiser-call accounting; conv_flops_saved counts 2 flops per MAC.

    speedup_vs_full is T / denoiser_calls, or 0.0 where step counting does
    not apply (the flops estimator).
    """

    denoiser_calls: int
    conv_flops_saved: int = 0
    speedup_vs_full: float = 0.0


def _complexity(config: ReuseConfig, calls: int) -> ComplexityEstimate:
    speedup = config.T / calls if calls > 0 else 0.0
    return ComplexityEstimate(denoiser_calls=calls, speedup_vs_full=speedup)


def estimate_flops_saving(
    hw: int, c_in_full: int, c_in_static: int, c_out: int, kernel: int
) -> ComplexityEstimate:
    """Convolution flops saved per call by narrowing the condition input."""
    if min(hw, c_in_full, c_in_static, c_out, kernel) <= 0:
        raise DomainError("all convolution dimensions must be positive")
    saved = 2 * kernel * kernel * (c_in_full - c_in_static) * c_out * hw * hw
    return ComplexityEstimate(denoiser_calls=0, conv_flops_saved=saved)


# ---------------------------------------------------------------------------
# Midpoint keys
# ---------------------------------------------------------------------------


def vanilla_midpoint_key(scene: EnvironmentScene, T: int, step: int) -> bytes:
    """Key of a midpoint generated under the scene's full condition."""
    return digest_of(
        {"cond": canonical_scene_dict(scene), "stage": "vanilla", "T": T, "step": step}
    )


def static_midpoint_key(
    scene: EnvironmentScene,
    T: int,
    step: int,
    m_bs: int,
    bs_positions: list[tuple[int, int]] | None = None,
) -> bytes:
    """Key of a stage-1 midpoint; depends only on the static layout."""
    return digest_of(
        {
            "cond": canonical_static_dict(scene),
            "stage": "flux-static",
            "T": T,
            "step": step,
            "m_bs": m_bs,
            "bs_positions": None
            if bs_positions is None
            else sorted([x, y] for x, y in bs_positions),
        }
    )


# ---------------------------------------------------------------------------
# Generation paths
# ---------------------------------------------------------------------------


def _finish(scene: EnvironmentScene, traj: Trajectory, oracle: SceneOracle) -> RadioMap:
    decoded = codec.decode(traj.final.z, scene.n, oracle.factor)
    return apply_building_mask(decoded, scene)


def generate_full(
    oracle: SceneOracle,
    scene: EnvironmentScene,
    config: ReuseConfig,
    rng: SeedStream,
) -> tuple[RadioMap, Trajectory, ComplexityEstimate]:
    """Baseline: denoise from pure noise through all T steps."""
    if config.mode != "none":
        raise ValidationError("generate_full requires mode 'none'")
    schedule = DiffusionSchedule.uniform(config.T)
    dim = codec.latent_dim(scene.n, oracle.factor)
    start = noise_state(dim, rng.child(0).generator())
    traj = sample(oracle.denoiser(scene), schedule, start, rng)
    return _finish(scene, traj, oracle), traj, _complexity(config, traj.denoiser_calls)


def _load_midpoint(
    cache: MidpointCache | None,
    key: bytes,
    t_switch: float,
    fallback_on_cache_error: bool,
) -> LatentState | None:
    if cache is None or key not in cache:
        return None
    try:
        record = cache.get(key)
        if record.t != t_switch:
            raise IntegrityError(
                f"cached midpoint at t = {record.t}, expected t = {t_switch}"
            )
        return LatentState(z=record.latent(), t=record.t)
    except IntegrityError:
        if fallback_on_cache_error:
            return None
        raise


def _reuse_run(
    stage1_denoiser,
    stage2_denoiser,
    key: bytes,
    scene_out: EnvironmentScene,
    oracle_out: SceneOracle,
    config: ReuseConfig,
    cache: MidpointCache | None,
    rng: SeedStream,
    fallback_on_cache_error: bool,
    cache_dtype: str,
) -> tuple[RadioMap, Trajectory, ComplexityEstimate]:
    schedule = DiffusionSchedule.uniform(config.T)
    dim = codec.latent_dim(scene_out.n, oracle_out.factor)
    switch_index = config.fresh_steps  # grid index of the switch time
    t_switch = schedule.times[config.reused_steps]

    calls = 0
    prefix: list[LatentState] = []
    if config.reused_steps == 0:
        midpoint = noise_state(dim, rng.child(0).generator())
    else:
        midpoint = _load_midpoint(cache, key, t_switch, fallback_on_cache_error)
        if midpoint is None:
            start = noise_state(dim, rng.child(0).generator())
            stage1 = sample(stage1_denoiser, schedule, start, rng, switch_index)
            midpoint = stage1.final
            calls += stage1.denoiser_calls
            prefix = stage1.states[:-1]
            if cache is not None:
                cache.put(make_record(key, midpoint.t, midpoint.z, dtype=cache_dtype))
                if cache_dtype != "f32":
                    # continue from what a later reader of the cache would see
                    midpoint = LatentState(z=cache.get(key).latent(), t=midpoint.t)

    stage2 = sample(stage2_denoiser, schedule, midpoint, rng)
    calls += stage2.denoiser_calls
    traj = Trajectory(states=prefix + list(stage2.states), denoiser_calls=calls)
    return _finish(scene_out, traj, oracle_out), traj, _complexity(config, calls)


def generate_vanilla_reuse(
    oracle: SceneOracle,
    scene_initial: EnvironmentScene,
    scene_target: EnvironmentScene,
    config: ReuseConfig,
    cache: MidpointCache | None,
    rng: SeedStream,
    fallback_on_cache_error: bool = False,
    cache_dtype: str = "f32",
) -> tuple[RadioMap, Trajectory, ComplexityEstimate]:
    """Reuse the initial condition's midpoint, then switch conditions."""
    if config.mode != "vanilla":
        raise ValidationError("generate_vanilla_reuse requires mode 'vanilla'")
    if not 0.0 < config.r_reuse < 1.0:
        raise ValidationError("vanilla reuse requires 0 < r_reuse < 1")
    key = vanilla_midpoint_key(scene_initial, config.T, config.fresh_steps)
    return _reuse_run(
        oracle.denoiser(scene_initial),
        oracle.denoiser(scene_target),
        key,
        scene_target,
        oracle,
        config,
        cache,
        rng,
        fallback_on_cache_error,
        cache_dtype,
    )


def generate_flux(
    static_oracle: StaticSceneOracle,
    full_oracle: SceneOracle,
    scene: EnvironmentScene,
    config: ReuseConfig,
    cache: MidpointCache | None,
    rng: SeedStream,
    fallback_on_cache_error: bool = False,
    cache_dtype: str = "f32",
) -> tuple[RadioMap, Trajectory, ComplexityEstimate]:
    """Two-stage path: static-layout midpoint, then full-condition refinement."""
    if config.mode != "flux":
        raise ValidationError("generate_flux requires mode 'flux'")
    if static_oracle.factor != full_oracle.factor:
        raise ValidationError("stage oracles must share the latent factor")
    key = static_midpoint_key(
        scene,
        config.T,
        config.fresh_steps,
        static_oracle.m_bs,
        static_oracle.bs_positions,
    )
    return _reuse_run(
        static_oracle.denoiser(scene),
        full_oracle.denoiser(scene),
        key,
        scene,
        full_oracle,
        config,
        cache,
        rng,
        fallback_on_cache_error,
        cache_dtype,
    )
