"""Closed-form denoisers: exact posterior means of z_0 given z_t.

These stand in for a trained network so that sampler and reuse behavior
can be verified against provable targets. For a Gaussian prior
Normal(mean, sigma^2 I) under the forward marginal z_t ~ Normal((1-t) z_0,
t I), the posterior mean of z_0 is

    mean + g * (z_t - (1 - t) mean),   g = (1-t) sigma^2 / ((1-t)^2 sigma^2 + t)

Mixtures combine per-component posterior means with responsibilities
computed in log-space. Scene-conditional oracles map a scene to its target
latent through the simulator and codec, caching per scene digest.
"""

import math
import threading
from dataclasses import dataclass

import numpy as np

from . import codec, simulator
from .diffusion import LatentState
from .errors import DomainError, ValidationError
from .rng import SeedStream
from .scene import EnvironmentScene, scene_digest, static_digest

DEFAULT_SIGMA_TARGET = 0.05


@dataclass(frozen=True)
class GaussianTarget:
    """Isotropic Gaussian prior over the clean latent."""

    mean: np.ndarray
    sigma: float

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float32)
        if mean.ndim != 1 or not np.all(np.isfinite(mean)):
            raise DomainError("target mean must be a finite vector")
        if self.sigma < 0:
            raise DomainError("target sigma must be non-negative")
        object.__setattr__(self, "mean", mean)

    def denoiser(self):
        return lambda z, t: posterior_mean_gaussian(self, LatentState(z=z, t=t))


@dataclass(frozen=True)
class MixtureTarget:
    """Finite mixture of isotropic Gaussians over the clean latent."""

    components: tuple[tuple[float, np.ndarray, float], ...]

    def __post_init__(self):
        if not self.components:
            raise DomainError("mixture needs at least one component")
        comps = []
        dim = None
        total = 0.0
        for w, mean, sigma in self.components:
            if w <= 0:
                raise DomainError("mixture weights must be positive")
            if sigma < 0:
                raise DomainError("component sigma must be non-negative")
            mean = np.asarray(mean, dtype=np.float32)
            if dim is None:
                dim = mean.size
            elif mean.size != dim:
                raise DomainError("mixture components must share dimension")
            total += w
            comps.append((float(w), mean, float(sigma)))
        if abs(total - 1.0) > 1e-12:
            raise DomainError(f"mixture weights sum to {total}, not 1")
        object.__setattr__(self, "components", tuple(comps))

    def denoiser(self):
        return lambda z, t: posterior_mean_mixture(self, LatentState(z=z, t=t))


def _gain(sigma: float, t: float) -> float:
    return (1.0 - t) * sigma * sigma / ((1.0 - t) ** 2 * sigma * sigma + t)


def posterior_mean_gaussian(target: GaussianTarget, state: LatentState) -> np.ndarray:
    """Exact E[z_0 | z_t] for a Gaussian target."""
    if state.t <= 0.0:
        raise DomainError("denoiser undefined at t = 0")
    g = _gain(target.sigma, state.t)
    return target.mean + g * (state.z - (1.0 - state.t) * target.mean)


def mixture_responsibilities(
    target: MixtureTarget, state: LatentState
) -> np.ndarray:
    """Posterior component probabilities at (z_t, t), log-sum-exp stable."""
    if state.t <= 0.0:
        raise DomainError("denoiser undefined at t = 0")
    t = state.t
    logs = np.empty(len(target.components), dtype=np.float64)
    for i, (w, mean, sigma) in enumerate(target.components):
        var = (1.0 - t) ** 2 * sigma * sigma + t
        resid = state.z.astype(np.float64) - (1.0 - t) * mean.astype(np.float64)
        logs[i] = (
            math.log(w)
            - 0.5 * state.dim * math.log(var)
            - 0.5 * float(resid @ resid) / var
        )
    logs -= logs.max()
    weights = np.exp(logs)
    return weights / weights.sum()


def posterior_mean_mixture(target: MixtureTarget, state: LatentState) -> np.ndarray:
    """Exact E[z_0 | z_t] for a mixture target."""
    resp = mixture_responsibilities(target, state)
    out = np.zeros(state.dim, dtype=np.float64)
    for r, (w, mean, sigma) in zip(resp, target.components):
        comp = GaussianTarget(mean=mean, sigma=sigma)
        out += r * posterior_mean_gaussian(comp, state).astype(np.float64)
    return out.astype(np.float32)


# ---------------------------------------------------------------------------
# Scene-conditional oracles
# ---------------------------------------------------------------------------


class SceneOracle:
    """Maps a scene to the Gaussian target around its encoded ground truth."""

    def __init__(
        self, sigma_target: float = DEFAULT_SIGMA_TARGET, factor: int = codec.DEFAULT_FACTOR
    ):
        if sigma_target < 0:
            raise DomainError("sigma_target must be non-negative")
        self.sigma_target = float(sigma_target)
        self.factor = int(factor)
        self._cache: dict[bytes, GaussianTarget] = {}
        self._lock = threading.Lock()

    def _build(self, scene: EnvironmentScene) -> GaussianTarget:
        latent = codec.encode(simulator.simulate(scene), self.factor)
        return GaussianTarget(mean=latent, sigma=self.sigma_target)

    def _key(self, scene: EnvironmentScene) -> bytes:
        return scene_digest(scene)

    def target_for(self, scene: EnvironmentScene) -> GaussianTarget:
        key = self._key(scene)
        target = self._cache.get(key)
        if target is None:
            target = self._build(scene)
            with self._lock:
                self._cache.setdefault(key, target)
                target = self._cache[key]
        return target

    def denoiser(self, scene: EnvironmentScene):
        return self.target_for(scene).denoiser()


class StaticSceneOracle(SceneOracle):
    """Scene oracle conditioned on the static layout only.

    The target latent is the average encoded map over m_bs BS placements
    drawn (seeded by the static-layout digest) from the scene's free-space
    cells, with vehicles removed. Two scenes sharing H_s therefore share a
    target, which is what lets stage-1 midpoints be cached per layout. An
    explicit bs_positions list overrides the placement draw.
    """

    def __init__(
        self,
        sigma_target: float = DEFAULT_SIGMA_TARGET,
        factor: int = codec.DEFAULT_FACTOR,
        m_bs: int = 16,
        bs_positions: list[tuple[int, int]] | None = None,
    ):
        super().__init__(sigma_target, factor)
        if m_bs <= 0:
            raise DomainError("m_bs must be positive")
        self.m_bs = int(m_bs)
        self.bs_positions = (
            None if bs_positions is None else [(int(x), int(y)) for x, y in bs_positions]
        )

    def _key(self, scene: EnvironmentScene) -> bytes:
        return static_digest(scene)

    def placements(self, scene: EnvironmentScene) -> list[tuple[int, int]]:
        if self.bs_positions is not None:
            return list(self.bs_positions)
        free = np.argwhere(scene.static_grid() == 0)  # rows of (y, x)
        if free.shape[0] == 0:
            raise ValidationError("scene has no free-space cells for BS placement")
        seed = int.from_bytes(static_digest(scene)[:8], "little") >> 1
        rng = SeedStream(seed, (0,)).generator()
        count = min(self.m_bs, free.shape[0])
        idx = rng.choice(free.shape[0], size=count, replace=False)
        return [(int(free[i][1]), int(free[i][0])) for i in idx]

    def _build(self, scene: EnvironmentScene) -> GaussianTarget:
        base = scene.with_vehicles(())
        acc = None
        spots = self.placements(scene)
        for x, y in spots:
            latent = codec.encode(simulator.simulate(base.with_bs(x, y)), self.factor)
            acc = latent.astype(np.float64) if acc is None else acc + latent
        return GaussianTarget(
            mean=(acc / len(spots)).astype(np.float32), sigma=self.sigma_target
        )


def condition_to_target(oracle: SceneOracle, scene: EnvironmentScene) -> GaussianTarget:
    """Resolve (and cache) the target latent for a scene."""
    return oracle.target_for(scene)
