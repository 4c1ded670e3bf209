"""Similarity gate deciding when a cached midpoint is safe to reuse.

Scenes are tokenized into a fixed layout: the static and dynamic grids are
split into non-overlapping patches (default 8 x 8, flattened row-major, so
the token width equals patch_size^2 = 64), followed by one BS token built
from (x/N, y/N, z/100) tiled to the token width. Frozen seeded projections
W_K, W_V map tokens to key/value embeddings, and the environment distance
is the RMS-normalized Frobenius gap

    d_env(A, B) = sqrt(|K_A - K_B|_F^2 + |V_A - V_B|_F^2) / sqrt(n_tokens * d_k)

Reuse is allowed when d_env <= tau. tau is calibrated from measured
(d_env, accuracy-loss) pairs: the largest observed distance such that
every pair at or below it stays within the error budget.

The theoretical backing is the closed-form divergence between two latents
pushed through the forward process to the same noise level t:

    KL = 0.5 * (1 - t)^2 / t * |z_i - z_j|^2

which decays to zero as t -> 1; kl_monte_carlo estimates the same quantity
from samples and serves as the verification oracle.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, ValidationError
from .rng import SeedStream
from .scene import EnvironmentScene

DEFAULT_PATCH = 8
DEFAULT_D_K = 32


def tokenize(scene: EnvironmentScene, patch: int = DEFAULT_PATCH) -> np.ndarray:
    """Condition tokens, shape (2 * (n/patch)^2 + 1, patch^2)."""
    n = scene.n
    if patch <= 0 or n % patch != 0:
        raise ConfigurationError(f"patch size {patch} does not divide grid side {n}")
    m = n // patch

    def grid_tokens(grid: np.ndarray) -> np.ndarray:
        blocks = grid.astype(np.float64).reshape(m, patch, m, patch)
        return blocks.transpose(0, 2, 1, 3).reshape(m * m, patch * patch)

    bs_raw = np.array(
        [scene.bs.x / n, scene.bs.y / n, scene.bs.z / 100.0], dtype=np.float64
    )
    bs_token = np.resize(bs_raw, patch * patch)[np.newaxis, :]
    return np.concatenate(
        [grid_tokens(scene.static_grid()), grid_tokens(scene.dynamic_grid()), bs_token]
    )


@dataclass(frozen=True)
class ProjectionPair:
    """Frozen random key/value projections, reproducible from the seed."""

    w_k: np.ndarray
    w_v: np.ndarray
    seed: int

    @classmethod
    def from_seed(
        cls, seed: int, d_model: int = DEFAULT_PATCH**2, d_k: int = DEFAULT_D_K
    ) -> "ProjectionPair":
        gen = SeedStream(seed, (0,)).generator()
        scale = 1.0 / math.sqrt(d_model)
        w_k = gen.standard_normal((d_model, d_k)) * scale
        w_v = gen.standard_normal((d_model, d_k)) * scale
        w_k.flags.writeable = False
        w_v.flags.writeable = False
        return cls(w_k=w_k, w_v=w_v, seed=seed)

    @property
    def d_model(self) -> int:
        return self.w_k.shape[0]

    @property
    def d_k(self) -> int:
        return self.w_k.shape[1]


@dataclass(frozen=True)
class GateConfig:
    """Reuse threshold plus the normalization it was calibrated under."""

    tau: float
    normalization: float

    def __post_init__(self):
        if self.tau < 0:
            raise ValidationError("tau must be non-negative")

    def admits(self, d: float) -> bool:
        return d <= self.tau


def embed(
    scene: EnvironmentScene, proj: ProjectionPair, patch: int = DEFAULT_PATCH
) -> tuple[np.ndarray, np.ndarray]:
    """Key and value embeddings of the scene's condition tokens."""
    tokens = tokenize(scene, patch)
    if tokens.shape[1] != proj.d_model:
        raise ConfigurationError(
            f"token width {tokens.shape[1]} does not match projection d_model {proj.d_model}"
        )
    return tokens @ proj.w_k, tokens @ proj.w_v


def d_env(
    a: EnvironmentScene,
    b: EnvironmentScene,
    proj: ProjectionPair,
    config: GateConfig | None = None,
    patch: int = DEFAULT_PATCH,
) -> float:
    """Normalized Frobenius distance between two scenes' embeddings."""
    ka, va = embed(a, proj, patch)
    kb, vb = embed(b, proj, patch)
    if ka.shape != kb.shape:
        raise ConfigurationError("token layouts are not aligned")
    gap = np.sum((ka - kb) ** 2) + np.sum((va - vb) ** 2)
    norm = (
        config.normalization
        if config is not None and config.normalization > 0
        else d_env_normalization(ka.shape[0], proj.d_k)
    )
    return math.sqrt(gap) / norm


def d_env_normalization(n_tokens: int, d_k: int) -> float:
    return math.sqrt(n_tokens * d_k)


def kl_closed_form(z_i: np.ndarray, z_j: np.ndarray, t: float) -> float:
    """Closed-form KL between the two forward marginals at noise level t."""
    if t <= 0.0 or t > 1.0:
        raise DomainError(f"noise level {t} outside (0, 1]")
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    if z_i.shape != z_j.shape:
        raise DomainError("latents must share dimension")
    diff = z_i - z_j
    return 0.5 * (1.0 - t) ** 2 / t * float(diff @ diff)


def kl_monte_carlo(
    z_i: np.ndarray,
    z_j: np.ndarray,
    t: float,
    n_samples: int,
    rng: np.random.Generator,
) -> tuple[float, float]:
    """Sample-average estimate of the same KL; returns (estimate, stderr).

    Draws x ~ Normal((1-t) z_i, t I) and averages log p(x) - log q(x).
    """
    if t <= 0.0 or t > 1.0:
        raise DomainError(f"noise level {t} outside (0, 1]")
    if n_samples < 10_000:
        raise DomainError("need at least 1e4 samples for a usable estimate")
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    d = (1.0 - t) * (z_j - z_i)  # mu_j - mu_i
    eps = rng.standard_normal((n_samples, z_i.size), dtype=np.float32)
    # x = mu_i + sqrt(t) eps, so per sample
    # log p - log q = (|x - mu_j|^2 - |x - mu_i|^2) / 2t = (|d|^2 - 2 sqrt(t) <eps, d>) / 2t
    inner = (eps @ d.astype(np.float32)).astype(np.float64)
    ratios = (float(d @ d) - 2.0 * math.sqrt(t) * inner) / (2.0 * t)
    est = float(ratios.mean())
    se = float(ratios.std(ddof=1) / math.sqrt(n_samples))
    return est, se


def calibrate_tau(
    points: list[tuple[float, float]], budget: float, normalization: float = 0.0
) -> GateConfig:
    """Pick the largest admissible threshold from measured calibration points.

    points are (d_env, accuracy_loss) pairs. The returned tau is the
    largest observed distance such that every point at or below it has
    loss <= budget; 0 when even the closest point violates the budget.
    """
    if not points:
        raise ConfigurationError("calibration needs at least one measured pair")
    if budget < 0:
        raise ValidationError("error budget must be non-negative")
    ordered = sorted(points)
    tau = 0.0
    for d, loss in ordered:
        if loss > budget:
            break
        tau = d
    # ties: a violating point at the exact candidate distance forces tau lower
    while tau > 0 and any(d <= tau and loss > budget for d, loss in ordered):
        smaller = [d for d, _ in ordered if d < tau]
        tau = max(smaller) if smaller else 0.0
    return GateConfig(tau=tau, normalization=normalization)
