"""Decoupled diffusion process with additive drift decay and Brownian noise.

Forward marginal at time t in [0, 1]:

    z_t | z_0  ~  Normal((1 - t) z_0, t I)

i.e. the signal decays linearly along a constant drift while unit-rate
noise accumulates; t = 0 is clean data, t = 1 is fully decayed signal plus
unit noise. The discrete reverse kernel over a step of size dt, given an
estimate zhat of z_0, is

    z_{t-dt} ~ Normal( ((t-dt)/t) z_t + (dt/t) zhat,  dt (t-dt) / t * I )

The mean is the algebraic simplification of z_t + dt*zhat - (dt/sqrt(t)) e
with e = (z_t - (1-t) zhat)/sqrt(t); the unknown clean latent inside the
drift integral is replaced by the denoiser estimate. At dt = t the kernel
collapses to a point mass at zhat, so a full schedule ends exactly on the
denoiser's final estimate.

Latents are float32 throughout. Reverse noise at schedule index k is drawn
from the run stream's child(k) (the initial t = 1 noise from child(0)), so
a trajectory segment is reproducible regardless of how the states above it
were produced.
"""

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ConfigurationError, DomainError
from .rng import SeedStream

Denoiser = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class LatentState:
    """Latent vector plus its diffusion time."""

    z: np.ndarray
    t: float

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float32)
        if z.ndim != 1 or z.size == 0:
            raise DomainError("latent must be a non-empty vector")
        if not np.all(np.isfinite(z)):
            raise DomainError("latent contains non-finite values")
        if not 0.0 <= self.t <= 1.0:
            raise DomainError(f"diffusion time {self.t} outside [0, 1]")
        object.__setattr__(self, "z", z)

    @property
    def dim(self) -> int:
        return self.z.size


@dataclass(frozen=True)
class DiffusionSchedule:
    """Strictly decreasing time grid t_T = 1 > ... > t_0 = 0."""

    times: tuple[float, ...]
    drift_mode: str = "constant"

    def __post_init__(self):
        ts = self.times
        if len(ts) < 2 or ts[0] != 1.0 or ts[-1] != 0.0:
            raise ConfigurationError("schedule must run from exactly 1 to exactly 0")
        if any(nxt >= prev for prev, nxt in zip(ts, ts[1:])):
            raise ConfigurationError("schedule times must be strictly decreasing")
        if self.drift_mode != "constant":
            raise ConfigurationError(f"unknown drift mode {self.drift_mode!r}")

    @property
    def steps(self) -> int:
        return len(self.times) - 1

    @classmethod
    def uniform(cls, T: int) -> "DiffusionSchedule":
        if T <= 0:
            raise ConfigurationError("step count must be positive")
        return cls(times=tuple(k / T for k in range(T, -1, -1)))

    def index_of(self, t: float) -> int:
        """Grid index of time t, counted from the t = 0 end."""
        # times[i] corresponds to index steps - i
        for i, ti in enumerate(self.times):
            if ti == t:
                return self.steps - i
        raise ConfigurationError(f"time {t!r} is not on the schedule grid")

    def g_squared(self, t: float) -> float:
        """Squared noise injection rate; constant 1 here. Diagnostic only."""
        if not 0.0 <= t <= 1.0:
            raise DomainError(f"time {t} outside [0, 1]")
        return 1.0


@dataclass
class Trajectory:
    """Recorded reverse path, ordered by strictly decreasing t."""

    states: list[LatentState] = field(default_factory=list)
    denoiser_calls: int = 0

    @property
    def final(self) -> LatentState:
        return self.states[-1]


def forward_sample(
    z0: np.ndarray, t: float, rng: np.random.Generator
) -> LatentState:
    """Draw z_t ~ Normal((1 - t) z0, t I)."""
    z0 = np.asarray(z0, dtype=np.float32)
    if not np.all(np.isfinite(z0)):
        raise DomainError("z0 contains non-finite values")
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"diffusion time {t} outside [0, 1]")
    noise = rng.standard_normal(z0.size, dtype=np.float32)
    z = (1.0 - t) * z0 + math.sqrt(t) * noise
    return LatentState(z=z, t=float(t))


def reverse_step(
    state: LatentState,
    z0_hat: np.ndarray,
    delta_t: float,
    rng: np.random.Generator,
) -> LatentState:
    """One discrete reverse step from state.t to state.t - delta_t."""
    t = state.t
    if t <= 0.0:
        raise DomainError("cannot step from t = 0")
    if not 0.0 < delta_t <= t:
        raise DomainError(f"step size {delta_t} outside (0, {t}]")
    z0_hat = np.asarray(z0_hat, dtype=np.float32)
    if z0_hat.shape != state.z.shape:
        raise DomainError("denoiser estimate has wrong dimension")

    t_next = t - delta_t
    mean = (t_next / t) * state.z + (delta_t / t) * z0_hat
    std = math.sqrt(delta_t * t_next / t)
    noise = rng.standard_normal(state.dim, dtype=np.float32)
    return LatentState(z=mean + std * noise, t=t_next)


def noise_state(dim: int, rng: np.random.Generator) -> LatentState:
    """Pure-noise start of a reverse run: z_1 ~ Normal(0, I)."""
    return LatentState(z=rng.standard_normal(dim, dtype=np.float32), t=1.0)


def sample(
    denoiser: Denoiser,
    schedule: DiffusionSchedule,
    start: LatentState,
    rng: SeedStream,
    stop_index: int = 0,
) -> Trajectory:
    """Run the reverse chain from start.t down to grid index stop_index,
    recording every state.

    start.t must lie on the schedule grid. Reverse noise for the step
    landing on grid index k - 1 comes from rng.child(k), making partial
    runs bitwise-consistent with full ones.
    """
    k = schedule.index_of(start.t)
    if not 0 <= stop_index <= k:
        raise ConfigurationError(
            f"stop index {stop_index} outside [0, {k}] for start t = {start.t}"
        )
    traj = Trajectory(states=[start])
    state = start
    while k > stop_index:
        t_next = schedule.times[schedule.steps - (k - 1)]
        z0_hat = denoiser(state.z, state.t)
        state = reverse_step(state, z0_hat, state.t - t_next, rng.child(k).generator())
        traj.states.append(state)
        traj.denoiser_calls += 1
        k -= 1
    return traj
