"""Counter-based random streams.

Every random draw in the package flows through a ``SeedStream``: a master
seed plus a path of non-negative integers identifying a sub-stream. Streams
are backed by Philox (counter-based), so any sub-stream can be recreated
from (seed, path) alone, independent of execution order. This is what makes
midpoint reuse bitwise-reproducible: the reverse step at schedule index k
always draws from the child stream (.., k), whether the earlier trajectory
was computed fresh or loaded from cache.

Reserved top-level path tags used by the harness:

    TRIAL   - per-trial sampling streams, (TRIAL, r_index, trial_index)
    WARMUP  - cache warm-up trajectories, shared across reuse ratios
    KL      - latent pairs and samples of the KL check
    CALIB   - trial streams of tau calibration runs
"""

import numpy as np

TRIAL = 1
WARMUP = 2
KL = 3
CALIB = 4


class SeedStream:
    """Hierarchical, order-independent random stream."""

    __slots__ = ("entropy", "path")

    def __init__(self, entropy: int, path: tuple[int, ...] = ()):
        if entropy < 0:
            raise ValueError("seed entropy must be non-negative")
        self.entropy = int(entropy)
        self.path = tuple(int(p) for p in path)

    def child(self, *path: int) -> "SeedStream":
        """Derive the sub-stream at the given path suffix."""
        return SeedStream(self.entropy, self.path + path)

    def generator(self) -> np.random.Generator:
        """Fresh Philox generator for this stream; identical on every call."""
        seq = np.random.SeedSequence(self.entropy, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seed=seq))

    def __repr__(self) -> str:
        return f"SeedStream({self.entropy}, path={self.path})"

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, SeedStream)
            and self.entropy == other.entropy
            and self.path == other.path
        )

    def __hash__(self) -> int:
        return hash((self.entropy, self.path))
