"""Environment scenes: obstacle grids, base station, propagation constants.

A scene is an N x N cell grid holding axis-aligned building rectangles
(static obstacles, perfect shields), vehicle rectangles (dynamic obstacles,
partial attenuators) and a single base station. Cell (x, y) means column x,
row y; numpy grids are indexed [y, x]. Scenes serialize to a strict JSON
schema (unknown keys are rejected) and have a canonical byte encoding used
for cache keys and deterministic derived seeds.
"""

import hashlib
import json
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ValidationError

# Receiver height above ground (meters). Matches the base station default,
# so a scene with default bs.z has purely horizontal propagation distances.
RX_HEIGHT_M = 1.5


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle of cells: columns x..x+w-1, rows y..y+h-1."""

    x: int
    y: int
    w: int
    h: int

    def __post_init__(self):
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, int(getattr(self, name)))

    def as_tuple(self) -> tuple[int, int, int, int]:
        return (self.x, self.y, self.w, self.h)


@dataclass(frozen=True)
class BaseStation:
    x: int
    y: int
    z: float = 1.5

    def __post_init__(self):
        object.__setattr__(self, "x", int(self.x))
        object.__setattr__(self, "y", int(self.y))
        object.__setattr__(self, "z", float(self.z))


@dataclass(frozen=True)
class PropagationParams:
    """Constants of the toy pathloss model.

    tx_power_dbm and carrier_ghz are descriptive metadata; the pathloss
    formula is anchored by pl0_db (loss at 1 m), the distance exponent,
    and the two obstacle penalties.
    """

    tx_power_dbm: float = 23.0
    carrier_ghz: float = 5.9
    pl0_db: float = 47.0
    exponent: float = 2.2
    nlos_extra_db: float = 25.0
    vehicle_loss_db: float = 10.0
    max_pl_db: float = 160.0

    def __post_init__(self):
        if self.max_pl_db <= self.pl0_db:
            raise ValidationError("max_pl_db must exceed pl0_db")
        if self.exponent <= 0:
            raise ValidationError("pathloss exponent must be positive")


@dataclass(frozen=True)
class EnvironmentScene:
    """Static grid H_s, dynamic grid H_d and BS position; the conditioning input."""

    n: int
    resolution_m: float
    buildings: tuple[Rect, ...] = ()
    vehicles: tuple[Rect, ...] = ()
    bs: BaseStation = field(default_factory=lambda: BaseStation(0, 0))
    params: PropagationParams = field(default_factory=PropagationParams)

    def __post_init__(self):
        if self.n <= 0:
            raise ValidationError("grid side must be positive")
        if self.resolution_m <= 0:
            raise ValidationError("resolution_m must be positive")
        bad = [r for r in self.buildings + self.vehicles if not self._rect_ok(r)]
        if bad:
            raise ValidationError(
                "rectangles outside the grid or empty: "
                + ", ".join(str(r.as_tuple()) for r in bad)
            )
        if not (0 <= self.bs.x < self.n and 0 <= self.bs.y < self.n):
            raise ValidationError(f"BS cell ({self.bs.x}, {self.bs.y}) outside grid")
        for r in self.buildings:
            if r.x <= self.bs.x < r.x + r.w and r.y <= self.bs.y < r.y + r.h:
                raise ValidationError(
                    f"BS cell ({self.bs.x}, {self.bs.y}) inside building {r.as_tuple()}"
                )

    def _rect_ok(self, r: Rect) -> bool:
        return (
            r.w >= 1
            and r.h >= 1
            and 0 <= r.x
            and 0 <= r.y
            and r.x + r.w <= self.n
            and r.y + r.h <= self.n
        )

    def static_grid(self) -> np.ndarray:
        """H_s as an n x n uint8 grid, 1 inside buildings."""
        return _rasterize(self.n, self.buildings)

    def dynamic_grid(self) -> np.ndarray:
        """H_d as an n x n uint8 grid, 1 inside vehicles."""
        return _rasterize(self.n, self.vehicles)

    def with_bs(self, x: int, y: int, z: float | None = None) -> "EnvironmentScene":
        return EnvironmentScene(
            self.n,
            self.resolution_m,
            self.buildings,
            self.vehicles,
            BaseStation(x, y, self.bs.z if z is None else z),
            self.params,
        )

    def with_vehicles(self, vehicles: tuple[Rect, ...]) -> "EnvironmentScene":
        return EnvironmentScene(
            self.n, self.resolution_m, self.buildings, vehicles, self.bs, self.params
        )

    def same_static(self, other: "EnvironmentScene") -> bool:
        return (
            self.n == other.n
            and self.resolution_m == other.resolution_m
            and sorted(r.as_tuple() for r in self.buildings)
            == sorted(r.as_tuple() for r in other.buildings)
        )

    def same_dynamic(self, other: "EnvironmentScene") -> bool:
        return self.n == other.n and sorted(
            r.as_tuple() for r in self.vehicles
        ) == sorted(r.as_tuple() for r in other.vehicles)


def _rasterize(n: int, rects: tuple[Rect, ...]) -> np.ndarray:
    grid = np.zeros((n, n), dtype=np.uint8)
    for r in rects:
        grid[r.y : r.y + r.h, r.x : r.x + r.w] = 1
    return grid


# ---------------------------------------------------------------------------
# Canonical encoding and digests
# ---------------------------------------------------------------------------


def canonical_scene_dict(scene: EnvironmentScene) -> dict:
    """Order-normalized plain-dict form; basis for keys and digests."""
    return {
        "n": scene.n,
        "resolution_m": scene.resolution_m,
        "buildings": sorted(list(r.as_tuple()) for r in scene.buildings),
        "vehicles": sorted(list(r.as_tuple()) for r in scene.vehicles),
        "bs": [scene.bs.x, scene.bs.y, scene.bs.z],
        "params": asdict(scene.params),
    }


def canonical_static_dict(scene: EnvironmentScene) -> dict:
    """Like canonical_scene_dict but restricted to the static layout H_s."""
    return {
        "n": scene.n,
        "resolution_m": scene.resolution_m,
        "buildings": sorted(list(r.as_tuple()) for r in scene.buildings),
        "params": asdict(scene.params),
    }


def digest_of(payload: dict) -> bytes:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).digest()


def scene_digest(scene: EnvironmentScene) -> bytes:
    return digest_of(canonical_scene_dict(scene))


def static_digest(scene: EnvironmentScene) -> bytes:
    return digest_of(canonical_static_dict(scene))


# ---------------------------------------------------------------------------
# JSON file schema
# ---------------------------------------------------------------------------

_SCENE_KEYS = {"n", "resolution_m", "buildings", "vehicles", "bs", "params"}
_RECT_KEYS = {"x", "y", "w", "h"}
_BS_KEYS = {"x", "y", "z"}
_PARAM_KEYS = {
    "tx_power_dbm",
    "carrier_ghz",
    "pl0_db",
    "exponent",
    "nlos_extra_db",
    "vehicle_loss_db",
    "max_pl_db",
}


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise ValidationError(f"unknown keys in {where}: {sorted(unknown)}")


def scene_from_dict(data: dict) -> EnvironmentScene:
    if not isinstance(data, dict):
        raise ValidationError("scene must be a JSON object")
    _check_keys(data, _SCENE_KEYS, "scene")
    for req in ("n", "resolution_m", "bs"):
        if req not in data:
            raise ValidationError(f"scene is missing required key {req!r}")

    def rects(name: str) -> tuple[Rect, ...]:
        out = []
        for i, r in enumerate(data.get(name, [])):
            if not isinstance(r, dict):
                raise ValidationError(f"{name}[{i}] must be an object")
            _check_keys(r, _RECT_KEYS, f"{name}[{i}]")
            try:
                out.append(Rect(int(r["x"]), int(r["y"]), int(r["w"]), int(r["h"])))
            except KeyError as e:
                raise ValidationError(f"{name}[{i}] is missing {e.args[0]!r}") from None
        return tuple(out)

    bs_obj = data["bs"]
    if not isinstance(bs_obj, dict):
        raise ValidationError("bs must be an object")
    _check_keys(bs_obj, _BS_KEYS, "bs")
    if "x" not in bs_obj or "y" not in bs_obj:
        raise ValidationError("bs requires x and y")
    bs = BaseStation(int(bs_obj["x"]), int(bs_obj["y"]), float(bs_obj.get("z", 1.5)))

    params_obj = data.get("params", {})
    if not isinstance(params_obj, dict):
        raise ValidationError("params must be an object")
    _check_keys(params_obj, _PARAM_KEYS, "params")
    params = PropagationParams(**{k: float(v) for k, v in params_obj.items()})

    return EnvironmentScene(
        n=int(data["n"]),
        resolution_m=float(data["resolution_m"]),
        buildings=rects("buildings"),
        vehicles=rects("vehicles"),
        bs=bs,
        params=params,
    )


def scene_to_dict(scene: EnvironmentScene) -> dict:
    return {
        "n": scene.n,
        "resolution_m": scene.resolution_m,
        "buildings": [dict(zip("xywh", r.as_tuple())) for r in scene.buildings],
        "vehicles": [dict(zip("xywh", r.as_tuple())) for r in scene.vehicles],
        "bs": {"x": scene.bs.x, "y": scene.bs.y, "z": scene.bs.z},
        "params": asdict(scene.params),
    }


def load_scene(path) -> EnvironmentScene:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: not valid JSON ({e})") from None
    return scene_from_dict(data)


def save_scene(scene: EnvironmentScene, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(scene_to_dict(scene), fh, indent=2)
        fh.write("\n")
