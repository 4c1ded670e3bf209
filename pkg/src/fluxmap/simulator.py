"""Toy deterministic pathloss simulator.

Ground truth for the conditional generator: a log-distance pathloss field
over the scene grid, with line-of-sight shadowing. Buildings are perfect
shields (blocked rays pay a fixed NLOS penalty; building interiors render
as brightness 0), vehicles attenuate each ray by a fixed loss per distinct
rectangle crossed.

Per cell, with d the 3-D distance in meters from the BS to the cell center
(receiver at RX_HEIGHT_M):

    pl = pl0 + 10 * exponent * log10(max(d, 1))
       + nlos_extra_db * [ray crosses a building]
       + vehicle_loss_db * (#vehicle rectangles crossed)

clipped to [pl0, max_pl] and mapped linearly to brightness so that pl0
renders as 0.05 and max_pl as 1.0 (0 is reserved for building interiors).

Geometry is exact segment-vs-rectangle intersection on cell-center
coordinates: a ray is blocked only if it enters a rectangle's open
interior, so grazing contact along a wall does not attenuate, and a
degenerate segment (cell to itself) never blocks.
"""

import numpy as np

from .errors import ValidationError
from .raster import RadioMap
from .scene import EnvironmentScene, Rect, RX_HEIGHT_M

BRIGHTNESS_FLOOR = 0.05


def _slab_interval(p, d, lo, hi):
    """Per-axis Liang-Barsky entry/exit parameters, vectorized over cells."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ta = (lo - p) / d
        tb = (hi - p) / d
    tmin = np.minimum(ta, tb)
    tmax = np.maximum(ta, tb)
    parallel = d == 0.0
    inside = (lo < p) & (p < hi)
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), tmax)
    return tmin, tmax


def _segment_crosses(p: np.ndarray, q: np.ndarray, rect: Rect) -> np.ndarray:
    """True where the open segment p->q passes through rect's open interior.

    p is a single point (2,), q an array of points (..., 2), coordinates in
    cell units. Rectangle {x,y,w,h} occupies [x, x+w] x [y, y+h].
    """
    q = np.asarray(q, dtype=np.float64)
    d = q - p
    tminx, tmaxx = _slab_interval(p[0], d[..., 0], float(rect.x), float(rect.x + rect.w))
    tminy, tmaxy = _slab_interval(p[1], d[..., 1], float(rect.y), float(rect.y + rect.h))
    t0 = np.maximum(np.maximum(tminx, tminy), 0.0)
    t1 = np.minimum(np.minimum(tmaxx, tmaxy), 1.0)
    degenerate = (d[..., 0] == 0.0) & (d[..., 1] == 0.0)
    return (t0 < t1) & ~degenerate


def _cell_center(cell: tuple[int, int]) -> np.ndarray:
    return np.array([cell[0] + 0.5, cell[1] + 0.5], dtype=np.float64)


def ray_blockage(
    scene: EnvironmentScene, from_cell: tuple[int, int], to_cell: tuple[int, int]
) -> tuple[bool, int]:
    """LOS test between two cell centers.

    Returns (static_blocked, vehicle_crossings): whether any building
    interior is crossed, and how many distinct vehicle rectangles are
    crossed. Overlapping vehicles count separately. from == to yields
    (False, 0).
    """
    for cx, cy in (from_cell, to_cell):
        if not (0 <= cx < scene.n and 0 <= cy < scene.n):
            raise ValidationError(f"cell ({cx}, {cy}) outside the grid")
    p = _cell_center(from_cell)
    q = _cell_center(to_cell)[np.newaxis, :]
    blocked = any(bool(_segment_crosses(p, q, r)[0]) for r in scene.buildings)
    crossings = sum(int(_segment_crosses(p, q, r)[0]) for r in scene.vehicles)
    return blocked, crossings


def simulate(scene: EnvironmentScene) -> RadioMap:
    """Render the scene's ground-truth radio map."""
    n = scene.n
    pp = scene.params

    cols, rows = np.meshgrid(np.arange(n), np.arange(n))
    centers = np.stack([cols + 0.5, rows + 0.5], axis=-1)  # (n, n, 2) in cells
    bs_center = _cell_center((scene.bs.x, scene.bs.y))

    dxy = (centers - bs_center) * scene.resolution_m
    dz = scene.bs.z - RX_HEIGHT_M
    dist = np.sqrt(dxy[..., 0] ** 2 + dxy[..., 1] ** 2 + dz * dz)
    pl = pp.pl0_db + 10.0 * pp.exponent * np.log10(np.maximum(dist, 1.0))

    blocked = np.zeros((n, n), dtype=bool)
    for r in scene.buildings:
        blocked |= _segment_crosses(bs_center, centers, r)
    crossings = np.zeros((n, n), dtype=np.int64)
    for r in scene.vehicles:
        crossings += _segment_crosses(bs_center, centers, r)

    pl = pl + pp.nlos_extra_db * blocked + pp.vehicle_loss_db * crossings
    pl = np.clip(pl, pp.pl0_db, pp.max_pl_db)

    brightness = BRIGHTNESS_FLOOR + (1.0 - BRIGHTNESS_FLOOR) * (pl - pp.pl0_db) / (
        pp.max_pl_db - pp.pl0_db
    )
    brightness[scene.static_grid() == 1] = 0.0
    return RadioMap(brightness.astype(np.float32))


def apply_building_mask(rmap: RadioMap, scene: EnvironmentScene) -> RadioMap:
    """Force building-interior cells to 0 (used after decoding a latent)."""
    if rmap.shape != (scene.n, scene.n):
        raise ValidationError("map/scene size mismatch")
    values = rmap.values.copy()
    values[scene.static_grid() == 1] = 0.0
    return RadioMap(values)
