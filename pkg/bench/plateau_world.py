"""Synthetic plateau worlds: six random-walk plateaus on a 100 x 100 background."""
from dataclasses import dataclass
from typing import List, Optional, Tuple
import logging

import numpy as np
from scipy import ndimage

from gaptv.data_and_types import Dataset, LossKind
from gaptv.exceptions import GenerationError, InvalidArgumentError

logger = logging.getLogger(__name__)

WORLD_SIZE = 100
PLATEAU_SIZE = 1000
PLATEAU_MEANS = (-5.0, -3.0, -2.0, 2.0, 3.0, 5.0)
MAX_ATTEMPTS = 100

_STEPS = np.array([(-1, 0), (1, 0), (0, -1), (0, 1)])


@dataclass(frozen=True, eq=False)
class PlateauWorld:
    """Ground-truth grid; truth[i, j] is the mean of the cell with x1 bin i and x2 bin j."""
    truth: np.ndarray
    plateau_masks: Tuple[np.ndarray, ...]
    means: Tuple[float, ...]

    @property
    def size(self) -> int:
        return int(self.truth.shape[0])

    def cell_centers(self) -> np.ndarray:
        """(size * size, 2) array of cell centres in row-major order."""
        i, j = np.divmod(np.arange(self.size * self.size), self.size)
        return np.column_stack([i + 0.5, j + 0.5])


class _DirectionStream:
    """Uniform step directions drawn from the generator in batches."""

    def __init__(self, rng: np.random.Generator, batch: int = 4096):
        self.rng = rng
        self.batch = batch
        self.buffer = rng.integers(0, 4, size=batch)
        self.pos = 0

    def next(self) -> int:
        if self.pos == self.batch:
            self.buffer = self.rng.integers(0, 4, size=self.batch)
            self.pos = 0
        d = int(self.buffer[self.pos])
        self.pos += 1
        return d


def _free_neighbors(cell, walls: np.ndarray):
    size = walls.shape[0]
    for di, dj in _STEPS:
        i, j = cell[0] + di, cell[1] + dj
        if 0 <= i < size and 0 <= j < size and not walls[i, j]:
            yield i, j


def _grow_region(rng: np.random.Generator, walls: np.ndarray, target: int) -> Optional[np.ndarray]:
    """Random walk from a random free cell until ``target`` distinct cells are visited.

    The walk never enters ``walls`` and starts only inside a 4-connected free
    component of at least ``target`` cells. When it stops finding new cells it
    restarts from a visited cell on the region's frontier. Returns None when no
    free component is large enough.
    """
    size = walls.shape[0]
    labels, _ = ndimage.label(~walls)
    counts = np.bincount(labels.ravel())
    counts[0] = 0
    free = np.flatnonzero(counts[labels.ravel()] >= target)
    if free.size == 0:
        return None
    start = divmod(int(free[rng.integers(free.size)]), size)
    visited = np.zeros_like(walls)
    visited[start] = True
    order = [start]
    pos = start
    directions = _DirectionStream(rng)
    stale = 0
    stale_limit = 20 * target

    while len(order) < target:
        if stale > stale_limit:
            frontier = [c for c in order
                        if any(not visited[n] for n in _free_neighbors(c, walls))]
            if not frontier:
                return None
            pos = frontier[int(rng.integers(len(frontier)))]
            stale = 0
        if not any(True for _ in _free_neighbors(pos, walls)):
            return None
        di, dj = _STEPS[directions.next()]
        i, j = pos[0] + di, pos[1] + dj
        if not (0 <= i < size and 0 <= j < size) or walls[i, j]:
            continue
        pos = (i, j)
        if visited[pos]:
            stale += 1
        else:
            visited[pos] = True
            order.append(pos)
            stale = 0
    return visited


def _place_plateaus(rng: np.random.Generator, size: int, plateau_size: int,
                    n_plateaus: int) -> Optional[List[np.ndarray]]:
    occupied = np.zeros((size, size), dtype=bool)
    masks = []
    for k in range(n_plateaus):
        region = _grow_region(rng, occupied, plateau_size)
        if region is None:
            logger.debug("Plateau %d found no free component of %d cells", k, plateau_size)
            return None
        occupied |= region
        masks.append(region)
    return masks


def gen_plateau_world(seed: int, size: int = WORLD_SIZE, plateau_size: int = PLATEAU_SIZE,
                      means: Tuple[float, ...] = PLATEAU_MEANS) -> PlateauWorld:
    """Grow one disjoint, 4-connected plateau per mean on a zero background.

    A layout that leaves no room for the next plateau is discarded and the
    whole world is regrown from the same stream.
    """
    if len(means) * plateau_size > size * size:
        raise InvalidArgumentError(
            f"{len(means)} plateaus of {plateau_size} cells do not fit a {size}x{size} grid")
    rng = np.random.default_rng(seed)
    for attempt in range(1, MAX_ATTEMPTS + 1):
        masks = _place_plateaus(rng, size, plateau_size, len(means))
        if masks is not None:
            break
        logger.debug("World %d: attempt %d left no room for every plateau, regrowing", seed, attempt)
    else:
        raise GenerationError(
            f"Could not place {len(means)} plateaus of {plateau_size} cells "
            f"after {MAX_ATTEMPTS} attempts (seed {seed})")
    truth = np.zeros((size, size))
    for region, mean in zip(masks, means):
        truth[region] = mean
        region.setflags(write=False)
    truth.setflags(write=False)
    return PlateauWorld(truth=truth, plateau_masks=tuple(masks),
                        means=tuple(float(m) for m in means))


def sample_observations(world: PlateauWorld, n: int, noise_sd: float = 1.0,
                        seed: int = 0) -> Dataset:
    """n cells uniformly with replacement, observed at their centres with Gaussian noise."""
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    if noise_sd < 0:
        raise InvalidArgumentError(f"noise_sd must be nonnegative, got {noise_sd}")
    rng = np.random.default_rng(seed)
    size = world.size
    flat = rng.integers(0, size * size, size=n)
    i, j = np.divmod(flat, size)
    y = world.truth[i, j] + rng.normal(0.0, noise_sd, size=n)
    return Dataset(i + 0.5, j + 0.5, y, LossKind.GAUSSIAN)
