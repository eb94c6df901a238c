"""Augmented metric spaces: points or distance matrices plus a density value per point.

The density convention throughout is "lower value = denser point". All ties
(equal densities, equal distances) are broken by the original point index, so
every derived object is deterministic.
"""

from __future__ import annotations

import io
import math
from typing import Iterable, Optional, Sequence, Union

import numpy as np


class ParseError(ValueError):
    """Raised on malformed tabular input; message names the offending row."""


class DensityError(ValueError):
    """Raised when an operation needs densities that are absent or invalid."""


class AugmentedMetricSpace:
    """A finite metric space together with an optional density function.

    Points may be given as coordinates in R^d (Euclidean distances are used)
    or as an explicit symmetric distance matrix with zero diagonal. The
    triangle inequality is never assumed. Instances are immutable; density
    attachment returns a new space.
    """

    def __init__(self, points=None, dist=None, density=None):
        if (points is None) == (dist is None):
            raise ValueError("exactly one of points / dist must be given")
        if points is not None:
            pts = np.asarray(points, dtype=np.float64)
            if pts.ndim == 1:
                pts = pts[:, None]
            if pts.ndim != 2 or pts.shape[0] < 1:
                raise ValueError("points must be a nonempty (n, d) array")
            if not np.all(np.isfinite(pts)):
                raise ValueError("points must be finite")
            pts.setflags(write=False)
            self.points: Optional[np.ndarray] = pts
            self._dist: Optional[np.ndarray] = None
            self.n = pts.shape[0]
            self.dim = pts.shape[1]
        else:
            d = np.asarray(dist, dtype=np.float64)
            if d.ndim != 2 or d.shape[0] != d.shape[1] or d.shape[0] < 1:
                raise ValueError("distance matrix must be square and nonempty")
            if not np.all(np.isfinite(d)):
                raise ValueError("distances must be finite")
            if np.any(d < 0):
                raise ValueError("distances must be nonnegative")
            if np.any(np.diag(d) != 0.0):
                raise ValueError("distance matrix must have zero diagonal")
            if not np.array_equal(d, d.T):
                raise ValueError("distance matrix must be symmetric")
            d = d.copy()
            d.setflags(write=False)
            self.points = None
            self._dist = d
            self.n = d.shape[0]
            self.dim = None

        if density is not None:
            f = np.asarray(density, dtype=np.float64)
            if f.shape != (self.n,):
                raise ValueError(
                    f"density must have one value per point ({self.n}), got shape {f.shape}"
                )
            if not np.all(np.isfinite(f)):
                raise ValueError("density values must be finite")
            f = f.copy()
            f.setflags(write=False)
            self.density: Optional[np.ndarray] = f
        else:
            self.density = None

    # -- distances ---------------------------------------------------------

    def distance_matrix(self) -> np.ndarray:
        """Full symmetric distance matrix (computed once and cached).

        Uses the elementwise difference formula, not the Gram expansion, so
        coincident points give exactly zero and any other code path computing
        the same pair distance gets the bit-identical double.
        """
        if self._dist is None:
            p = self.points
            n, d = p.shape
            out = np.empty((n, n))
            step = max(1, 4_000_000 // max(1, n * d))
            for i0 in range(0, n, step):
                diff = p[i0 : i0 + step, None, :] - p[None, :, :]
                out[i0 : i0 + step] = np.sqrt(np.sum(diff * diff, axis=2))
            out.setflags(write=False)
            self._dist = out
        return self._dist

    def distance(self, i: int, j: int) -> float:
        if not (0 <= i < self.n and 0 <= j < self.n):
            raise IndexError(f"point index out of range: ({i}, {j})")
        return float(self.distance_matrix()[i, j])

    # -- densities and order -----------------------------------------------

    def has_density(self) -> bool:
        return self.density is not None

    def require_density(self) -> np.ndarray:
        if self.density is None:
            raise DensityError("space has no density values; attach one first")
        return self.density

    def canonical_order(self) -> np.ndarray:
        """Permutation of indices sorted by (density, index), stably."""
        f = self.require_density()
        return np.lexsort((np.arange(self.n), f))

    def with_density(self, values) -> "AugmentedMetricSpace":
        if self.points is not None:
            return AugmentedMetricSpace(points=self.points, density=values)
        return AugmentedMetricSpace(dist=self._dist, density=values)

    def __repr__(self):
        kind = "points" if self.points is not None else "matrix"
        dens = "with density" if self.density is not None else "no density"
        return f"AugmentedMetricSpace(n={self.n}, {kind}, {dens})"


def canonical_order(space: AugmentedMetricSpace) -> np.ndarray:
    return space.canonical_order()


def distance(space: AugmentedMetricSpace, i: int, j: int) -> float:
    return space.distance(i, j)


# -- density attachment ------------------------------------------------------


def scott_bandwidths(points: np.ndarray) -> np.ndarray:
    """Per-dimension Scott's-rule bandwidths n^(-1/(d+4)) * std_j.

    Dimensions with zero spread fall back to bandwidth 1 so that degenerate
    inputs (repeated coordinates) still evaluate.
    """
    n, d = points.shape
    factor = n ** (-1.0 / (d + 4))
    std = np.std(points, axis=0, ddof=1) if n > 1 else np.ones(d)
    std = np.where(std > 0, std, 1.0)
    return factor * std


def gaussian_kde_values(points: np.ndarray, bandwidth=None) -> np.ndarray:
    """Gaussian product-kernel density estimate evaluated at the sample points."""
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim == 1:
        pts = pts[:, None]
    n, d = pts.shape
    if bandwidth is None:
        h = scott_bandwidths(pts)
    else:
        h = np.broadcast_to(np.asarray(bandwidth, dtype=np.float64), (d,)).copy()
        if np.any(h <= 0):
            raise ValueError("bandwidth must be positive")
    norm = n * np.prod(h) * (2.0 * math.pi) ** (d / 2.0)
    out = np.empty(n)
    step = max(1, 4_000_000 // max(1, n * d))
    for i0 in range(0, n, step):
        z = (pts[i0 : i0 + step, None, :] - pts[None, :, :]) / h
        out[i0 : i0 + step] = np.sum(np.exp(-0.5 * np.sum(z * z, axis=2)), axis=1)
    return out / norm


def attach_density(
    space: AugmentedMetricSpace,
    mode: str,
    *,
    bandwidth=None,
    seed: Optional[int] = None,
    values: Optional[Sequence[float]] = None,
) -> AugmentedMetricSpace:
    """Return a copy of ``space`` with densities filled in.

    mode "kde": negated Gaussian kernel density estimate, so denser points get
    lower values. Needs coordinates. mode "random": i.i.d. uniform [0, 1)
    draws from a seeded generator. mode "explicit": caller-supplied values.
    """
    if mode == "kde":
        if space.points is None:
            raise DensityError("kde density needs point coordinates, not a distance matrix")
        est = gaussian_kde_values(space.points, bandwidth=bandwidth)
        return space.with_density(-est)
    if mode == "random":
        rng = np.random.default_rng(seed)
        return space.with_density(rng.random(space.n))
    if mode == "explicit":
        if values is None:
            raise ValueError("explicit mode needs values")
        return space.with_density(values)
    raise ValueError(f"unknown density mode: {mode!r}")


# -- tabular input -----------------------------------------------------------


def _split_row(line: str) -> list:
    delim = ";" if ";" in line else ","
    if delim not in line and " " in line.strip():
        return line.split()
    return [c.strip() for c in line.split(delim)]


def load_points(
    source: Union[str, io.TextIOBase, Iterable[str]],
    density_column: Union[str, int, None] = None,
) -> AugmentedMetricSpace:
    """Parse delimiter-separated text (comma or semicolon) into a space.

    One point per row; an optional header row names the columns; an optional
    density column is selected by name or index. A leading ``#matrix n`` line
    switches to explicit distance-matrix input (n rows of n entries).
    """
    if isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = [ln.rstrip("\n") for ln in source]
    rows = [(i, ln) for i, ln in enumerate(lines) if ln.strip() != ""]
    if not rows:
        raise ParseError("empty input")

    first = rows[0][1].strip()
    if first.startswith("#matrix"):
        if density_column is not None:
            raise ParseError("matrix input has no density column; attach densities instead")
        return _load_matrix(rows)

    header: Optional[list] = None
    cells0 = _split_row(rows[0][1])
    if any(not _is_number(c) for c in cells0):
        header = cells0
        rows = rows[1:]
        if not rows:
            raise ParseError("empty input (header only)")

    dens_idx: Optional[int] = None
    if density_column is not None:
        if isinstance(density_column, int):
            dens_idx = density_column
        else:
            if header is None or density_column not in header:
                raise ParseError(f"density column {density_column!r} not found in header")
            dens_idx = header.index(density_column)

    width = None
    coords = []
    dens = []
    for rowno, line in rows:
        cells = _split_row(line)
        if width is None:
            width = len(cells)
            if dens_idx is not None and not (0 <= dens_idx < width):
                raise ParseError(f"density column index {dens_idx} out of range (row {rowno})")
        elif len(cells) != width:
            raise ParseError(f"ragged row {rowno}: expected {width} fields, got {len(cells)}")
        try:
            vals = [float(c) for c in cells]
        except ValueError:
            bad = next(c for c in cells if not _is_number(c))
            raise ParseError(f"non-numeric field {bad!r} in row {rowno}") from None
        if dens_idx is not None:
            dens.append(vals[dens_idx])
            vals = [v for k, v in enumerate(vals) if k != dens_idx]
        if not vals:
            raise ParseError(f"row {rowno} has no coordinate fields")
        coords.append(vals)

    density = dens if dens_idx is not None else None
    return AugmentedMetricSpace(points=np.asarray(coords), density=density)


def _load_matrix(rows) -> AugmentedMetricSpace:
    head = rows[0][1].split()
    if len(head) != 2:
        raise ParseError("matrix header must be '#matrix n'")
    try:
        n = int(head[1])
    except ValueError:
        raise ParseError("matrix header must be '#matrix n'") from None
    body = rows[1:]
    if len(body) != n:
        raise ParseError(f"matrix input: expected {n} rows, got {len(body)}")
    mat = []
    for rowno, line in body:
        cells = _split_row(line)
        if len(cells) != n:
            raise ParseError(f"ragged matrix row {rowno}: expected {n} entries")
        try:
            mat.append([float(c) for c in cells])
        except ValueError:
            raise ParseError(f"non-numeric entry in matrix row {rowno}") from None
    return AugmentedMetricSpace(dist=np.asarray(mat))


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False
