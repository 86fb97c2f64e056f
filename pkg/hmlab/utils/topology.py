# ========= Copyright 2023-2024 @ CAMEL-AI.org. All Rights Reserved. =========
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
# ========= Copyright 2023-2024 @ CAMEL-AI.org. All Rights Reserved. =========
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np
from scipy import ndimage, signal, sparse
from scipy.sparse import csgraph
from scipy.spatial import cKDTree
from camel.logger import get_logger

from .ball_mesh import ShellMesh, SphereMesh, build_sphere_mesh
from .common import FOUR_PI, ParameterError, ResolutionError, normalize_rows
from .energy import tet_energy_density
from .sphere_fields import BoundaryField, SphereField

logger = get_logger(__name__)

DEGREE_RESIDUAL_WARNING = 0.1
PROBE_LEVEL = 3
# Ball sums use voxels of rho_min / BALL_GRID_RATIO, at most BALL_GRID_MAX per axis.
BALL_GRID_RATIO = 6
BALL_GRID_MAX = 160


@dataclass(frozen=True)
class DegreeResult:
    r"""Rounded degree, the raw solid-angle sum over 4 pi and its distance to the integer."""

    degree: int
    raw: float
    residual: float

    def to_dict(self) -> dict:
        return {"degree": self.degree, "raw": self.raw, "residual": self.residual}


def solid_angles(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> np.ndarray:
    r"""Signed solid angles of the spherical triangles with unit corners ``a, b, c``."""
    numerator = np.einsum("ij,ij->i", a, np.cross(b, c))
    denominator = (
        1.0
        + np.einsum("ij,ij->i", a, b)
        + np.einsum("ij,ij->i", b, c)
        + np.einsum("ij,ij->i", c, a)
    )
    return 2.0 * np.arctan2(numerator, denominator)


def degree_of_values(values: np.ndarray, triangles: np.ndarray) -> DegreeResult:
    r"""Degree of the map given by unit ``values`` on an oriented closed triangulation."""
    omega = solid_angles(
        values[triangles[:, 0]], values[triangles[:, 1]], values[triangles[:, 2]]
    )
    raw = float(np.sum(omega) / FOUR_PI)
    rounded = int(round(raw))
    residual = abs(raw - rounded)
    if residual > DEGREE_RESIDUAL_WARNING:
        logger.warning(
            f"Degree sum {raw:.4f} is far from an integer; the map is under-resolved"
        )
    return DegreeResult(degree=rounded, raw=raw, residual=residual)


def degree(psi: BoundaryField) -> DegreeResult:
    r"""Topological degree of a boundary field.

    Args:
        psi (BoundaryField): Unit field on an outward-oriented sphere mesh.

    Returns:
        DegreeResult: Degree, raw value and rounding residual.
    """
    return degree_of_values(psi.values, psi.sphere.triangles)


@lru_cache(maxsize=4)
def _probe(level: int) -> SphereMesh:
    return build_sphere_mesh(level)


def _probe_degree(u: SphereField, center: np.ndarray, rho: float, level: int) -> DegreeResult:
    probe = _probe(level)
    points = center + rho * probe.vertices
    points = points / np.maximum(np.linalg.norm(points, axis=1), 1.0)[:, None]
    values = normalize_rows(u.mesh.interpolate(u.values, points))
    return degree_of_values(values, probe.triangles)


def local_degree(
    u: SphereField, center: np.ndarray, rho: float, probe_level: int = PROBE_LEVEL
) -> int:
    r"""Degree of ``u`` restricted to the sphere ``|x - center| = rho``.

    The field is interpolated onto an icosphere probe of the given radius.

    Args:
        u (SphereField): The field.
        center (np.ndarray): Probe centre.
        rho (float): Probe radius, at least twice the mesh size.
        probe_level (int, optional): Subdivision level of the probe.
            (default: :obj:`3`)

    Returns:
        int: The local degree.
    """
    center = np.asarray(center, dtype=float).reshape(3)
    if rho < 2.0 * u.mesh.mesh_size_h * (1.0 - 1e-12):
        raise ResolutionError(
            f"probe radius {rho:.4g} is below twice the mesh size {u.mesh.mesh_size_h:.4g}"
        )
    if np.linalg.norm(center) + rho > 1.0 + 1e-12:
        raise ParameterError(f"probe sphere of radius {rho:.4g} exits the unit ball")
    return _probe_degree(u, center, rho, probe_level).degree


@dataclass(frozen=True)
class SingularPoint:
    position: np.ndarray
    degree: int
    concentration: float

    def to_dict(self) -> dict:
        return {
            "position": [float(x) for x in self.position],
            "degree": self.degree,
            "concentration": self.concentration,
        }


@dataclass(frozen=True)
class SingularSet:
    r"""Detected singular points of a field at resolution ``rho_min``."""

    points: Tuple[SingularPoint, ...]
    rho_min: float

    def __len__(self) -> int:
        return len(self.points)

    @property
    def positions(self) -> np.ndarray:
        return np.array([p.position for p in self.points]).reshape(-1, 3)

    @property
    def total_degree(self) -> int:
        return sum(p.degree for p in self.points)

    def to_dict(self) -> dict:
        return {
            "rho_min": self.rho_min,
            "count": len(self.points),
            "total_degree": self.total_degree,
            "points": [p.to_dict() for p in self.points],
        }


def _ball_sums(
    mesh: ShellMesh, weighted: np.ndarray, rho: float, points: np.ndarray
) -> np.ndarray:
    r"""Energy in ``B(x, rho)`` for every row ``x`` of ``points``.

    Tetrahedron energies are binned at their centroids on a voxel grid over
    ``[-1, 1]^3``, convolved with a ball stencil and read off by trilinear
    interpolation.
    """
    n = int(math.ceil(2.0 / max(rho / BALL_GRID_RATIO, 2.0 / BALL_GRID_MAX)))
    eps = 2.0 / n
    cells = np.clip(np.floor((mesh.centroids + 1.0) / eps).astype(np.int64), 0, n - 1)
    flat = np.ravel_multi_index(tuple(cells.T), (n, n, n))
    grid = np.bincount(flat, weights=weighted, minlength=n**3).reshape(n, n, n)
    reach = int(math.ceil(rho / eps))
    k = np.arange(-reach, reach + 1) * eps
    stencil = (k[:, None, None] ** 2 + k[None, :, None] ** 2 + k[None, None, :] ** 2 <= rho * rho)
    sums = signal.fftconvolve(grid, stencil.astype(float), mode="same")
    coords = ((points + 1.0) / eps - 0.5).T
    return np.maximum(ndimage.map_coordinates(sums, coords, order=1, mode="nearest"), 0.0)


def _clusters(points: np.ndarray, radius: float) -> List[np.ndarray]:
    r"""Single-linkage groups at ``radius`` of ``points`` binned in cells of ``radius / 4``."""
    keys = np.floor(points / (0.25 * radius)).astype(np.int64)
    _, bins = np.unique(keys, axis=0, return_inverse=True)
    bins = bins.reshape(-1)
    n_bins = int(bins.max()) + 1
    count = np.bincount(bins, minlength=n_bins)
    reps = np.stack(
        [np.bincount(bins, weights=points[:, d], minlength=n_bins) for d in range(3)], axis=1
    ) / count[:, None]
    pairs = cKDTree(reps).query_pairs(radius, output_type="ndarray")
    graph = sparse.coo_matrix(
        (np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n_bins, n_bins)
    )
    _, labels = csgraph.connected_components(graph, directed=False)
    labels = labels[bins]
    return [np.flatnonzero(labels == k) for k in np.unique(labels)]


def detect_singularities(
    u: SphereField,
    rho_min: Optional[float] = None,
    threshold: float = FOUR_PI,
    probe_level: int = PROBE_LEVEL,
) -> SingularSet:
    r"""Find points of energy concentration carrying a nonzero local degree.

    Every vertex with ``|x| + rho_min <= 1`` is scored by its rescaled energy
    at ``rho_min``; the ball sums come from a voxel convolution of spacing
    about ``rho_min / 6``. A vertex is hot when its score reaches
    ``threshold``. Hot vertices are grouped by single linkage at distance
    ``2 rho_min`` and a group is kept at its excess-weighted centroid when
    the local degree at radius ``2 rho_min`` is nonzero. The recorded
    concentration is the exact rescaled energy at the hottest vertex. Kept
    points closer than ``2 rho_min`` are merged.

    Args:
        u (SphereField): The field.
        rho_min (float, optional): Detection radius; defaults to twice the
            mesh size. (default: :obj:`None`)
        threshold (float, optional): Rescaled-energy threshold.
            (default: :obj:`4 pi`)
        probe_level (int, optional): Level of the local-degree probe.
            (default: :obj:`3`)

    Returns:
        SingularSet: The detected points, possibly none.
    """
    mesh = u.mesh
    h = mesh.mesh_size_h
    rho_min = 2.0 * h if rho_min is None else float(rho_min)
    if rho_min < 2.0 * h * (1.0 - 1e-12):
        raise ResolutionError(f"rho_min {rho_min:.4g} is below twice the mesh size {h:.4g}")

    weighted = mesh.volumes * tet_energy_density(u)
    ids = np.flatnonzero(mesh.radii + rho_min <= 1.0 + 1e-12)
    if ids.size == 0:
        return SingularSet(points=(), rho_min=rho_min)
    scores = _ball_sums(mesh, weighted, rho_min, mesh.vertices[ids]) / rho_min
    hot = scores >= threshold
    logger.debug(f"{int(hot.sum())} of {ids.size} vertices reach the threshold {threshold:.4g}")
    if not np.any(hot):
        return SingularSet(points=(), rho_min=rho_min)

    hot_ids = ids[hot]
    positions = mesh.vertices[hot_ids]
    hot_scores = scores[hot]
    excess = hot_scores - threshold + 1e-12
    found: List[Tuple[np.ndarray, float]] = []
    for members in _clusters(positions, 2.0 * rho_min):
        weights = excess[members]
        centroid = (weights[:, None] * positions[members]).sum(axis=0) / weights.sum()
        top = mesh.vertices[hot_ids[members[np.argmax(hot_scores[members])]]]
        ball = np.asarray(mesh.centroid_tree.query_ball_point(top, r=rho_min), dtype=np.int64)
        found.append((centroid, float(weighted[ball].sum()) / rho_min))

    points = []
    for centroid, peak in _merge(found, 2.0 * rho_min):
        radius = min(2.0 * rho_min, 1.0 - float(np.linalg.norm(centroid)))
        if radius <= h:
            logger.warning(
                f"Concentration point {centroid.tolist()} is too close to the boundary "
                f"for a degree probe; skipped"
            )
            continue
        deg = _probe_degree(u, centroid, radius, probe_level).degree
        if deg == 0:
            continue
        points.append(SingularPoint(position=centroid, degree=deg, concentration=peak))
    points.sort(key=lambda p: tuple(np.round(p.position, 12)))
    logger.info(f"Detected {len(points)} singular point(s) at rho_min={rho_min:.4g}")
    return SingularSet(points=tuple(points), rho_min=rho_min)


def _merge(found: List[Tuple[np.ndarray, float]], radius: float) -> List[Tuple[np.ndarray, float]]:
    merged = list(found)
    changed = True
    while changed and len(merged) > 1:
        changed = False
        for i in range(len(merged)):
            for j in range(i + 1, len(merged)):
                if np.linalg.norm(merged[i][0] - merged[j][0]) < radius:
                    (pi, si), (pj, sj) = merged[i], merged[j]
                    merged[i] = ((pi * si + pj * sj) / (si + sj), max(si, sj))
                    del merged[j]
                    changed = True
                    break
            if changed:
                break
    return merged


def antipodal(psi: BoundaryField) -> BoundaryField:
    return BoundaryField(psi.sphere, -psi.values)
