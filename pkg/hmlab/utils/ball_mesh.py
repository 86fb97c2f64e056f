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
r"""Layered-icosphere meshes of the closed unit ball.

The ball is the product of ``L`` radial shells ``r_k = k / L`` with one fixed
icosphere triangulation, plus the origin. Vertex ``0`` is the origin and
vertex ``1 + (k - 1) * Ns + j`` sits at ``r_k * omega_j``.
"""

import math
from dataclasses import dataclass
from functools import cached_property
from typing import List, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.spatial import ConvexHull, Delaunay, cKDTree
from camel.logger import get_logger

from .common import ConstructionError, ParameterError

logger = get_logger(__name__)

MAX_SPHERE_LEVEL = 7
_LOCATE_CANDIDATES = (24, 96)
_ORPHAN_TOLERANCE = -0.25


def _icosahedron() -> Tuple[np.ndarray, np.ndarray]:
    phi = (1.0 + math.sqrt(5.0)) / 2.0
    verts = np.array(
        [
            (-1, phi, 0),
            (1, phi, 0),
            (-1, -phi, 0),
            (1, -phi, 0),
            (0, -1, phi),
            (0, 1, phi),
            (0, -1, -phi),
            (0, 1, -phi),
            (phi, 0, -1),
            (phi, 0, 1),
            (-phi, 0, -1),
            (-phi, 0, 1),
        ],
        dtype=float,
    )
    verts /= np.linalg.norm(verts, axis=1)[:, None]
    faces = ConvexHull(verts).simplices.astype(np.int64)
    return verts, _orient_outward(verts, faces)


def _orient_outward(verts: np.ndarray, faces: np.ndarray) -> np.ndarray:
    p0, p1, p2 = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    normal = np.cross(p1 - p0, p2 - p0)
    inward = np.einsum("ij,ij->i", normal, p0 + p1 + p2) < 0
    faces = faces.copy()
    faces[inward] = faces[inward][:, [0, 2, 1]]
    return faces


def _subdivide(verts: np.ndarray, faces: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    r"""Split every triangle into four, pushing the new midpoints to the sphere.

    Existing vertices keep their indices, so coarser levels are prefixes of
    finer ones.
    """
    edges = np.concatenate(
        [faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]], axis=0
    )
    edges.sort(axis=1)
    unique, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    mid = verts[unique[:, 0]] + verts[unique[:, 1]]
    mid /= np.linalg.norm(mid, axis=1)[:, None]

    n_faces = faces.shape[0]
    offset = verts.shape[0]
    ab = offset + inverse[:n_faces]
    bc = offset + inverse[n_faces : 2 * n_faces]
    ca = offset + inverse[2 * n_faces :]
    a, b, c = faces[:, 0], faces[:, 1], faces[:, 2]
    new_faces = np.concatenate(
        [
            np.stack([a, ab, ca], axis=1),
            np.stack([ab, b, bc], axis=1),
            np.stack([ca, bc, c], axis=1),
            np.stack([ab, bc, ca], axis=1),
        ],
        axis=0,
    )
    return np.concatenate([verts, mid], axis=0), new_faces


def surface_shape_gradients(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    r"""Tangential gradients of the three P1 hat functions on each triangle.

    Args:
        vertices (np.ndarray): ``(V, 3)`` positions.
        triangles (np.ndarray): ``(F, 3)`` vertex indices.

    Returns:
        np.ndarray: ``(F, 3, 3)`` array; ``[f, i]`` is the in-plane gradient of
        the hat function of corner ``i`` of triangle ``f``.
    """
    p0 = vertices[triangles[:, 0]]
    edges = np.stack(
        [vertices[triangles[:, 1]] - p0, vertices[triangles[:, 2]] - p0], axis=2
    )
    gram = np.einsum("fki,fkj->fij", edges, edges)
    det = gram[:, 0, 0] * gram[:, 1, 1] - gram[:, 0, 1] ** 2
    if np.any(det <= 0.0):
        bad = int(np.flatnonzero(det <= 0.0)[0])
        raise ConstructionError(f"degenerate surface triangle {bad}")
    inv = np.empty_like(gram)
    inv[:, 0, 0] = gram[:, 1, 1] / det
    inv[:, 1, 1] = gram[:, 0, 0] / det
    inv[:, 0, 1] = inv[:, 1, 0] = -gram[:, 0, 1] / det
    dual = np.einsum("fki,fij->fkj", edges, inv)
    grads = np.empty((triangles.shape[0], 3, 3))
    grads[:, 1, :] = dual[:, :, 0]
    grads[:, 2, :] = dual[:, :, 1]
    grads[:, 0, :] = -(grads[:, 1, :] + grads[:, 2, :])
    return grads


def triangle_areas(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    p0 = vertices[triangles[:, 0]]
    cross = np.cross(vertices[triangles[:, 1]] - p0, vertices[triangles[:, 2]] - p0)
    return 0.5 * np.linalg.norm(cross, axis=1)


@dataclass(frozen=True, eq=False)
class SphereMesh:
    r"""Icosphere triangulation of the unit sphere.

    Args:
        vertices (np.ndarray): ``(10 * 4**level + 2, 3)`` unit vectors.
        triangles (np.ndarray): ``(20 * 4**level, 3)`` outward-oriented
            vertex index triples.
        level (int): Number of subdivisions of the icosahedron.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    level: int

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_triangles(self) -> int:
        return int(self.triangles.shape[0])

    @cached_property
    def edges(self) -> np.ndarray:
        tri = self.triangles
        edges = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        edges.sort(axis=1)
        return np.unique(edges, axis=0)

    @cached_property
    def areas(self) -> np.ndarray:
        return triangle_areas(self.vertices, self.triangles)

    @property
    def total_area(self) -> float:
        return float(np.sum(self.areas))

    @cached_property
    def vertex_weights(self) -> np.ndarray:
        r"""Lumped quadrature weights: a third of each adjacent triangle area."""
        weights = np.zeros(self.n_vertices)
        np.add.at(weights, self.triangles.reshape(-1), np.repeat(self.areas / 3.0, 3))
        return weights

    @cached_property
    def shape_gradients(self) -> np.ndarray:
        return surface_shape_gradients(self.vertices, self.triangles)

    @cached_property
    def max_edge_length(self) -> float:
        e = self.edges
        return float(np.max(np.linalg.norm(self.vertices[e[:, 0]] - self.vertices[e[:, 1]], axis=1)))

    def euler_characteristic(self) -> int:
        return self.n_vertices - int(self.edges.shape[0]) + self.n_triangles


def build_sphere_mesh(level: int) -> SphereMesh:
    r"""Subdivide the icosahedron ``level`` times.

    Args:
        level (int): Subdivision level in ``[0, 7]``.

    Returns:
        SphereMesh: The icosphere.
    """
    if not isinstance(level, (int, np.integer)) or not 0 <= level <= MAX_SPHERE_LEVEL:
        raise ParameterError(
            f"sphere subdivision level must be an integer in [0, {MAX_SPHERE_LEVEL}], got {level}"
        )
    verts, faces = _icosahedron()
    for _ in range(int(level)):
        verts, faces = _subdivide(verts, faces)
    faces = _orient_outward(verts, faces)
    verts.setflags(write=False)
    faces.setflags(write=False)
    return SphereMesh(vertices=verts, triangles=faces, level=int(level))


def build_cap_probe(
    center: np.ndarray, radius: float, rings: int = 48
) -> Tuple[np.ndarray, np.ndarray]:
    r"""Triangulate the geodesic cap of ``radius`` around ``center``.

    The cap is meshed in stereographic coordinates about ``center`` with
    ``rings`` concentric rings of ``6 i`` points scaled to ``tan(radius / 2)``,
    then lifted to the sphere. The planar pattern does not depend on
    ``radius``, so probes at different scales are similar to each other.

    Returns:
        Tuple[np.ndarray, np.ndarray]: ``(vertices, triangles)`` with
        outward-oriented triangles.
    """
    if rings < 2:
        raise ParameterError(f"cap probe needs at least 2 rings, got {rings}")
    pts = [np.zeros((1, 2))]
    for i in range(1, rings + 1):
        angles = 2.0 * math.pi * np.arange(6 * i) / (6 * i)
        pts.append((i / rings) * np.stack([np.cos(angles), np.sin(angles)], axis=1))
    planar = np.concatenate(pts, axis=0)
    triangles = Delaunay(planar).simplices.astype(np.int64)

    e1, e2 = tangent_basis(center)
    z = planar * math.tan(radius / 2.0)
    zz = np.sum(z**2, axis=1)
    lifted = (
        2.0 * z[:, :1] * e1
        + 2.0 * z[:, 1:] * e2
        + (1.0 - zz)[:, None] * np.asarray(center, dtype=float)
    ) / (1.0 + zz)[:, None]
    return lifted, _orient_outward(lifted, triangles)


def tangent_basis(center: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    r"""Right-handed orthonormal pair ``(e1, e2)`` with ``e1 x e2 = center``."""
    c = np.asarray(center, dtype=float)
    c = c / np.linalg.norm(c)
    seed = np.eye(3)[int(np.argmin(np.abs(c)))]
    e1 = np.cross(seed, c)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(c, e1)
    return e1, e2


def p1_gradient(points: np.ndarray, values: np.ndarray) -> np.ndarray:
    r"""Gradient of the affine interpolant of ``values`` on one tetrahedron.

    Args:
        points (np.ndarray): ``(4, 3)`` vertex positions.
        values (np.ndarray): ``(4,)`` scalars or ``(4, m)`` components.

    Returns:
        np.ndarray: ``(3,)`` gradient, or ``(m, 3)`` for ``m`` components.
    """
    points = np.asarray(points, dtype=float)
    values = np.asarray(values, dtype=float)
    frame = points[1:] - points[0]
    scale = max(float(np.max(np.abs(frame))), 1e-300)
    if abs(np.linalg.det(frame / scale)) < 1e-12:
        raise ParameterError("degenerate tetrahedron")
    delta = values[1:] - values[0]
    grad = np.linalg.solve(frame, delta)
    return grad.T if grad.ndim == 2 else grad


def signed_volumes(vertices: np.ndarray, tets: np.ndarray) -> np.ndarray:
    p0 = vertices[tets[:, 0]]
    return (
        np.einsum(
            "ij,ij->i",
            vertices[tets[:, 1]] - p0,
            np.cross(vertices[tets[:, 2]] - p0, vertices[tets[:, 3]] - p0),
        )
        / 6.0
    )


@dataclass(frozen=True, eq=False)
class ShellMesh:
    r"""Tetrahedral mesh of the unit ball made of radial shells.

    Args:
        sphere (SphereMesh): Triangulation repeated on every shell.
        layers (int): Number of shells ``L``.
        vertices (np.ndarray): ``(L * Ns + 1, 3)`` positions, origin first.
        tetrahedra (np.ndarray): ``(T, 4)`` positively oriented index quadruples.
        volumes (np.ndarray): ``(T,)`` tetrahedron volumes.
        boundary_vertex_ids (np.ndarray): Indices of the outermost shell.
        mesh_size_h (float): Largest tetrahedron edge length.
    """

    sphere: SphereMesh
    layers: int
    vertices: np.ndarray
    tetrahedra: np.ndarray
    volumes: np.ndarray
    boundary_vertex_ids: np.ndarray
    mesh_size_h: float

    @property
    def level(self) -> int:
        return self.sphere.level

    @property
    def n_vertices(self) -> int:
        return int(self.vertices.shape[0])

    @property
    def n_tetrahedra(self) -> int:
        return int(self.tetrahedra.shape[0])

    def shell_vertex_ids(self, k: int) -> np.ndarray:
        r"""Vertex indices of shell ``k`` in ``1..L``, ordered like the sphere."""
        ns = self.sphere.n_vertices
        return 1 + (k - 1) * ns + np.arange(ns)

    @cached_property
    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.vertices, axis=1)

    @cached_property
    def interior_ids(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[self.boundary_vertex_ids] = False
        return np.flatnonzero(mask)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.tetrahedra].mean(axis=1)

    @cached_property
    def shape_gradients(self) -> np.ndarray:
        r"""``(T, 4, 3)`` gradients of the four hat functions per tetrahedron."""
        pts = self.vertices[self.tetrahedra]
        frames = pts[:, 1:, :] - pts[:, :1, :]
        inv = np.linalg.inv(frames)
        grads = np.empty((self.n_tetrahedra, 4, 3))
        grads[:, 1:, :] = np.transpose(inv, (0, 2, 1))
        grads[:, 0, :] = -grads[:, 1:, :].sum(axis=1)
        return grads

    @cached_property
    def stiffness(self) -> sparse.csr_matrix:
        r"""P1 stiffness matrix; ``E[u] = sum_c u_c^T K u_c``."""
        g = self.shape_gradients
        local = np.einsum("tai,tbi->tab", g, g) * self.volumes[:, None, None]
        rows = np.repeat(self.tetrahedra, 4, axis=1).reshape(-1)
        cols = np.tile(self.tetrahedra, (1, 4)).reshape(-1)
        k = sparse.coo_matrix(
            (local.reshape(-1), (rows, cols)), shape=(self.n_vertices,) * 2
        )
        return k.tocsr()

    @cached_property
    def adjacency(self) -> sparse.csr_matrix:
        r"""Vertex graph: two vertices are adjacent when they share a tetrahedron."""
        pairs = [(a, b) for a in range(4) for b in range(4) if a != b]
        rows = np.concatenate([self.tetrahedra[:, a] for a, _ in pairs])
        cols = np.concatenate([self.tetrahedra[:, b] for _, b in pairs])
        adj = sparse.coo_matrix(
            (np.ones(rows.shape[0], dtype=np.int8), (rows, cols)),
            shape=(self.n_vertices,) * 2,
        ).tocsr()
        adj.data[:] = 1
        return adj

    @cached_property
    def interior_coloring(self) -> List[np.ndarray]:
        r"""Greedy coloring of interior vertices in ascending index order.

        Vertices of one color share no tetrahedron, so updating a whole color
        at once is the same as visiting its members one after another.
        """
        adj = self.adjacency
        color = np.full(self.n_vertices, -1, dtype=np.int64)
        for i in self.interior_ids:
            neighbours = adj.indices[adj.indptr[i] : adj.indptr[i + 1]]
            used = set(color[neighbours].tolist())
            c = 0
            while c in used:
                c += 1
            color[i] = c
        classes = [np.flatnonzero(color == c) for c in range(int(color.max()) + 1)]
        logger.debug(f"Interior coloring uses {len(classes)} colors")
        return classes

    @cached_property
    def centroid_tree(self) -> cKDTree:
        return cKDTree(self.centroids)

    def is_connected(self) -> bool:
        n, _ = csgraph.connected_components(self.adjacency, directed=False)
        return n == 1

    def locate(self, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        r"""Find a containing tetrahedron and barycentric weights per point.

        Points just outside the inscribed polyhedron but inside the unit ball
        get the nearest tetrahedron with clipped, renormalized weights.

        Args:
            points (np.ndarray): ``(n, 3)`` query points with ``|x| <= 1``.

        Returns:
            Tuple[np.ndarray, np.ndarray]: ``(tet ids, (n, 4) weights)``.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        outside = np.linalg.norm(points, axis=1) > 1.0 + 1e-12
        if np.any(outside):
            raise ParameterError(
                f"{int(outside.sum())} point(s) lie outside the unit ball"
            )
        n = points.shape[0]
        tet_ids = np.zeros(n, dtype=np.int64)
        weights = np.zeros((n, 4))
        best = np.full(n, -np.inf)
        pending = np.arange(n)
        for k in _LOCATE_CANDIDATES:
            if pending.size == 0:
                break
            k = min(k, self.n_tetrahedra)
            _, cand = self.centroid_tree.query(points[pending], k=k)
            cand = np.atleast_2d(cand).reshape(pending.size, k)
            bary = self._barycentric(points[pending], cand)
            worst = bary.min(axis=2)
            pick = np.argmax(worst, axis=1)
            rows = np.arange(pending.size)
            score = worst[rows, pick]
            better = score > best[pending]
            idx = pending[better]
            tet_ids[idx] = cand[rows, pick][better]
            weights[idx] = bary[rows, pick][better]
            best[idx] = score[better]
            pending = pending[best[pending] < -1e-10]
        if np.any(best < _ORPHAN_TOLERANCE):
            first = int(np.flatnonzero(best < _ORPHAN_TOLERANCE)[0])
            raise ConstructionError(
                f"point location failed for {int((best < _ORPHAN_TOLERANCE).sum())} "
                f"orphan point(s), first {points[first].tolist()}"
            )
        if pending.size:
            logger.debug(f"Clipped barycentric weights for {pending.size} point(s)")
            clipped = np.clip(weights[pending], 0.0, None)
            weights[pending] = clipped / clipped.sum(axis=1, keepdims=True)
        return tet_ids, weights

    def _barycentric(self, points: np.ndarray, cand: np.ndarray) -> np.ndarray:
        x0 = self.vertices[self.tetrahedra[cand, 0]]
        grads = self.shape_gradients[cand]
        bary = np.einsum("nkai,nki->nka", grads, points[:, None, :] - x0)
        bary[:, :, 0] += 1.0
        return bary

    def interpolate(self, values: np.ndarray, points: np.ndarray) -> np.ndarray:
        r"""Evaluate the P1 interpolant of per-vertex ``values`` at ``points``."""
        tet_ids, weights = self.locate(points)
        return np.einsum("na,nac->nc", weights, np.asarray(values)[self.tetrahedra[tet_ids]])

    def statistics(self) -> dict:
        ball = 4.0 * math.pi / 3.0
        return {
            "level": self.level,
            "layers": self.layers,
            "vertices": self.n_vertices,
            "tetrahedra": self.n_tetrahedra,
            "boundary_vertices": int(self.boundary_vertex_ids.size),
            "mesh_size_h": self.mesh_size_h,
            "volume": float(np.sum(self.volumes)),
            "volume_relative_error": float(np.sum(self.volumes)) / ball - 1.0,
            "sphere_area_relative_error": self.sphere.total_area / (4.0 * math.pi) - 1.0,
        }


def build_shell_mesh(level: int, layers: int) -> ShellMesh:
    r"""Build the layered-icosphere mesh of the unit ball.

    Prisms between consecutive shells are split into three tetrahedra. With
    the corners of a sphere triangle sorted by global index, ``a < b < c``, the
    split is ``(a0 a1 b1 c1), (a0 b0 b1 c1), (a0 b0 c0 c1)``; every side
    quadrilateral therefore uses the diagonal from the lower-index column at
    the inner shell to the higher-index column at the outer shell, which both
    neighbouring prisms agree on. The innermost shell is coned to the origin.

    Args:
        level (int): Sphere subdivision level, at least 1.
        layers (int): Number of shells, at least 2.

    Returns:
        ShellMesh: The mesh.
    """
    if not isinstance(level, (int, np.integer)) or level < 1:
        raise ParameterError(f"shell mesh needs subdivision level >= 1, got {level}")
    if not isinstance(layers, (int, np.integer)) or layers < 2:
        raise ParameterError(f"shell mesh needs at least 2 layers, got {layers}")
    sphere = build_sphere_mesh(int(level))
    ns = sphere.n_vertices
    radii = np.arange(1, layers + 1) / layers
    vertices = np.concatenate(
        [np.zeros((1, 3)), (radii[:, None, None] * sphere.vertices[None]).reshape(-1, 3)]
    )

    tri = np.sort(sphere.triangles, axis=1)
    a, b, c = tri[:, 0], tri[:, 1], tri[:, 2]
    blocks = [np.stack([np.zeros_like(a), 1 + a, 1 + b, 1 + c], axis=1)]
    for k in range(1, layers):
        lo, hi = 1 + (k - 1) * ns, 1 + k * ns
        blocks.append(np.stack([lo + a, hi + a, hi + b, hi + c], axis=1))
        blocks.append(np.stack([lo + a, lo + b, hi + b, hi + c], axis=1))
        blocks.append(np.stack([lo + a, lo + b, lo + c, hi + c], axis=1))
    tets = np.concatenate(blocks, axis=0)

    vol = signed_volumes(vertices, tets)
    flip = vol < 0
    tets[flip] = tets[flip][:, [0, 1, 3, 2]]
    vol = np.abs(vol)
    tiny = 1e-14 / layers**3
    if np.any(vol <= tiny):
        bad = int(np.flatnonzero(vol <= tiny)[0])
        raise ConstructionError(
            f"degenerate tetrahedron {bad} with vertices {tets[bad].tolist()}"
        )

    edge_pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
    h = max(
        float(np.max(np.linalg.norm(vertices[tets[:, i]] - vertices[tets[:, j]], axis=1)))
        for i, j in edge_pairs
    )
    boundary = 1 + (layers - 1) * ns + np.arange(ns)
    for arr in (vertices, tets, vol, boundary):
        arr.setflags(write=False)
    logger.info(
        f"Built shell mesh s={level} L={layers}: {vertices.shape[0]} vertices, "
        f"{tets.shape[0]} tetrahedra, h={h:.4f}"
    )
    return ShellMesh(
        sphere=sphere,
        layers=int(layers),
        vertices=vertices,
        tetrahedra=tets,
        volumes=vol,
        boundary_vertex_ids=boundary,
        mesh_size_h=h,
    )
