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
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, TypeAdapter, field_validator, model_validator
from scipy.spatial.transform import Rotation
from camel.logger import get_logger

from .ball_mesh import ShellMesh, SphereMesh, surface_shape_gradients, tangent_basis
from .common import (
    HOLDER_SEED,
    MeshMismatchError,
    ParameterError,
    check_unit_rows,
    is_orthogonal,
    normalize_rows,
    smooth_step,
)

logger = get_logger(__name__)

UNIT_TOLERANCE = 1e-10
HOLDER_RANDOM_PAIRS = 100_000
# Ratio of the bubble core to the cap radius in the stereographic chart.
BUBBLE_CORE = 0.5

Vector3 = Tuple[float, float, float]


@dataclass(frozen=True, eq=False)
class SphereField:
    r"""Unit vector per vertex of a :class:`ShellMesh`.

    Args:
        mesh (ShellMesh): Mesh the field is sampled on.
        values (np.ndarray): ``(n_vertices, 3)`` unit vectors.
    """

    mesh: ShellMesh
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.mesh.n_vertices, 3):
            raise MeshMismatchError(
                f"field has shape {values.shape}, mesh has {self.mesh.n_vertices} vertices"
            )
        check_unit_rows(values, UNIT_TOLERANCE, "sphere field")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def rotated(self, matrix: np.ndarray) -> "SphereField":
        return SphereField(self.mesh, self.values @ np.asarray(matrix, dtype=float).T)

    def boundary_trace(self) -> "BoundaryField":
        return BoundaryField(self.mesh.sphere, self.values[self.mesh.boundary_vertex_ids])


@dataclass(frozen=True, eq=False)
class BoundaryField:
    r"""Unit vector per vertex of a :class:`SphereMesh`."""

    sphere: SphereMesh
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.shape != (self.sphere.n_vertices, 3):
            raise MeshMismatchError(
                f"boundary field has shape {values.shape}, sphere has "
                f"{self.sphere.n_vertices} vertices"
            )
        check_unit_rows(values, UNIT_TOLERANCE, "boundary field")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def rotated(self, matrix: np.ndarray) -> "BoundaryField":
        return BoundaryField(self.sphere, self.values @ np.asarray(matrix, dtype=float).T)


def same_sphere(a: SphereMesh, b: SphereMesh) -> bool:
    if a is b:
        return True
    return a.level == b.level and np.array_equal(a.vertices, b.vertices)


def same_shell_mesh(a: ShellMesh, b: ShellMesh) -> bool:
    if a is b:
        return True
    return a.layers == b.layers and same_sphere(a.sphere, b.sphere)


def _unit(vector, name: str) -> np.ndarray:
    arr = np.asarray(vector, dtype=float)
    norm = float(np.linalg.norm(arr))
    if arr.shape != (3,) or norm < 1e-12:
        raise ValueError(f"{name} must be a nonzero 3-vector")
    return arr / norm


def inverse_stereographic(
    w: np.ndarray, center: np.ndarray, e1: np.ndarray, e2: np.ndarray
) -> np.ndarray:
    r"""Map complex chart coordinates about ``center`` back to the sphere.

    ``w = 0`` is ``center`` and ``w = inf`` is ``-center``. Large ``|w|`` is
    evaluated through ``1 / w`` so that the pole is reached without overflow.
    """
    w = np.asarray(w, dtype=complex)
    out = np.empty(w.shape + (3,))
    near = np.abs(w) <= 1.0
    if np.any(near):
        z = w[near]
        zz = np.abs(z) ** 2
        out[near] = (
            2.0 * z.real[:, None] * e1
            + 2.0 * z.imag[:, None] * e2
            + (1.0 - zz)[:, None] * center
        ) / (1.0 + zz)[:, None]
    far = ~near
    if np.any(far):
        g = np.conj(1.0 / w[far])
        gg = np.abs(g) ** 2
        out[far] = (
            2.0 * g.real[:, None] * e1
            + 2.0 * g.imag[:, None] * e2
            + (gg - 1.0)[:, None] * center
        ) / (1.0 + gg)[:, None]
    return out


class IdentitySpec(BaseModel):
    type: Literal["identity"] = "identity"

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.array(points, dtype=float)


class ConstantSpec(BaseModel):
    type: Literal["constant"] = "constant"
    vector: Vector3 = (0.0, 0.0, 1.0)

    @field_validator("vector")
    @classmethod
    def _nonzero(cls, v):
        _unit(v, "vector")
        return v

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.tile(_unit(self.vector, "vector"), (len(points), 1))


class RotationSpec(BaseModel):
    r"""Orthogonal map of the target, given as ``matrix`` or ``axis`` + ``angle``."""

    type: Literal["rotation"] = "rotation"
    matrix: Optional[List[List[float]]] = None
    axis: Optional[Vector3] = None
    angle: float = 0.0

    @model_validator(mode="after")
    def _check(self):
        if self.matrix is not None:
            if not is_orthogonal(np.asarray(self.matrix, dtype=float)):
                raise ValueError("rotation matrix must be orthogonal within 1e-12")
        elif self.axis is None:
            raise ValueError("rotation needs either `matrix` or `axis`")
        else:
            _unit(self.axis, "axis")
        return self

    def rotation_matrix(self) -> np.ndarray:
        if self.matrix is not None:
            return np.asarray(self.matrix, dtype=float)
        return Rotation.from_rotvec(self.angle * _unit(self.axis, "axis")).as_matrix()

    def apply(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(points, dtype=float) @ self.rotation_matrix().T


class CapTwistSpec(BaseModel):
    r"""Rotation about ``center`` by ``angle`` times a cutoff of the distance to it."""

    type: Literal["cap_twist"] = "cap_twist"
    center: Vector3 = (0.0, 0.0, 1.0)
    radius: float = Field(0.5, gt=0.0, lt=math.pi / 2)
    angle: float = 0.0

    @field_validator("center")
    @classmethod
    def _nonzero(cls, v):
        _unit(v, "center")
        return v

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        center = _unit(self.center, "center")
        dist = np.arccos(np.clip(points @ center, -1.0, 1.0))
        turn = self.angle * smooth_step(dist / self.radius)
        return Rotation.from_rotvec(turn[:, None] * center).apply(points)


class BubbleDipoleSpec(BaseModel):
    r"""A degree +1 bubble and a degree -1 bubble in two disjoint caps.

    The first cap has radius ``scale`` around ``center``; the second has the
    same radius and starts a geodesic gap of ``separation`` beyond the first,
    so the centres are ``2 * scale + separation`` apart.
    """

    type: Literal["bubble_dipole"] = "bubble_dipole"
    center: Vector3 = (0.0, 0.0, 1.0)
    scale: float = Field(0.4, gt=0.0, lt=math.pi / 2)
    separation: float = Field(0.1, gt=0.0, lt=math.pi / 4)

    @field_validator("center")
    @classmethod
    def _nonzero(cls, v):
        _unit(v, "center")
        return v

    def cap_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        first = _unit(self.center, "center")
        span = 2.0 * self.scale + self.separation
        if 4.0 * self.scale + self.separation >= 2.0 * math.pi:
            raise ParameterError(
                f"bubble dipole caps overlap (scale={self.scale}, separation={self.separation})"
            )
        e1, _ = tangent_basis(first)
        return first, math.cos(span) * first + math.sin(span) * e1

    def apply(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        out = points.copy()
        for center, sign in zip(self.cap_centers(), (1, -1)):
            inside = points @ center > math.cos(self.scale)
            if np.any(inside):
                out[inside] = _bubble(points[inside], center, self.scale, sign)
        return out


def _bubble(pts: np.ndarray, center: np.ndarray, scale: float, sign: int) -> np.ndarray:
    r"""Bubble of degree ``sign`` on points of the cap of ``scale`` about ``center``.

    In the chart ``z`` about ``center`` with cap radius ``R = tan(scale / 2)``
    the map is ``z + chi(|z| / R) * k R / z`` (``z`` conjugated in the pole term
    for ``sign = -1``), so the identity is kept on the cap boundary and the
    cap centre goes to ``-center``.
    """
    e1, e2 = tangent_basis(center)
    z = (pts @ e1 + 1j * (pts @ e2)) / (1.0 + pts @ center)
    radius = math.tan(scale / 2.0)
    modulus = np.abs(z)
    cut = smooth_step(modulus / radius)
    at_pole = modulus < 1e-300
    safe = np.where(at_pole, 1.0, z)
    pole = BUBBLE_CORE * radius / (safe if sign > 0 else np.conj(safe))
    w = z + cut * pole
    mapped = inverse_stereographic(w, center, e1, e2)
    mapped[at_pole] = -center
    return normalize_rows(mapped)


class CompositionSpec(BaseModel):
    r"""Apply ``members`` in order, the first one innermost."""

    type: Literal["composition"] = "composition"
    members: List["BoundarySpec"] = Field(min_length=1)

    def apply(self, points: np.ndarray) -> np.ndarray:
        out = np.asarray(points, dtype=float)
        for member in self.members:
            out = member.apply(out)
        return out


BoundarySpec = Annotated[
    Union[
        IdentitySpec,
        ConstantSpec,
        RotationSpec,
        CapTwistSpec,
        BubbleDipoleSpec,
        CompositionSpec,
    ],
    Field(discriminator="type"),
]
CompositionSpec.model_rebuild()
_SPEC_ADAPTER = TypeAdapter(BoundarySpec)


def parse_boundary_spec(data) -> BoundarySpec:
    r"""Validate a JSON-like mapping into a boundary spec model."""
    if isinstance(data, BaseModel):
        return data
    return _SPEC_ADAPTER.validate_python(data)


def eval_boundary_spec(spec, sphere: SphereMesh) -> BoundaryField:
    r"""Sample a boundary spec at the vertices of ``sphere``.

    Args:
        spec: A boundary spec model, or a mapping with a ``type`` key.
        sphere (SphereMesh): Sphere triangulation to sample on.

    Returns:
        BoundaryField: The sampled unit-norm values.
    """
    spec = parse_boundary_spec(spec)
    values = spec.apply(sphere.vertices)
    return BoundaryField(sphere, normalize_rows(values))


def _check_p(p: float) -> None:
    if not (p >= 1.0 or math.isinf(p)):
        raise ParameterError(f"exponent p must lie in [1, inf], got {p}")


def surface_w1p_parts(
    vertices: np.ndarray,
    triangles: np.ndarray,
    difference: np.ndarray,
    p: float,
    weights: Optional[np.ndarray] = None,
    areas: Optional[np.ndarray] = None,
    grads: Optional[np.ndarray] = None,
) -> Tuple[float, float]:
    r"""Value and gradient parts of the W^{1,p} norm of a vertex field.

    Values are integrated with lumped vertex weights, gradients with the
    per-triangle constant tangential gradient of the affine interpolant.

    Returns:
        Tuple[float, float]: ``(||d||_{L^p}, ||grad_T d||_{L^p})``; for
        ``p = inf`` the maxima.
    """
    _check_p(p)
    if grads is None:
        grads = surface_shape_gradients(vertices, triangles)
    if areas is None:
        p0 = vertices[triangles[:, 0]]
        areas = 0.5 * np.linalg.norm(
            np.cross(vertices[triangles[:, 1]] - p0, vertices[triangles[:, 2]] - p0), axis=1
        )
    if weights is None:
        weights = np.zeros(vertices.shape[0])
        np.add.at(weights, triangles.reshape(-1), np.repeat(areas / 3.0, 3))
    jac = np.einsum("fac,fax->fcx", difference[triangles], grads)
    grad_norm = np.sqrt(np.einsum("fcx,fcx->f", jac, jac))
    value_norm = np.linalg.norm(difference, axis=1)
    if math.isinf(p):
        return float(np.max(value_norm)), float(np.max(grad_norm))
    return (
        float(np.sum(weights * value_norm**p) ** (1.0 / p)),
        float(np.sum(areas * grad_norm**p) ** (1.0 / p)),
    )


def w1p_parts(f: BoundaryField, g: BoundaryField, p: float) -> Tuple[float, float]:
    r"""Return ``(||f - g||_{L^p}, ||grad_T (f - g)||_{L^p})`` on the sphere."""
    if not same_sphere(f.sphere, g.sphere):
        raise MeshMismatchError("boundary fields live on different sphere meshes")
    sphere = f.sphere
    return surface_w1p_parts(
        sphere.vertices,
        sphere.triangles,
        f.values - g.values,
        p,
        weights=sphere.vertex_weights,
        areas=sphere.areas,
        grads=sphere.shape_gradients,
    )


def w1p_distance(
    f: BoundaryField, g: BoundaryField, p: float, normalized: bool = False
) -> float:
    r"""W^{1,p} distance of two boundary fields.

    Args:
        f (BoundaryField): First field.
        g (BoundaryField): Second field on the same sphere.
        p (float): Exponent in ``[1, inf]``.
        normalized (bool, optional): Divide the measure by twice the sphere
            area, which makes the distance nondecreasing in ``p``. For
            ``p = inf`` the two parts are then combined by a maximum.
            (default: :obj:`False`)

    Returns:
        float: The distance.
    """
    value, grad = w1p_parts(f, g, p)
    if math.isinf(p):
        return max(value, grad) if normalized else value + grad
    total = value**p + grad**p
    if normalized:
        total /= 2.0 * f.sphere.total_area
    return float(total ** (1.0 / p))


def linf_distance(u, v) -> float:
    r"""Largest pointwise distance of two fields sampled on the same vertices."""
    if u.values.shape != v.values.shape:
        raise MeshMismatchError("fields have different vertex counts")
    return float(np.max(np.linalg.norm(u.values - v.values, axis=1)))


@lru_cache(maxsize=8)
def _sampled_pairs(mesh: ShellMesh) -> np.ndarray:
    adj = mesh.adjacency.astype(np.int64)
    ring = (adj + adj @ adj).tocoo()
    keep = ring.row < ring.col
    local = np.stack([ring.row[keep], ring.col[keep]], axis=1)
    rng = np.random.default_rng(HOLDER_SEED)
    n = mesh.n_vertices
    far = rng.integers(0, n, size=(HOLDER_RANDOM_PAIRS, 2))
    far = far[far[:, 0] != far[:, 1]]
    far.sort(axis=1)
    pairs = np.unique(np.concatenate([local, far], axis=0), axis=0)
    dist = np.linalg.norm(mesh.vertices[pairs[:, 0]] - mesh.vertices[pairs[:, 1]], axis=1)
    pairs = pairs[dist >= 2.0 * mesh.mesh_size_h]
    logger.debug(f"Hoelder pair set: {pairs.shape[0]} pairs at separation >= 2h")
    return pairs


def _holder_quotient(
    diff: np.ndarray, vertices: np.ndarray, i: np.ndarray, j: np.ndarray, beta: float
) -> float:
    if i.size == 0:
        return 0.0
    num = np.linalg.norm(diff[i] - diff[j], axis=1)
    den = np.linalg.norm(vertices[i] - vertices[j], axis=1) ** beta
    return float(np.max(num / den))


def holder_distance(
    u: SphereField,
    v: SphereField,
    beta: float,
    region: Optional[np.ndarray] = None,
    pairs: Literal["sampled", "all"] = "sampled",
) -> float:
    r"""Discrete C^{0,beta} distance of two ball fields.

    The seminorm only looks at vertex pairs at least ``2h`` apart. The
    ``"sampled"`` pair set holds the two-ring neighbours of every vertex and
    a fixed seeded sample of long-range pairs; ``"all"`` is exhaustive.

    Args:
        u (SphereField): First field.
        v (SphereField): Second field on the same mesh.
        beta (float): Hoelder exponent in ``]0, 1]``.
        region (np.ndarray, optional): Boolean vertex mask; both the sup term
            and the pairs are restricted to it. (default: :obj:`None`)
        pairs (str, optional): ``"sampled"`` or ``"all"``.
            (default: :obj:`"sampled"`)

    Returns:
        float: ``sup |u - v| + max |d_i - d_j| / |x_i - x_j|^beta``.
    """
    if not same_shell_mesh(u.mesh, v.mesh):
        raise MeshMismatchError("fields live on different ball meshes")
    if not 0.0 < beta <= 1.0:
        raise ParameterError(f"Hoelder exponent must lie in ]0, 1], got {beta}")
    mesh = u.mesh
    diff = u.values - v.values
    mask = np.ones(mesh.n_vertices, dtype=bool) if region is None else np.asarray(region, bool)
    if not np.any(mask):
        return 0.0
    sup = float(np.max(np.linalg.norm(diff[mask], axis=1)))
    verts = mesh.vertices
    if pairs == "sampled":
        sample = _sampled_pairs(mesh)
        sample = sample[mask[sample[:, 0]] & mask[sample[:, 1]]]
        return sup + _holder_quotient(diff, verts, sample[:, 0], sample[:, 1], beta)
    if pairs != "all":
        raise ParameterError(f"unknown pair set {pairs!r}")
    ids = np.flatnonzero(mask)
    floor = 2.0 * mesh.mesh_size_h
    best = 0.0
    for k, i in enumerate(ids[:-1]):
        j = ids[k + 1 :]
        far = np.linalg.norm(verts[j] - verts[i], axis=1) >= floor
        j = j[far]
        best = max(best, _holder_quotient(diff, verts, np.full(j.size, i), j, beta))
    return sup + best
