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
r"""Explicit constructions used by the stability arguments.

Comparison maps, the projected harmonic extension, rotation fitting of
tangent maps, registration maps that move singularities onto each other,
the bubble scaling curve and the interpolation inequality.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError
from scipy.linalg import orthogonal_procrustes
from scipy.optimize import least_squares
from scipy.sparse.linalg import splu
from scipy.spatial.transform import Rotation
from camel.logger import get_logger

from .ball_mesh import ShellMesh, SphereMesh, build_cap_probe, build_sphere_mesh
from .common import (
    E3,
    EIGHT_PI,
    FOUR_PI,
    AlignmentError,
    ConstructionError,
    MeshMismatchError,
    NotApplicableError,
    ParameterError,
    ResolutionError,
    SlopeFit,
    fit_loglog_slope,
    is_orthogonal,
    normalize_rows,
    smooth_step,
)
from .energy import boundary_dirichlet_energy, dirichlet_energy, field_jacobians
from .sphere_fields import (
    BoundaryField,
    BubbleDipoleSpec,
    SphereField,
    same_sphere,
    surface_w1p_parts,
)
from .topology import SingularSet, degree, detect_singularities

logger = get_logger(__name__)

MIN_COMPARISON_MODULUS = 0.1
MIN_PROJECTION_DISTANCE = 1e-6
ZERO_ENERGY = 1e-12
DEFAULT_ANNULUS = (1.0 / 3.0, 2.0 / 3.0)


def _sphere_index(mesh: ShellMesh) -> np.ndarray:
    return (np.arange(mesh.n_vertices) - 1) % mesh.sphere.n_vertices


def _check_shell_radius(mesh: ShellMesh, rho: float) -> int:
    k = rho * mesh.layers
    if not 0.0 < rho < 1.0 or abs(k - round(k)) > 1e-9 or not 0 < round(k) < mesh.layers:
        raise ParameterError(
            f"rho={rho} must be an interior shell radius k/{mesh.layers}"
        )
    return int(round(k))


def _annulus_profile(
    mesh: ShellMesh, psi: BoundaryField, rho: float
) -> Tuple[np.ndarray, np.ndarray]:
    r"""Outer vertex ids and the linear interpolant ``z`` between ``psi`` and ``id``."""
    ids = np.flatnonzero(mesh.radii >= rho - 1e-12)
    ids = ids[ids > 0]
    r = mesh.radii[ids][:, None]
    j = _sphere_index(mesh)[ids]
    omega = mesh.sphere.vertices[j]
    z = ((1.0 - r) * psi.values[j] + (r - rho) * omega) / (1.0 - rho)
    return ids, z


def comparison_min_modulus(psi: BoundaryField, mesh: ShellMesh, rho: float = 0.5) -> float:
    r"""Smallest ``|z|`` over the annulus of the comparison map."""
    _check_shell_radius(mesh, rho)
    _, z = _annulus_profile(mesh, psi, rho)
    return float(np.min(np.linalg.norm(z, axis=1)))


def comparison_map(u: SphereField, psi: BoundaryField, rho: float = 0.5) -> SphereField:
    r"""Shrink ``u`` into ``B_rho`` and join its trace to the identity.

    Inside ``B_rho`` the result is ``u(x / rho)``; on ``rho <= |x| <= 1`` it is
    ``z / |z|`` with ``z`` the radial linear interpolation between
    ``psi(x / |x|)`` at ``|x| = rho`` and ``x / |x|`` at ``|x| = 1``. When
    ``u`` has trace ``psi`` the two pieces agree on ``|x| = rho`` and the
    result is an admissible competitor for identity boundary data.

    Args:
        u (SphereField): Field to shrink, usually the minimizer for ``psi``.
        psi (BoundaryField): Trace of ``u``, placed on the sphere of radius
            ``rho``.
        rho (float, optional): Shell radius ``k / L`` of the inner ball.
            (default: :obj:`0.5`)

    Returns:
        SphereField: The comparison field; its boundary values are exactly
            the sphere vertices.
    """
    mesh = u.mesh
    if not same_sphere(psi.sphere, mesh.sphere):
        raise MeshMismatchError("boundary field is not sampled on the mesh's sphere")
    _check_shell_radius(mesh, rho)

    values = np.empty((mesh.n_vertices, 3))
    inner = np.flatnonzero(mesh.radii < rho - 1e-12)
    values[inner] = normalize_rows(mesh.interpolate(u.values, mesh.vertices[inner] / rho))

    ids, z = _annulus_profile(mesh, psi, rho)
    modulus = np.linalg.norm(z, axis=1)
    if np.min(modulus) < MIN_COMPARISON_MODULUS:
        worst = int(ids[np.argmin(modulus)])
        raise ConstructionError(
            f"|z| = {np.min(modulus):.3g} at vertex {worst}; the boundary data is "
            f"too far from the identity"
        )
    values[ids] = z / modulus[:, None]
    values[mesh.boundary_vertex_ids] = mesh.sphere.vertices
    return SphereField(mesh, values)


@dataclass(frozen=True)
class ComparisonBounds:
    r"""Right-hand sides of the energy comparison for the shrunk competitor.

    Args:
        shrunk (float): ``rho E[u] + annulus bound``; bounds ``E[w]``.
        relaxed (float): ``E[u] + 8 pi (1 - rho)((1 + k) / (1 - m)^2 - 1) + ...``.
        c6 (float): Constant of the ``delta^2`` term.
    """

    shrunk: float
    relaxed: float
    c6: float


def comparison_bounds(
    energy_u: float,
    delta: float,
    p: float,
    rho: float,
    kappa: float,
    sup_deviation: float,
) -> ComparisonBounds:
    r"""Evaluate the upper bounds for the energy of :func:`comparison_map`.

    ``sup_deviation`` is ``m = sup |psi - id|`` and must be below 1.
    """
    if not 0.0 < rho < 1.0:
        raise ParameterError(f"rho must lie in ]0, 1[, got {rho}")
    if kappa <= 0.0 or p < 2.0 or delta < 0.0:
        raise ParameterError("comparison bounds need kappa > 0, p >= 2 and delta >= 0")
    if not 0.0 <= sup_deviation < 1.0:
        raise ParameterError(f"sup deviation must lie in [0, 1[, got {sup_deviation}")
    holder = FOUR_PI if math.isinf(p) else FOUR_PI ** ((p - 2.0) / p)
    c6 = ((1.0 - rho**3) / (3.0 * (1.0 - rho) ** 2) + (1.0 - rho) / 3.0) * holder
    shrink = 1.0 / (1.0 - sup_deviation) ** 2
    tail = c6 * (1.0 + 1.0 / kappa) * shrink * delta**2
    shrunk = rho * energy_u + (1.0 + kappa) * shrink * EIGHT_PI * (1.0 - rho) + tail
    relaxed = energy_u + EIGHT_PI * (1.0 - rho) * ((1.0 + kappa) * shrink - 1.0) + tail
    return ComparisonBounds(shrunk=shrunk, relaxed=relaxed, c6=c6)


def harmonic_extension(g: BoundaryField, mesh: ShellMesh) -> np.ndarray:
    r"""Componentwise discrete harmonic extension of ``g`` into the ball."""
    if not same_sphere(g.sphere, mesh.sphere):
        raise MeshMismatchError("boundary field is not sampled on the mesh's sphere")
    k = mesh.stiffness
    interior, boundary = mesh.interior_ids, mesh.boundary_vertex_ids
    rows = k[interior]
    rhs = -(rows[:, boundary] @ g.values)
    values = np.empty((mesh.n_vertices, 3))
    values[boundary] = g.values
    values[interior] = splu(rows[:, interior].tocsc()).solve(rhs)
    return values


@dataclass(frozen=True)
class HKLExtension:
    r"""Result of :func:`hkl_extension`.

    Args:
        field (SphereField): Extension ``w`` on the unit mesh.
        center (np.ndarray): Projection centre ``a``.
        c_star (float): ``E[w] / (int |grad_T g|^2)^{1/2}`` on the ball of
            radius ``sigma``.
        energy (float): ``E[w]`` on the ball of radius ``sigma``.
        boundary_energy (float): ``int |grad_T g|^2``.
        harmonic_energy (float): Energy of the harmonic extension.
        identity_gap (float): Relative defect of the energy identity of
            harmonic functions on the discrete extension.
        sigma (float): Ball radius.
        skipped (int): Candidate centres rejected for passing too close to
            the extension.
    """

    field: SphereField
    center: np.ndarray
    c_star: float
    energy: float
    boundary_energy: float
    harmonic_energy: float
    identity_gap: float
    sigma: float
    skipped: int

    def to_dict(self) -> dict:
        return {
            "center": [float(x) for x in self.center],
            "c_star": self.c_star,
            "energy": self.energy,
            "boundary_energy": self.boundary_energy,
            "harmonic_energy": self.harmonic_energy,
            "identity_gap": self.identity_gap,
            "sigma": self.sigma,
            "skipped": self.skipped,
        }


def _energy_of(mesh: ShellMesh, values: np.ndarray) -> float:
    return float(np.einsum("ic,ic->", values, mesh.stiffness @ values))


def _radial_boundary_term(mesh: ShellMesh, values: np.ndarray) -> float:
    r"""``int_{S^2} |d_r h|^2`` from the outermost layer of tetrahedra."""
    outer = np.isin(mesh.tetrahedra, mesh.boundary_vertex_ids).any(axis=1)
    centroids = mesh.centroids[outer]
    normal = centroids / np.linalg.norm(centroids, axis=1)[:, None]
    jac = np.einsum(
        "tac,tax->tcx", values[mesh.tetrahedra[outer]], mesh.shape_gradients[outer]
    )
    radial = np.einsum("tcx,tx->tc", jac, normal)
    vol = mesh.volumes[outer]
    mean = float(np.sum(vol * np.einsum("tc,tc->t", radial, radial)) / np.sum(vol))
    return mean * mesh.sphere.total_area


def hkl_extension(
    g: BoundaryField,
    mesh: ShellMesh,
    samples: int = 16,
    sigma: float = 1.0,
    seed: int = 0,
) -> HKLExtension:
    r"""Sphere-valued extension of ``g`` by projecting its harmonic extension.

    The harmonic extension ``h`` is projected radially from a centre ``a``
    in the ball of radius 1/2, ``x -> (h - a) / |h - a|``, and pushed back
    onto the sphere along the same ray from ``a``, which restores the trace.
    Among ``samples`` seeded candidates the centre of least energy wins.

    Args:
        g (BoundaryField): Unit boundary data on ``mesh.sphere``.
        mesh (ShellMesh): Ball mesh, scaled to radius ``sigma``.
        samples (int, optional): Number of candidate centres, at least 8.
            (default: :obj:`16`)
        sigma (float, optional): Radius of the ball. (default: :obj:`1.0`)
        seed (int, optional): Seed of the candidate centres.
            (default: :obj:`0`)

    Returns:
        HKLExtension: The extension and its constant.
    """
    if samples < 8:
        raise ParameterError(f"hkl_extension needs at least 8 samples, got {samples}")
    if sigma <= 0.0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    h = harmonic_extension(g, mesh)
    rng = np.random.default_rng(seed)
    directions = normalize_rows(rng.normal(size=(samples, 3)), fallback=E3)
    candidates = 0.5 * rng.random(samples)[:, None] ** (1.0 / 3.0) * directions

    best: Optional[Tuple[float, np.ndarray, np.ndarray]] = None
    skipped = 0
    for a in candidates:
        offset = h - a
        dist = np.linalg.norm(offset, axis=1)
        if np.min(dist) < MIN_PROJECTION_DISTANCE:
            skipped += 1
            continue
        projected = offset / dist[:, None]
        energy = _energy_of(mesh, projected)
        if best is None or energy < best[0]:
            best = (energy, a, projected)
    if best is None:
        raise ConstructionError("every candidate centre lies on the harmonic extension")
    if skipped:
        logger.debug(f"Skipped {skipped} projection centre(s) close to the extension")

    _, a, direction = best
    along = direction @ a
    t = -along + np.sqrt(along**2 - a @ a + 1.0)
    w = SphereField(mesh, normalize_rows(a + t[:, None] * direction))
    energy = sigma * dirichlet_energy(w)
    boundary = boundary_dirichlet_energy(g)
    if boundary > ZERO_ENERGY:
        c_star = energy / math.sqrt(boundary)
    else:
        c_star = 0.0 if energy < ZERO_ENERGY else math.inf

    harmonic = _energy_of(mesh, h)
    radial = _radial_boundary_term(mesh, h)
    gap = (boundary - harmonic - radial) / boundary if boundary > ZERO_ENERGY else 0.0
    logger.info(f"HKL extension: c*={c_star:.4g}, centre {np.round(a, 4).tolist()}")
    return HKLExtension(
        field=w,
        center=np.array(a),
        c_star=c_star,
        energy=energy,
        boundary_energy=boundary,
        harmonic_energy=sigma * harmonic,
        identity_gap=gap,
        sigma=sigma,
        skipped=skipped,
    )


def _annulus_ids(mesh: ShellMesh, center: np.ndarray, annulus: Tuple[float, float]) -> np.ndarray:
    r1, r2 = annulus
    if not 0.0 < r1 < r2:
        raise ParameterError(f"annulus radii must satisfy 0 < r1 < r2, got {annulus}")
    dist = np.linalg.norm(mesh.vertices - center, axis=1)
    ids = np.flatnonzero((dist >= r1) & (dist <= r2))
    if ids.size < 12:
        raise ResolutionError(f"annulus {annulus} holds only {ids.size} vertices")
    return ids


def fit_rotation(
    u: SphereField, center: np.ndarray, annulus: Tuple[float, float] = DEFAULT_ANNULUS
) -> np.ndarray:
    r"""Orthogonal ``Theta`` with ``u(x) ~ Theta (x - a) / |x - a|`` on an annulus.

    Args:
        u (SphereField): The field.
        center (np.ndarray): Singularity ``a``.
        annulus (Tuple[float, float], optional): Radii around ``a``.
            (default: :obj:`(1/3, 2/3)`)

    Returns:
        np.ndarray: ``(3, 3)`` orthogonal matrix, possibly improper.
    """
    center = np.asarray(center, dtype=float).reshape(3)
    ids = _annulus_ids(u.mesh, center, annulus)
    directions = normalize_rows(u.mesh.vertices[ids] - center)
    targets = u.values[ids]
    singular = np.linalg.svd(directions.T @ targets, compute_uv=False)
    if singular[0] <= 0.0 or singular[1] < 1e-10 * singular[0]:
        raise AlignmentError("field is degenerate on the annulus; no rotation to fit")
    rotation, _ = orthogonal_procrustes(directions, targets)
    return rotation.T


@dataclass(frozen=True)
class TangentFit:
    center: np.ndarray
    rotation: np.ndarray
    rms: float


def fit_tangent_map(
    u: SphereField, center: np.ndarray, annulus: Tuple[float, float] = DEFAULT_ANNULUS
) -> TangentFit:
    r"""Refine the singularity and the rotation together by least squares.

    The annulus vertices are chosen around the starting ``center``; the fit
    then minimizes ``sum |u(x) - Theta (x - a) / |x - a||^2`` over ``a`` and a
    rotation applied on top of the Procrustes estimate.
    """
    center = np.asarray(center, dtype=float).reshape(3)
    ids = _annulus_ids(u.mesh, center, annulus)
    start = fit_rotation(u, center, annulus)
    points = u.mesh.vertices[ids]
    targets = u.values[ids]

    def residuals(params: np.ndarray) -> np.ndarray:
        turn = Rotation.from_rotvec(params[3:]).as_matrix() @ start
        offset = points - params[:3]
        pred = offset / np.linalg.norm(offset, axis=1)[:, None] @ turn.T
        return (targets - pred).ravel()

    solution = least_squares(residuals, np.concatenate([center, np.zeros(3)]), x_scale=0.1)
    a = solution.x[:3]
    rotation = Rotation.from_rotvec(solution.x[3:]).as_matrix() @ start
    rms = float(np.sqrt(np.mean(solution.fun**2) * 3.0))
    if np.linalg.norm(a - center) > annulus[0]:
        logger.warning(
            f"Tangent-map refinement moved the centre by {np.linalg.norm(a - center):.3g}; "
            f"keeping the starting point"
        )
        return TangentFit(center=center, rotation=start, rms=rms)
    return TangentFit(center=a, rotation=rotation, rms=rms)


def tangent_proxy(u: SphereField, annulus: Tuple[float, float] = DEFAULT_ANNULUS) -> float:
    r"""``sup |u - x/|x||`` plus the largest Jacobian difference on an annulus about 0."""
    mesh = u.mesh
    r1, r2 = annulus
    vmask = (mesh.radii >= r1) & (mesh.radii <= r2)
    hedge = np.array(mesh.vertices)
    hedge[0] = E3
    hedge[1:] /= mesh.radii[1:, None]
    sup = float(np.max(np.linalg.norm(u.values[vmask] - hedge[vmask], axis=1)))
    crad = np.linalg.norm(mesh.centroids, axis=1)
    tmask = (crad >= r1) & (crad <= r2)
    diff = field_jacobians(mesh, u.values - hedge)[tmask]
    return sup + float(np.max(np.sqrt(np.einsum("tcx,tcx->t", diff, diff))))


@dataclass(frozen=True)
class RegistrationEntry:
    r"""Move ``source`` (a singularity of ``u``) onto ``target`` (one of ``v``).

    Args:
        source (np.ndarray): Point ``a_ji``.
        target (np.ndarray): Point ``a_j``.
        theta_target (np.ndarray): Rotation ``Theta_j`` of the tangent map at
            ``target``.
        theta_source (np.ndarray): Rotation ``Theta_ji`` at ``source``.
        tau (float): Radius of the ball around ``target`` where the map acts.
    """

    source: np.ndarray
    target: np.ndarray
    theta_target: np.ndarray
    theta_source: np.ndarray
    tau: float


@dataclass(frozen=True)
class RegistrationMap:
    r"""Bi-Lipschitz map ``eta`` that is the identity outside the balls ``B(a_j, tau)``.

    Inside a ball ``eta = lam * xi + (1 - lam) * id`` with
    ``xi(x) = Theta_j^{-1} Theta_ji (x - a_ji) + a_j`` and ``lam`` the smooth
    step of ``(|x - a_j| - tau / 2) / (tau / 2)``, equal to 1 on ``B(a_j, tau / 2)``.
    """

    entries: Tuple[RegistrationEntry, ...] = ()

    def __post_init__(self):
        for k, e in enumerate(self.entries):
            if e.tau <= 0.0:
                raise ParameterError(f"entry {k}: tau must be positive")
            if np.linalg.norm(e.source - e.target) >= e.tau / 2.0:
                raise ParameterError(f"entry {k}: |a_ji - a_j| must be below tau / 2")
            if np.linalg.norm(e.target) + e.tau > 1.0 + 1e-12:
                raise ParameterError(f"entry {k}: ball B(a_j, tau) leaves the domain")
            if not (is_orthogonal(e.theta_target, 1e-8) and is_orthogonal(e.theta_source, 1e-8)):
                raise ParameterError(f"entry {k}: rotations must be orthogonal")
            for m, f in enumerate(self.entries[:k]):
                if np.linalg.norm(e.target - f.target) < e.tau + f.tau:
                    raise ParameterError(f"entries {m} and {k}: balls overlap")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        points = np.atleast_2d(np.asarray(points, dtype=float))
        out = points.copy()
        for e in self.entries:
            dist = np.linalg.norm(points - e.target, axis=1)
            inside = dist < e.tau
            if not np.any(inside):
                continue
            half = e.tau / 2.0
            lam = smooth_step((dist[inside] - half) / half)[:, None]
            turn = e.theta_target.T @ e.theta_source
            xi = (points[inside] - e.source) @ turn.T + e.target
            out[inside] = lam * xi + (1.0 - lam) * points[inside]
        return out

    def inverse(self, points: np.ndarray, iterations: int = 200, tol: float = 1e-13) -> np.ndarray:
        r"""Invert by the fixed point iteration ``y <- x - (eta(y) - y)``."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        y = points.copy()
        for _ in range(iterations):
            nxt = points - (self(y) - y)
            if np.max(np.abs(nxt - y)) < tol:
                return nxt
            y = nxt
        logger.warning("Inverse registration map did not converge")
        return y


def default_registration_radius(
    sources: np.ndarray, targets: np.ndarray, mesh_size: float
) -> float:
    r"""``max_j |a_ji - a_j|^{1/2}`` floored at ``2h`` and clipped to fit the domain."""
    sources = np.atleast_2d(sources)
    targets = np.atleast_2d(targets)
    tau = max(math.sqrt(float(np.max(np.linalg.norm(sources - targets, axis=1)))), 2.0 * mesh_size)
    limit = 1.0 - float(np.max(np.linalg.norm(targets, axis=1)))
    if targets.shape[0] > 1:
        gaps = np.linalg.norm(targets[:, None] - targets[None], axis=2)
        gaps[np.diag_indices_from(gaps)] = np.inf
        limit = min(limit, float(np.min(gaps)) / 2.0)
    return min(tau, limit)


def build_registration(
    sources: Sequence[np.ndarray],
    targets: Sequence[np.ndarray],
    theta_sources: Sequence[np.ndarray],
    theta_targets: Sequence[np.ndarray],
    mesh_size: float,
    tau: Optional[float] = None,
) -> RegistrationMap:
    sources = np.atleast_2d(np.asarray(sources, dtype=float))
    targets = np.atleast_2d(np.asarray(targets, dtype=float))
    if tau is None:
        tau = default_registration_radius(sources, targets, mesh_size)
    entries = tuple(
        RegistrationEntry(
            source=s, target=t, theta_target=np.asarray(tt), theta_source=np.asarray(ts), tau=tau
        )
        for s, t, ts, tt in zip(sources, targets, theta_sources, theta_targets)
    )
    return RegistrationMap(entries)


@dataclass(frozen=True)
class RegistrationResult:
    field: SphereField
    lip_forward: float
    lip_inverse: float
    clamped: int


def _difference_quotients(
    fn, centers: Sequence[Tuple[np.ndarray, float]], samples: int, seed: int
) -> float:
    rng = np.random.default_rng(seed)
    best = 0.0
    for center, tau in centers:
        dirs = normalize_rows(rng.normal(size=(samples, 3)), fallback=E3)
        x = center + tau * rng.random(samples)[:, None] ** (1.0 / 3.0) * dirs
        step = 1e-3 * tau * normalize_rows(rng.normal(size=(samples, 3)), fallback=E3)
        pairs = [(x, x + step), (x, np.roll(x, 1, axis=0))]
        gx = fn(x) - x
        for a, b in pairs:
            num = np.linalg.norm(gx - (fn(b) - b), axis=1)
            den = np.linalg.norm(a - b, axis=1)
            ok = den > 0.0
            if np.any(ok):
                best = max(best, float(np.max(num[ok] / den[ok])))
    return best


def apply_registration(
    v: SphereField, eta: RegistrationMap, samples: int = 2000, seed: int = 0
) -> RegistrationResult:
    r"""Sample ``v o eta`` at the mesh vertices.

    Vertices that ``eta`` does not move keep their values exactly; the rest are
    interpolated and normalized. Images outside the ball are pulled back onto
    the unit sphere.

    Returns:
        RegistrationResult: The field, sampled Lipschitz constants of
        ``eta - id`` and ``eta^{-1} - id``, and the number of clamped points.
    """
    mesh = v.mesh
    x = mesh.vertices
    y = eta(x)
    moved = np.linalg.norm(y - x, axis=1) > 1e-14
    radius = np.linalg.norm(y, axis=1)
    outside = radius > 1.0
    clamped = int(np.count_nonzero(outside))
    if clamped:
        logger.warning(f"Registration map sent {clamped} point(s) outside the ball; clamped")
        y[outside] /= radius[outside, None]
    values = np.array(v.values)
    if np.any(moved):
        values[moved] = normalize_rows(mesh.interpolate(v.values, y[moved]))

    balls = [(e.target, e.tau) for e in eta.entries]
    lip_forward = _difference_quotients(eta, balls, samples, seed)
    lip_inverse = _difference_quotients(eta.inverse, balls, samples, seed + 1)
    return RegistrationResult(
        field=SphereField(mesh, values),
        lip_forward=lip_forward,
        lip_inverse=lip_inverse,
        clamped=clamped,
    )


@lru_cache(maxsize=4)
def _sphere(level: int) -> SphereMesh:
    return build_sphere_mesh(level)


@dataclass(frozen=True)
class BubbleScaling:
    p: float
    scales: Tuple[float, ...]
    norms: Tuple[float, ...]
    excluded: Tuple[float, ...]
    fit: SlopeFit

    def rows(self):
        return [{"p": self.p, "lambda": s, "norm": n} for s, n in zip(self.scales, self.norms)]


def bubble_scaling_curve(
    p: float,
    scales: Sequence[float],
    level: int = 5,
    rings: int = 48,
    center: Sequence[float] = (0.0, 0.0, 1.0),
    separation: float = 0.1,
) -> BubbleScaling:
    r"""Tangential ``L^p`` norm of the gradient of ``psi_lam - id`` across bubble scales.

    Each scale is evaluated on two cap probes, one per bubble, whose
    triangulation is the same up to scaling, so the fitted log-log slope
    shows the exponent ``(2 - p) / p``.

    Args:
        p (float): Exponent in ``[1, 4]``.
        scales (Sequence[float]): Cap radii ``lam``.
        level (int, optional): Sphere level that sets the smallest resolved
            scale, four edge lengths. (default: :obj:`5`)
        rings (int, optional): Rings of each cap probe. (default: :obj:`48`)
        center (Sequence[float], optional): Centre of the +1 bubble.
            (default: :obj:`(0, 0, 1)`)
        separation (float, optional): Gap between the caps.
            (default: :obj:`0.1`)

    Returns:
        BubbleScaling: Norms per kept scale and the fitted slope.
    """
    if not 1.0 <= p <= 4.0:
        raise ParameterError(f"bubble scaling needs p in [1, 4], got {p}")
    floor = 4.0 * _sphere(level).max_edge_length
    kept, norms, excluded = [], [], []
    for lam in sorted(float(s) for s in scales):
        if lam < floor:
            logger.warning(f"Scale {lam:.4g} is below {floor:.4g} at level {level}; excluded")
            excluded.append(lam)
            continue
        try:
            spec = BubbleDipoleSpec(center=tuple(center), scale=lam, separation=separation)
        except ValidationError as e:
            raise ParameterError(f"invalid bubble scale {lam}: {e}") from e
        total = 0.0
        for cap in spec.cap_centers():
            verts, tris = build_cap_probe(cap, lam, rings)
            _, grad = surface_w1p_parts(verts, tris, spec.apply(verts) - verts, p)
            total += grad**p
        kept.append(lam)
        norms.append(total ** (1.0 / p))
    fit = fit_loglog_slope(kept, norms)
    logger.info(f"Bubble scaling p={p}: slope {fit.slope:.4f} over {len(kept)} scale(s)")
    return BubbleScaling(
        p=p, scales=tuple(kept), norms=tuple(norms), excluded=tuple(excluded), fit=fit
    )


@dataclass(frozen=True)
class InterpolationCheck:
    lhs: float
    rhs: float
    holds: bool


def interpolation_check(sphere: SphereMesh, difference: np.ndarray, q: float) -> InterpolationCheck:
    r"""Check ``||f||_q <= ||f||_2^{2/q} ||f||_inf^{1 - 2/q}`` on the lumped measure."""
    if not 2.0 < q < math.inf:
        raise ParameterError(f"interpolation exponent must lie in ]2, inf[, got {q}")
    size = np.linalg.norm(np.asarray(difference, dtype=float), axis=1)
    weights = sphere.vertex_weights
    lhs = float(np.sum(weights * size**q) ** (1.0 / q))
    l2 = float(np.sqrt(np.sum(weights * size**2)))
    rhs = l2 ** (2.0 / q) * float(np.max(size)) ** (1.0 - 2.0 / q)
    return InterpolationCheck(lhs=lhs, rhs=rhs, holds=bool(lhs <= rhs * (1.0 + 1e-10)))


@dataclass(frozen=True)
class BCLGap:
    energy_gap: float
    a_norm: float


def bcl_gap(u: SphereField, singular_set: Optional[SingularSet] = None) -> BCLGap:
    r"""Energy excess over ``8 pi`` and ``|a|`` for a field with one singularity."""
    deg = degree(u.boundary_trace()).degree
    if deg != 1:
        raise NotApplicableError(f"boundary degree is {deg}, expected 1")
    if singular_set is None:
        singular_set = detect_singularities(u)
    if len(singular_set) != 1:
        raise NotApplicableError(f"expected one singularity, found {len(singular_set)}")
    a = singular_set.points[0].position
    return BCLGap(energy_gap=dirichlet_energy(u) - EIGHT_PI, a_norm=float(np.linalg.norm(a)))


def critical_exponents(q: float) -> Dict[str, float]:
    r"""Predicted sweep exponents for ``p = 2`` and interpolation exponent ``q``."""
    if q <= 2.0:
        raise ParameterError(f"q must exceed 2, got {q}")
    return {"a_norm": 1.0 / q, "holder": 1.0 / (2.0 * q), "theta_dev": 1.0 / (2.0 * q)}


@dataclass(frozen=True)
class StabilityRecord:
    r"""One sweep point.

    Args:
        parameter (float): Ladder value that produced the boundary data.
        delta (float): W^{1,p} distance of the data to the identity.
        a (np.ndarray): Singularity position.
        theta (np.ndarray): Fitted orthogonal matrix of the tangent map.
        energy (float): Energy of the minimizer.
        holder (float): Hoelder distance to ``Theta (x - a) / |x - a|``.
        tangent_proxy (float): C0 plus gradient distance to the hedgehog on
            the middle annulus.
    """

    parameter: float
    delta: float
    a: np.ndarray
    theta: np.ndarray
    energy: float
    holder: float
    tangent_proxy: float
    a_shift: float = 0.0
    holder_registered: float = float("nan")
    holder_outside: float = float("nan")
    energy_bound: Optional[bool] = None
    comparison_bound: Optional[bool] = None
    multiple_singularities: bool = False
    singularity_count: int = 1
    control: bool = False

    @property
    def a_norm(self) -> float:
        return float(np.linalg.norm(self.a))

    @property
    def energy_gap(self) -> float:
        return self.energy - EIGHT_PI

    @property
    def theta_dev(self) -> float:
        return float(np.linalg.norm(self.theta - np.eye(3)))

    def to_dict(self) -> dict:
        return {
            "parameter": self.parameter,
            "delta": self.delta,
            "a": [float(x) for x in self.a],
            "a_norm": self.a_norm,
            "a_shift": self.a_shift,
            "theta": [[float(x) for x in row] for row in self.theta],
            "theta_dev": self.theta_dev,
            "energy": self.energy,
            "energy_gap": self.energy_gap,
            "holder": self.holder,
            "holder_registered": self.holder_registered,
            "holder_outside": self.holder_outside,
            "tangent_proxy": self.tangent_proxy,
            "energy_bound": self.energy_bound,
            "comparison_bound": self.comparison_bound,
            "multiple_singularities": self.multiple_singularities,
            "singularity_count": self.singularity_count,
            "control": self.control,
        }
