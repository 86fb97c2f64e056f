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
r"""Dirichlet energy and the rescaled energies of the monotonicity formula.

All volume integrals use one quadrature point per tetrahedron, the centroid,
and a tetrahedron belongs to a ball when its centroid does.
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from camel.logger import get_logger

from .ball_mesh import ShellMesh
from .common import ParameterError, ResolutionError
from .sphere_fields import BoundaryField, SphereField

logger = get_logger(__name__)

_CONTAINMENT_SLACK = 1e-12


def field_jacobians(mesh: ShellMesh, values: np.ndarray) -> np.ndarray:
    r"""``(T, 3, 3)`` P1 Jacobians; ``[t, c]`` is the gradient of component ``c``."""
    return np.einsum("tac,tax->tcx", values[mesh.tetrahedra], mesh.shape_gradients)


def tet_energy_density(u: SphereField) -> np.ndarray:
    r"""``|grad u|^2`` on every tetrahedron."""
    jac = field_jacobians(u.mesh, u.values)
    return np.einsum("tcx,tcx->t", jac, jac)


def dirichlet_energy(u: SphereField) -> float:
    r"""Discrete Dirichlet energy ``sum_T vol_T |grad u_T|^2``."""
    return float(np.sum(u.mesh.volumes * tet_energy_density(u)))


def boundary_dirichlet_energy(psi: BoundaryField) -> float:
    r"""``int_{S^2} |grad_T psi|^2 dA`` with per-triangle tangential gradients."""
    sphere = psi.sphere
    jac = np.einsum("fac,fax->fcx", psi.values[sphere.triangles], sphere.shape_gradients)
    return float(np.sum(sphere.areas * np.einsum("fcx,fcx->f", jac, jac)))


def _check_ball(mesh: ShellMesh, center: np.ndarray, rho: float) -> np.ndarray:
    center = np.asarray(center, dtype=float).reshape(3)
    if rho < 2.0 * mesh.mesh_size_h * (1.0 - 1e-12):
        raise ResolutionError(
            f"radius {rho:.4g} is below twice the mesh size {mesh.mesh_size_h:.4g}"
        )
    if np.linalg.norm(center) + rho > 1.0 + _CONTAINMENT_SLACK:
        raise ParameterError(
            f"ball of radius {rho:.4g} around {center.tolist()} leaves the unit ball"
        )
    return center


def _ball_sum(mesh: ShellMesh, weighted: np.ndarray, center: np.ndarray, rho: float) -> float:
    inside = np.linalg.norm(mesh.centroids - center, axis=1) <= rho
    return float(np.sum(weighted[inside]))


def rescaled_energy(u: SphereField, center: np.ndarray, rho: float) -> float:
    r"""``(1 / rho) * E(B(center, rho))``.

    Args:
        u (SphereField): The field.
        center (np.ndarray): Ball centre ``y``.
        rho (float): Radius, at least twice the mesh size.

    Returns:
        float: The rescaled energy.
    """
    mesh = u.mesh
    center = _check_ball(mesh, center, rho)
    weighted = mesh.volumes * tet_energy_density(u)
    return _ball_sum(mesh, weighted, center, rho) / rho


@dataclass(frozen=True)
class EnergyProfile:
    r"""Rescaled energies of nested balls around one centre.

    Args:
        center (np.ndarray): Common centre ``y``.
        radii (np.ndarray): Strictly increasing radii.
        rescaled (np.ndarray): ``(1 / rho) E(B(y, rho))`` per radius.
        max_violation (float): Largest decrease between consecutive radii,
            zero when the profile is nondecreasing.
    """

    center: np.ndarray
    radii: np.ndarray
    rescaled: np.ndarray
    max_violation: float


def monotonicity_profile(
    u: SphereField, center: np.ndarray, radii: Sequence[float]
) -> EnergyProfile:
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or radii.size == 0:
        raise ParameterError("monotonicity profile needs at least one radius")
    if np.any(np.diff(radii) <= 0.0):
        raise ParameterError(f"radii must be strictly increasing, got {radii.tolist()}")
    mesh = u.mesh
    for rho in radii:
        center = _check_ball(mesh, center, float(rho))
    weighted = mesh.volumes * tet_energy_density(u)
    rescaled = np.array([_ball_sum(mesh, weighted, center, r) / r for r in radii])
    drops = rescaled[:-1] - rescaled[1:]
    violation = float(max(0.0, np.max(drops))) if drops.size else 0.0
    if violation > 0.0:
        logger.debug(f"Monotonicity profile around {center.tolist()} drops by {violation:.4g}")
    return EnergyProfile(center=center, radii=radii, rescaled=rescaled, max_violation=violation)


def radial_term(u: SphereField, center: np.ndarray, rho_in: float, rho_out: float) -> float:
    r"""``int_{annulus} (2 / r) |d_r u|^2`` for ``rho_in < |x - y| <= rho_out``.

    ``r`` and the radial direction are taken at the tetrahedron centroid.
    """
    if not rho_in < rho_out:
        raise ParameterError(f"need rho_in < rho_out, got {rho_in} and {rho_out}")
    mesh = u.mesh
    _check_ball(mesh, center, rho_in)
    center = _check_ball(mesh, center, rho_out)
    offset = mesh.centroids - center
    dist = np.linalg.norm(offset, axis=1)
    shell = (dist > rho_in) & (dist <= rho_out)
    jac = field_jacobians(mesh, u.values)[shell]
    normal = offset[shell] / dist[shell, None]
    radial = np.einsum("tcx,tx->tc", jac, normal)
    integrand = 2.0 / dist[shell] * np.einsum("tc,tc->t", radial, radial)
    return float(np.sum(mesh.volumes[shell] * integrand))


def energy_split(
    u: SphereField, rho: float, center: Optional[np.ndarray] = None
) -> Tuple[float, float]:
    r"""Split the energy into the part inside ``B(center, rho)`` and the rest.

    Every tetrahedron lands in exactly one part, so the parts add up to
    :func:`dirichlet_energy`.
    """
    mesh = u.mesh
    center = np.zeros(3) if center is None else np.asarray(center, dtype=float)
    weighted = mesh.volumes * tet_energy_density(u)
    inside = np.linalg.norm(mesh.centroids - center, axis=1) <= rho
    return float(np.sum(weighted[inside])), float(np.sum(weighted[~inside]))
