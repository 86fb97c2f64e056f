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
import time
from dataclasses import dataclass, field, replace
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field
from camel.logger import get_logger

from .ball_mesh import ShellMesh
from .common import E3, EIGHT_PI, FOUR_PI, MeshMismatchError, ParameterError, check_unit_rows, normalize_rows
from .sphere_fields import UNIT_TOLERANCE, BoundaryField, SphereField, same_shell_mesh, same_sphere

logger = get_logger(__name__)

_ZERO_PULL = 1e-14
_MAX_HALVINGS = 30
_ENERGY_FLOOR = 1e-14


class SolveOptions(BaseModel):
    r"""Options of :func:`minimize`.

    Args:
        max_iterations (int): Maximum number of sweeps per restart.
        tolerance (float): Relative energy decrease per sweep below which a
            restart counts as converged.
        init (str): ``"homogeneous_extension"``, ``"random_seeded"`` or
            ``"given"``; the last one needs an initial field.
        seed (int): Seed of the restart perturbations.
        restarts (int): Number of restarts; the first one is unperturbed.
        perturbation (float): Amplitude of the random perturbation of
            restarts after the first.
    """

    max_iterations: int = Field(5000, ge=1)
    tolerance: float = Field(1e-8, gt=0.0)
    init: Literal["homogeneous_extension", "random_seeded", "given"] = "homogeneous_extension"
    seed: int = Field(0, ge=0)
    restarts: int = Field(3, ge=1)
    perturbation: float = Field(0.3, ge=0.0)


@dataclass(frozen=True)
class SolveReport:
    iterations: int
    energy_history: Tuple[float, ...]
    final_energy: float
    converged: bool
    wall_time: float
    initial_energy: float
    restart: int = 0
    restart_energies: Tuple[float, ...] = ()
    stalled_updates: int = 0

    def to_dict(self, include_timing: bool = False) -> dict:
        data = {
            "iterations": self.iterations,
            "final_energy": self.final_energy,
            "initial_energy": self.initial_energy,
            "converged": self.converged,
            "restart": self.restart,
            "restart_energies": list(self.restart_energies),
            "stalled_updates": self.stalled_updates,
            "energy_history": list(self.energy_history),
        }
        if include_timing:
            data["wall_time"] = self.wall_time
        return data


def hedgehog(mesh: ShellMesh) -> SphereField:
    r"""The field ``x / |x|``, with ``e3`` at the origin vertex."""
    values = np.empty((mesh.n_vertices, 3))
    values[0] = E3
    values[1:] = normalize_rows(mesh.vertices[1:])
    return SphereField(mesh, values)


def homogeneous_extension(psi: BoundaryField, mesh: ShellMesh) -> SphereField:
    r"""Extend ``psi`` constantly along rays; the origin takes ``psi`` at sphere vertex 0."""
    if not same_sphere(psi.sphere, mesh.sphere):
        raise MeshMismatchError("boundary field is not sampled on the mesh's sphere")
    values = np.concatenate([psi.values[:1], np.tile(psi.values, (mesh.layers, 1))])
    return SphereField(mesh, values)


def _energy(stiffness, values: np.ndarray) -> float:
    return float(np.einsum("ic,ic->", values, stiffness @ values))


@dataclass
class _Relaxation:
    r"""Working state of one restart."""

    mesh: ShellMesh
    values: np.ndarray
    history: List[float] = field(default_factory=list)
    stalled: int = 0

    def __post_init__(self):
        k = self.mesh.stiffness
        self._diag = k.diagonal()
        self._blocks = [(ids, k[ids]) for ids in self.mesh.interior_coloring]

    def sweep(self) -> float:
        for ids, rows in self._blocks:
            old = self.values[ids]
            pull = rows @ self.values - self._diag[ids, None] * old
            size = np.linalg.norm(pull, axis=1)
            ok = size > _ZERO_PULL * np.maximum(self._diag[ids], 1.0)
            new = old.copy()
            new[ok] = -pull[ok] / size[ok, None]
            change = 2.0 * np.einsum("ic,ic->i", new - old, pull)
            keep = ok & ~(change < 0.0)
            new[keep] = old[keep]
            if np.any(~ok):
                new[~ok] = self._gradient_step(old[~ok], pull[~ok])
            self.values[ids] = new
        energy = _energy(self.mesh.stiffness, self.values)
        self.history.append(energy)
        return energy

    def _gradient_step(self, old: np.ndarray, pull: np.ndarray) -> np.ndarray:
        r"""Projected gradient step with step halving for vertices without a pull.

        Vertices where no step decreases the energy keep their value.
        """
        grad = 2.0 * (pull - np.einsum("ic,ic->i", pull, old)[:, None] * old)
        out = old.copy()
        todo = np.linalg.norm(grad, axis=1) > 0.0
        step = 1.0
        for _ in range(_MAX_HALVINGS):
            if not np.any(todo):
                break
            trial = normalize_rows(old[todo] - step * grad[todo], fallback=E3)
            change = 2.0 * np.einsum("ic,ic->i", trial - old[todo], pull[todo])
            better = change < 0.0
            idx = np.flatnonzero(todo)[better]
            out[idx] = trial[better]
            todo[idx] = False
            step *= 0.5
        stalled = int(np.count_nonzero(np.all(out == old, axis=1)))
        if stalled:
            self.stalled += stalled
            logger.debug(f"{stalled} vertex update(s) stalled in this sweep")
        return out


def _initial_values(
    mesh: ShellMesh,
    psi: BoundaryField,
    opts: SolveOptions,
    restart: int,
    initial: Optional[SphereField],
) -> np.ndarray:
    if opts.init == "given":
        if initial is None:
            raise ParameterError("init='given' needs an initial field")
        if not same_shell_mesh(initial.mesh, mesh):
            raise MeshMismatchError("initial field does not match the mesh")
        values = np.array(initial.values)
    else:
        values = np.array(homogeneous_extension(psi, mesh).values)
    rng = np.random.default_rng([opts.seed, restart])
    interior = mesh.interior_ids
    if opts.init == "random_seeded":
        values[interior] = normalize_rows(rng.normal(size=(interior.size, 3)), fallback=E3)
    elif restart > 0 and opts.perturbation > 0.0:
        noise = opts.perturbation * rng.normal(size=(interior.size, 3))
        values[interior] = normalize_rows(values[interior] + noise, fallback=E3)
    values[mesh.boundary_vertex_ids] = psi.values
    return values


def minimize(
    mesh: ShellMesh,
    psi: BoundaryField,
    opts: Optional[SolveOptions] = None,
    initial: Optional[SphereField] = None,
) -> Tuple[SphereField, SolveReport]:
    r"""Minimize the discrete Dirichlet energy with boundary values ``psi``.

    Each interior vertex is moved to the unit vector that minimizes the
    energy with all other values frozen, ``u_i = -b_i / |b_i|`` with
    ``b_i = sum_{j != i} K_ij u_j``; this is the normalized stiffness-weighted
    average of the neighbours and never raises the energy. Vertices are
    visited by colour class and, within a class, in ascending index order;
    members of one class share no tetrahedron, so each class is updated in
    one vectorized step. This replaces a plain ascending-index sweep: the
    sequence of updates differs, but it is fixed by the mesh, so repeated
    runs stay bit-identical and every update still lowers the energy.

    Args:
        mesh (ShellMesh): The ball mesh.
        psi (BoundaryField): Unit boundary values on ``mesh.sphere``.
        opts (SolveOptions, optional): Solver options.
            (default: :obj:`None`)
        initial (SphereField, optional): Starting field for
            ``init="given"``. (default: :obj:`None`)

    Returns:
        Tuple[SphereField, SolveReport]: Lowest-energy field over all restarts
        and its report.
    """
    opts = opts or SolveOptions()
    if not same_sphere(psi.sphere, mesh.sphere):
        raise MeshMismatchError("boundary field is not sampled on the mesh's sphere")
    check_unit_rows(psi.values, UNIT_TOLERANCE, "boundary data")

    best: Optional[Tuple[np.ndarray, SolveReport]] = None
    energies = []
    for restart in range(opts.restarts):
        start = time.perf_counter()
        work = _Relaxation(mesh, _initial_values(mesh, psi, opts, restart, initial))
        initial_energy = _energy(mesh.stiffness, work.values)
        previous = initial_energy
        converged = False
        iterations = 0
        for iterations in range(1, opts.max_iterations + 1):
            energy = work.sweep()
            if energy <= _ENERGY_FLOOR or previous - energy <= opts.tolerance * previous:
                converged = True
                break
            previous = energy
            if iterations % 200 == 0:
                logger.debug(f"Restart {restart}: sweep {iterations}, energy {energy:.10g}")
        report = SolveReport(
            iterations=iterations,
            energy_history=tuple(work.history),
            final_energy=work.history[-1],
            converged=converged,
            wall_time=time.perf_counter() - start,
            initial_energy=initial_energy,
            restart=restart,
            stalled_updates=work.stalled,
        )
        energies.append(report.final_energy)
        logger.info(
            f"Restart {restart}: energy {report.final_energy:.8g} after "
            f"{iterations} sweeps (converged={converged})"
        )
        if not converged:
            logger.warning(f"Restart {restart} hit max_iterations={opts.max_iterations}")
        if best is None or report.final_energy < best[1].final_energy:
            best = (work.values, report)

    values, report = best
    report = replace(report, restart_energies=tuple(energies))
    return SphereField(mesh, values), report


@dataclass(frozen=True)
class BoundCheck:
    holds: bool
    slack: float
    bound: float


def energy_upper_bound_check(energy: float, delta: float, p: float, kappa: float) -> BoundCheck:
    r"""Check ``E <= (1 + k) 8 pi + (1 + 1 / k) (4 pi)^((p - 2) / p) delta^2``.

    Args:
        energy (float): Energy of the minimizer for the perturbed data.
        delta (float): W^{1,p} distance of the data to the identity.
        p (float): Exponent, at least 2.
        kappa (float): Splitting parameter, positive.

    Returns:
        BoundCheck: Whether the bound holds, the slack ``bound - energy``
        and the bound itself.
    """
    if kappa <= 0.0:
        raise ParameterError(f"kappa must be positive, got {kappa}")
    if p < 2.0:
        raise ParameterError(f"the energy bound needs p >= 2, got {p}")
    if delta < 0.0:
        raise ParameterError(f"delta must be nonnegative, got {delta}")
    factor = FOUR_PI if math.isinf(p) else FOUR_PI ** ((p - 2.0) / p)
    bound = (1.0 + kappa) * EIGHT_PI + (1.0 + 1.0 / kappa) * factor * delta**2
    return BoundCheck(holds=bool(energy <= bound), slack=bound - energy, bound=bound)
