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
import json
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy import stats
from tqdm import tqdm
from camel.logger import get_logger

from .ball_mesh import ShellMesh, build_shell_mesh
from .common import (
    E3,
    AlignmentError,
    ConstructionError,
    HmlabError,
    ParameterError,
    fit_loglog_slope,
    normalize_rows,
)
from .constructions import (
    DEFAULT_ANNULUS,
    StabilityRecord,
    apply_registration,
    build_registration,
    comparison_bounds,
    comparison_map,
    critical_exponents,
    fit_tangent_map,
    tangent_proxy,
)
from .energy import dirichlet_energy
from .minimizer import SolveOptions, energy_upper_bound_check, minimize
from .sphere_fields import (
    BoundaryField,
    BoundarySpec,
    CapTwistSpec,
    IdentitySpec,
    SphereField,
    eval_boundary_spec,
    holder_distance,
    linf_distance,
    w1p_distance,
)
from .topology import detect_singularities

logger = get_logger(__name__)

SCHEMA_VERSION = 1
SWEEP_CSV_COLUMNS = ["delta", "a_norm", "holder", "theta_dev", "energy_gap"]


class MeshConfig(BaseModel):
    level: int = Field(3, ge=1, le=7, description="Sphere subdivision level s.")
    layers: int = Field(24, ge=2, description="Number of radial shells L.")


class SweepConfig(BaseModel):
    r"""Perturbation ladder and diagnostics of a stability sweep.

    The ladder is either a list of explicit boundary specs or a list of
    cap-twist angles applied to a cap of ``cap_radius`` around ``cap_center``.
    """

    p: float = Field(4.0, ge=2.0)
    angles: List[float] = [0.4, 0.2, 0.1, 0.05, 0.025]
    cap_center: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    cap_radius: float = Field(0.6, gt=0.0, lt=math.pi / 2)
    specs: Optional[List[BoundarySpec]] = None
    q: float = Field(4.0, gt=2.0)
    betas: List[float] = Field(default_factory=lambda: [0.25], min_length=1)
    rho: float = Field(0.5, gt=0.0, lt=1.0)
    annulus: Tuple[float, float] = DEFAULT_ANNULUS
    kappa: Optional[float] = Field(None, gt=0.0)

    @field_validator("betas")
    @classmethod
    def _betas(cls, v):
        if any(not 0.0 < b <= 1.0 for b in v):
            raise ValueError("Hoelder exponents must lie in ]0, 1]")
        return v

    @model_validator(mode="after")
    def _annulus(self):
        r1, r2 = self.annulus
        if not 0.0 < r1 < r2 <= 1.0:
            raise ValueError("annulus must satisfy 0 < r1 < r2 <= 1")
        return self

    def ladder(self) -> List[Tuple[float, Any]]:
        r"""``(parameter, spec)`` pairs; explicit specs use their index."""
        if self.specs:
            return [(float(k), spec) for k, spec in enumerate(self.specs)]
        return [
            (float(angle), CapTwistSpec(center=self.cap_center, radius=self.cap_radius, angle=angle))
            for angle in self.angles
        ]


def tangent_field(mesh: ShellMesh, center: np.ndarray, rotation: np.ndarray) -> SphereField:
    r"""The field ``Theta (x - a) / |x - a|`` sampled at the vertices."""
    values = normalize_rows(mesh.vertices - center, fallback=E3) @ np.asarray(rotation).T
    return SphereField(mesh, normalize_rows(values))


def _finite(value: Optional[float]) -> Optional[float]:
    if value is None or not math.isfinite(value):
        return None
    return float(value)


class StabilityBenchmark:
    r"""Sweep of boundary perturbations of the identity and their minimizers.

    Every point solves the perturbed problem, locates its singularity and
    tangent map, and compares the minimizer with the identity control solve
    both directly and after registering the singularities.

    Args:
        data_dir (str): Directory for the CSV table.
        save_to (str): JSON report path.
        processes (int, optional): Number of worker threads.
            (default: :obj:`1`)
    """

    def __init__(self, data_dir: str, save_to: str, processes: int = 1):
        self.data_dir = Path(data_dir)
        self.save_to = Path(save_to)
        self.processes = max(1, int(processes))
        self._results: List[Dict[str, Any]] = []
        self._records: List[StabilityRecord] = []
        self._mesh: Optional[ShellMesh] = None
        self._sweep: Optional[SweepConfig] = None
        self._solver: Optional[SolveOptions] = None
        self._control: Optional[Dict[str, Any]] = None
        self._summary: Optional[Dict[str, Any]] = None
        self._holders: Dict[float, Dict[str, float]] = {}

    def load(self, config) -> "StabilityBenchmark":
        r"""Build the mesh and read the sweep settings.

        Args:
            config: Experiment configuration with ``mesh``, ``solver`` and
                ``sweep`` sections.
        """
        self._sweep = config.sweep
        self._solver = config.solver
        self._mesh = build_shell_mesh(config.mesh.level, config.mesh.layers)
        logger.info(
            f"Loaded sweep of {len(self._sweep.ladder())} point(s) on mesh "
            f"s={config.mesh.level}, L={config.mesh.layers}, h={self._mesh.mesh_size_h:.4g}"
        )
        return self

    @property
    def summary(self) -> Optional[Dict[str, Any]]:
        return self._summary

    @property
    def records(self) -> List[StabilityRecord]:
        return list(self._records)

    def _solve_point(self, spec) -> Tuple[BoundaryField, SphereField, float, Any]:
        psi = eval_boundary_spec(spec, self._mesh.sphere)
        u, report = minimize(self._mesh, psi, self._solver)
        return psi, u, report.final_energy, detect_singularities(u)

    def _locate(self, u: SphereField, singular_set, fallback: np.ndarray):
        if len(singular_set) == 0:
            logger.warning("No singularity detected; fitting the tangent map at the fallback point")
            start = fallback
        else:
            start = max(singular_set.points, key=lambda pt: pt.concentration).position
        fit = fit_tangent_map(u, start, self._sweep.annulus)
        return fit.center, fit.rotation

    def _run_control(self) -> StabilityRecord:
        psi, u, energy, sing = self._solve_point(IdentitySpec())
        a, theta = self._locate(u, sing, np.zeros(3))
        betas = self._sweep.betas
        holder = holder_distance(u, tangent_field(self._mesh, a, theta), betas[0])
        self._control = {"field": u, "a": a, "theta": theta, "energy": energy, "boundary": psi}
        logger.info(f"Identity control: E={energy:.8g}, |a0|={np.linalg.norm(a):.3g}")
        return StabilityRecord(
            parameter=0.0,
            delta=0.0,
            a=a,
            theta=theta,
            energy=energy,
            holder=holder,
            tangent_proxy=tangent_proxy(u, self._sweep.annulus),
            holder_registered=holder,
            holder_outside=holder,
            energy_bound=None,
            comparison_bound=None,
            multiple_singularities=len(sing) > 1,
            singularity_count=len(sing),
            control=True,
        )

    def _run_point(self, parameter: float, spec) -> StabilityRecord:
        cfg = self._sweep
        control = self._control
        psi, u, energy, sing = self._solve_point(spec)
        identity = control["boundary"]
        delta = w1p_distance(psi, identity, cfg.p)
        multiple = len(sing) > 1
        if multiple:
            logger.warning(f"Sweep point {parameter}: {len(sing)} singularities detected")
        a, theta = self._locate(u, sing, control["a"])
        beta = cfg.betas[0]
        reference = tangent_field(self._mesh, a, theta)
        holder = holder_distance(u, reference, beta)
        self._holders[parameter] = {
            f"{b:g}": holder_distance(u, reference, b) for b in cfg.betas
        }

        kappa = cfg.kappa or math.sqrt(delta)
        energy_ok = comparison_ok = None
        if kappa > 0.0:
            energy_ok = energy_upper_bound_check(energy, delta, cfg.p, kappa).holds
            sup_dev = linf_distance(psi, identity)
            if sup_dev < 1.0:
                try:
                    w = comparison_map(u, psi, cfg.rho)
                    bounds = comparison_bounds(energy, delta, cfg.p, cfg.rho, kappa, sup_dev)
                    comparison_ok = bool(dirichlet_energy(w) <= bounds.relaxed)
                except ConstructionError as e:
                    logger.warning(f"Sweep point {parameter}: no comparison map ({e})")

        v = control["field"]
        registered = outside = float("nan")
        try:
            eta = build_registration(
                [a], [control["a"]], [theta], [control["theta"]], self._mesh.mesh_size_h
            )
            result = apply_registration(v, eta)
            registered = holder_distance(u, result.field, beta)
            tau = eta.entries[0].tau
            region = np.linalg.norm(self._mesh.vertices - control["a"], axis=1) >= tau
            outside = holder_distance(u, v, beta, region=region)
        except (ParameterError, AlignmentError) as e:
            logger.warning(f"Sweep point {parameter}: registration skipped ({e})")

        record = StabilityRecord(
            parameter=parameter,
            delta=delta,
            a=a,
            theta=theta,
            energy=energy,
            holder=holder,
            tangent_proxy=tangent_proxy(u, cfg.annulus),
            a_shift=float(np.linalg.norm(a - control["a"])),
            holder_registered=registered,
            holder_outside=outside,
            energy_bound=energy_ok,
            comparison_bound=comparison_ok,
            multiple_singularities=multiple,
            singularity_count=len(sing),
        )
        logger.info(
            f"Sweep point {parameter}: delta={delta:.4g}, |a|={record.a_norm:.4g}, "
            f"holder={holder:.4g}, E-8pi={record.energy_gap:.4g}"
        )
        return record

    def run(self, save_result: bool = True) -> Dict[str, Any]:
        r"""Solve the control and every ladder point, then write the reports.

        Args:
            save_result (bool, optional): Write the CSV table and the JSON
                report. (default: :obj:`True`)

        Returns:
            Dict[str, Any]: The summary that goes into the JSON report.
        """
        if self._mesh is None:
            raise ParameterError("call load() before run()")
        records = [self._run_control()]
        ladder = self._sweep.ladder()
        logger.info(f"Number of sweep points: {len(ladder)}")
        with ThreadPoolExecutor(max_workers=self.processes) as pool:
            futures = {pool.submit(self._run_point, param, spec): param for param, spec in ladder}
            for future in tqdm(as_completed(futures), total=len(futures), desc="Sweeping"):
                try:
                    records.append(future.result())
                except HmlabError as e:
                    logger.error(f"Sweep point {futures[future]} failed: {e}")
                    raise
        records.sort(key=lambda r: (r.delta, not r.control, r.parameter))
        self._records = records
        self._results = [
            {
                **r.to_dict(),
                "holder_by_beta": {} if r.control else self._holders.get(r.parameter, {}),
            }
            for r in records
        ]
        self._summary = self._generate_summary()
        if save_result:
            self._save()
        return self._summary

    def _generate_summary(self) -> Dict[str, Any]:
        r"""Slopes, bound pass counts and the energy gap correlation."""
        cfg = self._sweep
        deltas = [r.delta for r in self._records]
        slopes = {
            name: fit_loglog_slope(deltas, [getattr(r, name) for r in self._records]).as_dict()
            for name in ("a_norm", "a_shift", "holder", "theta_dev", "holder_registered")
        }
        checks = {}
        for name in ("energy_bound", "comparison_bound"):
            flags = [getattr(r, name) for r in self._records if getattr(r, name) is not None]
            checks[name] = {"passed": int(sum(flags)), "total": len(flags)}
        pairs = [(r.a_norm**2, r.energy_gap) for r in self._records]
        if len(pairs) >= 3:
            corr, pvalue = stats.spearmanr([x for x, _ in pairs], [y for _, y in pairs])
        else:
            corr = pvalue = float("nan")
        predicted = critical_exponents(cfg.q) if cfg.p == 2.0 else {"a_norm": 0.5, "holder": 0.25}
        return {
            "schema_version": SCHEMA_VERSION,
            "p": cfg.p,
            "q": cfg.q,
            "betas": list(cfg.betas),
            "rho": cfg.rho,
            "mesh": {
                "level": self._mesh.level,
                "layers": self._mesh.layers,
                "mesh_size_h": self._mesh.mesh_size_h,
            },
            "control": {
                "a": [float(x) for x in self._control["a"]],
                "energy": self._control["energy"],
            },
            "slopes": _clean(slopes),
            "predicted_exponents": predicted,
            "bound_checks": checks,
            "spearman_a2_energy_gap": {"rho": _finite(corr), "pvalue": _finite(pvalue)},
            "multiple_singularity_points": sum(r.multiple_singularities for r in self._records),
            "total": len(self._results),
            "results": _clean(self._results),
        }

    def _save(self) -> None:
        self.data_dir.mkdir(parents=True, exist_ok=True)
        frame = pd.DataFrame([{c: getattr(r, c) for c in SWEEP_CSV_COLUMNS} for r in self._records])
        csv_path = self.data_dir / "sweep.csv"
        frame.to_csv(csv_path, index=False, float_format="%.17g", columns=SWEEP_CSV_COLUMNS)
        self.save_to.parent.mkdir(parents=True, exist_ok=True)
        with open(self.save_to, "w", encoding="utf-8") as f:
            json.dump(self._summary, f, indent=4)
        logger.info(f"Sweep written to {csv_path} and {self.save_to}")


def _clean(obj):
    r"""Replace non-finite floats by ``None`` so reports are strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, float):
        return _finite(obj)
    return obj
