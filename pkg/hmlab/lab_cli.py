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
import argparse
import datetime
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from dotenv import find_dotenv, load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from camel.logger import get_logger, set_log_level

from hmlab.utils import (
    EIGHT_PI,
    BubbleDipoleSpec,
    BoundarySpec,
    HmlabError,
    IdentitySpec,
    MeshConfig,
    ParameterError,
    ResolutionError,
    SolveOptions,
    StabilityBenchmark,
    SweepConfig,
    bubble_scaling_curve,
    build_shell_mesh,
    build_sphere_mesh,
    degree,
    detect_singularities,
    eval_boundary_spec,
    minimize,
    monotonicity_profile,
    radial_term,
    read_field,
    w1p_distance,
    write_field,
)

logger = get_logger(__name__)

SCHEMA_VERSION = 1
EXIT_OK = 0
EXIT_COMPUTE = 1
EXIT_CONFIG = 2
EXIT_RESOLUTION = 3
EXIT_CHECK_FAILED = 4
MONOTONICITY_TOLERANCE = 0.05 * EIGHT_PI


class BubbleConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    ps: List[float] = Field(default_factory=lambda: [1.5, 2.0, 3.0], min_length=1)
    scales: List[float] = Field(
        default_factory=lambda: [0.4, 0.28, 0.2, 0.14, 0.1], min_length=2
    )
    level: int = Field(6, ge=0, le=7)
    rings: int = Field(48, ge=4)
    separation: float = Field(0.1, gt=0.0)


class MonotonicityConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    center: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    radii: Optional[List[float]] = None


class InstabilityConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scale: float = Field(0.8, gt=0.0)
    separation: float = Field(0.1, gt=0.0)


class OutputConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    directory: Optional[str] = None


class ExperimentConfig(BaseModel):
    r"""Everything a subcommand reads; every section has defaults."""

    model_config = ConfigDict(extra="forbid")

    mesh: MeshConfig = Field(default_factory=MeshConfig)
    boundary: BoundarySpec = Field(default_factory=IdentitySpec)
    solver: SolveOptions = Field(default_factory=SolveOptions)
    sweep: SweepConfig = Field(default_factory=SweepConfig)
    bubble: BubbleConfig = Field(default_factory=BubbleConfig)
    monotonicity: MonotonicityConfig = Field(default_factory=MonotonicityConfig)
    instability: InstabilityConfig = Field(default_factory=InstabilityConfig)
    output: OutputConfig = Field(default_factory=OutputConfig)


def load_config(path: Optional[str]) -> ExperimentConfig:
    r"""Read and validate a JSON config; ``None`` gives the defaults."""
    if path is None:
        return ExperimentConfig()
    with open(path, "r", encoding="utf-8") as f:
        data = json.load(f)
    return ExperimentConfig.model_validate(data)


def setup_logging(log_dir: Path, level: str = "INFO") -> Path:
    r"""Send all logs to a dated file under ``log_dir`` and to the console."""
    log_dir.mkdir(parents=True, exist_ok=True)
    current_date = datetime.datetime.now().strftime("%Y-%m-%d")
    log_file = log_dir / f"hmlab_log_{current_date}.txt"

    root_logger = logging.getLogger()
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)
    root_logger.setLevel(level)

    file_handler = logging.FileHandler(log_file, encoding="utf-8", mode="a")
    console_handler = logging.StreamHandler()
    formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
    for handler in (file_handler, console_handler):
        handler.setLevel(level)
        handler.setFormatter(formatter)
        root_logger.addHandler(handler)

    set_log_level(level)
    logging.info("Logging system initialized, log file: %s", log_file)
    return log_file


class OutputSet:
    r"""Output files of one command, removed again if the command fails."""

    def __init__(self, directory: Path):
        self.directory = directory
        self._paths: List[Path] = []

    def path(self, name: str) -> Path:
        path = self.directory / name
        self._paths.append(path)
        return path

    def write_json(self, name: str, data: Dict[str, Any]) -> Path:
        path = self.path(name)
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"schema_version": SCHEMA_VERSION, **data}, f, indent=4)
        return path

    def write_csv(self, name: str, frame: pd.DataFrame) -> Path:
        path = self.path(name)
        frame.to_csv(path, index=False, float_format="%.17g")
        return path

    def discard(self) -> None:
        for path in self._paths:
            if path.exists():
                path.unlink()
                logger.info(f"Removed partial output {path}")


def cmd_solve(config: ExperimentConfig, args, out: OutputSet) -> int:
    mesh = build_shell_mesh(config.mesh.level, config.mesh.layers)
    psi = eval_boundary_spec(config.boundary, mesh.sphere)
    u, report = minimize(mesh, psi, config.solver)
    singular = detect_singularities(u)
    write_field(out.path("field.vtk"), u)
    out.write_json(
        "solve.json",
        {
            "boundary": config.boundary.model_dump(),
            "mesh": mesh.statistics(),
            "boundary_degree": degree(psi).to_dict(),
            "energy": report.final_energy,
            "energy_over_8pi": report.final_energy / EIGHT_PI,
            "report": report.to_dict(),
            "singularities": singular.to_dict(),
        },
    )
    logger.info(f"Solve finished: E={report.final_energy:.8g}, {len(singular)} singularity(ies)")
    return EXIT_OK


def cmd_sweep(config: ExperimentConfig, args, out: OutputSet) -> int:
    csv_path = out.path("sweep.csv")
    json_path = out.path("sweep.json")
    benchmark = StabilityBenchmark(
        data_dir=str(csv_path.parent), save_to=str(json_path), processes=args.threads
    )
    summary = benchmark.load(config).run()
    checks = summary["bound_checks"]
    logger.info(
        f"Sweep finished: slope |a| vs delta {summary['slopes']['a_norm']['slope']}, "
        f"energy bound {checks['energy_bound']['passed']}/{checks['energy_bound']['total']}"
    )
    return EXIT_OK


def cmd_bubble_scaling(config: ExperimentConfig, args, out: OutputSet) -> int:
    cfg = config.bubble
    rows, fits = [], {}
    for p in cfg.ps:
        curve = bubble_scaling_curve(
            p, cfg.scales, level=cfg.level, rings=cfg.rings, separation=cfg.separation
        )
        rows.extend(curve.rows())
        fits[f"{p:g}"] = {
            **curve.fit.as_dict(),
            "expected": (2.0 - p) / p,
            "excluded": list(curve.excluded),
        }
    out.write_csv("bubble_scaling.csv", pd.DataFrame(rows, columns=["p", "lambda", "norm"]))
    out.write_json("bubble_scaling.json", {"level": cfg.level, "rings": cfg.rings, "slopes": fits})
    return EXIT_OK


def _default_radii(mesh, center: np.ndarray) -> List[float]:
    reach = 1.0 - float(np.linalg.norm(center))
    floor = 2.0 * mesh.mesh_size_h
    radii = [k / mesh.layers for k in range(1, mesh.layers + 1)]
    radii = [r for r in radii if floor <= r <= reach + 1e-12]
    if len(radii) < 2:
        raise ResolutionError(f"no two shell radii between {floor:.4g} and {reach:.4g}")
    return radii


def cmd_monotonicity(config: ExperimentConfig, args, out: OutputSet) -> int:
    u = read_field(args.field)
    center = np.array(args.center if args.center is not None else config.monotonicity.center)
    radii = config.monotonicity.radii or _default_radii(u.mesh, center)
    profile = monotonicity_profile(u, center, radii)
    cumulative = [0.0] + [radial_term(u, center, radii[0], r) for r in radii[1:]]
    frame = pd.DataFrame(
        {
            "rho": profile.radii,
            "rescaled_energy": profile.rescaled,
            "radial_term_cumulative": cumulative,
        }
    )
    out.write_csv("monotonicity.csv", frame)
    out.write_json(
        "monotonicity.json",
        {
            "center": [float(x) for x in center],
            "max_violation": profile.max_violation,
            "tolerance": MONOTONICITY_TOLERANCE,
        },
    )
    if profile.max_violation > MONOTONICITY_TOLERANCE:
        logger.error(
            f"Rescaled energy drops by {profile.max_violation:.4g} "
            f"(tolerance {MONOTONICITY_TOLERANCE:.4g})"
        )
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_degree(config: ExperimentConfig, args, out: OutputSet) -> int:
    sphere = build_sphere_mesh(config.mesh.level)
    result = degree(eval_boundary_spec(config.boundary, sphere))
    out.write_json("degree.json", {"boundary": config.boundary.model_dump(), **result.to_dict()})
    print(json.dumps(result.to_dict()))
    return EXIT_OK


def cmd_instability_demo(config: ExperimentConfig, args, out: OutputSet) -> int:
    cfg = config.instability
    scale = args.scale if args.scale is not None else cfg.scale
    mesh = build_shell_mesh(config.mesh.level, config.mesh.layers)
    floor = 4.0 * mesh.sphere.max_edge_length
    if scale < floor:
        raise ResolutionError(f"bubble scale {scale:.4g} is below {floor:.4g} at this level")
    try:
        spec = BubbleDipoleSpec(scale=scale, separation=cfg.separation)
    except ValidationError as e:
        raise ParameterError(f"invalid bubble dipole: {e}") from e

    identity = eval_boundary_spec(IdentitySpec(), mesh.sphere)
    psi = eval_boundary_spec(spec, mesh.sphere)
    base, base_report = minimize(mesh, identity, config.solver)
    u, report = minimize(mesh, psi, config.solver)
    base_count = len(detect_singularities(base))
    singular = detect_singularities(u)
    limited = len(singular) <= base_count
    if limited:
        logger.warning(
            f"Dipole solve has {len(singular)} singularity(ies), not more than the "
            f"identity's {base_count}; result is resolution-limited"
        )
    out.write_json(
        "instability.json",
        {
            "scale": scale,
            "delta_p1_5": w1p_distance(psi, identity, 1.5),
            "delta_p2": w1p_distance(psi, identity, 2.0),
            "boundary_degree": degree(psi).degree,
            "energy": report.final_energy,
            "identity_energy": base_report.final_energy,
            "singularity_count": len(singular),
            "identity_singularity_count": base_count,
            "resolution_limited": limited,
            "singularities": singular.to_dict(),
        },
    )
    return EXIT_OK


def cmd_mesh_info(config: ExperimentConfig, args, out: OutputSet) -> int:
    mesh = build_shell_mesh(config.mesh.level, config.mesh.layers)
    info = {
        **mesh.statistics(),
        "sphere_euler_characteristic": mesh.sphere.euler_characteristic(),
        "connected": mesh.is_connected(),
    }
    out.write_json("mesh_info.json", info)
    print(json.dumps(info, indent=4))
    return EXIT_OK


COMMANDS = {
    "solve": cmd_solve,
    "sweep": cmd_sweep,
    "bubble-scaling": cmd_bubble_scaling,
    "monotonicity": cmd_monotonicity,
    "degree": cmd_degree,
    "instability-demo": cmd_instability_demo,
    "mesh-info": cmd_mesh_info,
}


def _center(text: str) -> List[float]:
    parts = [float(x) for x in text.split(",")]
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("center must be three comma-separated numbers")
    return parts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hmlab", description="Stability laboratory for harmonic maps of the ball into S^2."
    )
    parser.add_argument("--config", default=None, help="JSON experiment config")
    parser.add_argument("--seed", type=int, default=None, help="Override solver.seed")
    parser.add_argument("--out", default=None, help="Output directory")
    parser.add_argument("--threads", type=int, default=None, help="Worker threads for sweeps")
    parser.add_argument("--log-level", default=None, help="DEBUG, INFO, WARNING or ERROR")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        cmd = sub.add_parser(name)
        if name == "monotonicity":
            cmd.add_argument("field", help="VTK field written by 'solve'")
            cmd.add_argument("--center", type=_center, default=None, help="x,y,z")
        if name == "instability-demo":
            cmd.add_argument("--scale", type=float, default=None, help="Bubble scale lambda")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv(find_dotenv(usecwd=True))
    args = build_parser().parse_args(argv)
    level = (args.log_level or os.getenv("HMLAB_LOG_LEVEL", "INFO")).upper()
    if not isinstance(logging.getLevelName(level), int):
        print(f"config error: unknown log level {level!r}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        config = load_config(args.config)
    except FileNotFoundError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (json.JSONDecodeError, ValidationError) as e:
        print(f"config error in {args.config}: {e}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out or config.output.directory or os.getenv("HMLAB_OUT_DIR", "./hmlab_out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    setup_logging(out_dir / "logs", level)
    if args.seed is not None:
        config.solver.seed = args.seed
    if args.threads is None:
        args.threads = int(os.getenv("HMLAB_THREADS", "1"))

    out = OutputSet(out_dir)
    try:
        return COMMANDS[args.command](config, args, out)
    except (ValidationError, ParameterError) as e:
        logger.error(f"{args.command}: invalid parameters: {e}")
        code = EXIT_CONFIG
    except ResolutionError as e:
        logger.error(f"{args.command}: under-resolved: {e}")
        code = EXIT_RESOLUTION
    except (HmlabError, ArithmeticError, np.linalg.LinAlgError, RuntimeError) as e:
        logger.error(f"{args.command} failed: {e}")
        code = EXIT_COMPUTE
    out.discard()
    return code


if __name__ == "__main__":
    sys.exit(main())
