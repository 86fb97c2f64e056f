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
import logging
import os
import pathlib

from dotenv import load_dotenv
from camel.logger import set_log_level, get_logger

from hmlab.lab_cli import ExperimentConfig
from hmlab.utils import MeshConfig, SolveOptions, StabilityBenchmark, SweepConfig

base_dir = pathlib.Path(__file__).parent
load_dotenv(dotenv_path=str(base_dir / ".env"))

set_log_level(level="INFO")
logger = get_logger(__name__)
file_handler = logging.FileHandler(base_dir / "sweep.log")
file_handler.setLevel(logging.DEBUG)
formatter = logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
file_handler.setFormatter(formatter)
logging.getLogger().addHandler(file_handler)


def construct_config(cap_radius: float) -> ExperimentConfig:
    r"""Build a sweep that twists a polar cap of the identity boundary map.

    Args:
        cap_radius (float): Geodesic radius of the twisted cap.

    Returns:
        ExperimentConfig: Mesh, solver and sweep settings for the run.
    """
    return ExperimentConfig(
        mesh=MeshConfig(level=3, layers=24),
        solver=SolveOptions(max_iterations=3000, restarts=2, seed=7),
        sweep=SweepConfig(
            angles=[0.4, 0.28, 0.2, 0.14, 0.1, 0.07],
            cap_radius=cap_radius,
            p=2.0,
            q=4.0,
            betas=[0.25, 0.5],
        ),
    )


def main():
    r"""Run the sweep and print how the singularity follows the boundary."""
    out_dir = base_dir / "results"
    threads = int(os.getenv("HMLAB_THREADS", "4"))
    config = construct_config(cap_radius=0.6)

    benchmark = StabilityBenchmark(str(out_dir), str(out_dir / "sweep.json"), processes=threads)
    summary = benchmark.load(config).run()

    for record in benchmark.records:
        print(
            f"delta={record.delta:.4g}  |a|={record.a_norm:.4g}  "
            f"theta_dev={record.theta_dev:.4g}  E-8pi={record.energy_gap:.4g}"
        )
    slopes = summary["slopes"]
    logger.info(f"Fitted exponent for |a|: {slopes['a_norm']}")
    logger.info(f"Predicted exponents: {summary['predicted_exponents']}")
    print(f"\033[94mResults written to {out_dir}\033[0m")


if __name__ == "__main__":
    main()
