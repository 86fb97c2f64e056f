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

import numpy as np
import pandas as pd
import pytest
from pydantic import ValidationError

from hmlab.lab_cli import ExperimentConfig
from hmlab.utils import (
    CapTwistSpec,
    MeshConfig,
    ParameterError,
    RotationSpec,
    SolveOptions,
    StabilityBenchmark,
    SweepConfig,
    hedgehog,
    tangent_field,
)
from hmlab.utils.stability import SWEEP_CSV_COLUMNS, _clean


def test_cap_twist_ladder():
    ladder = SweepConfig(angles=[0.3, 0.1], cap_radius=0.5).ladder()
    assert [param for param, _ in ladder] == [0.3, 0.1]
    assert all(isinstance(spec, CapTwistSpec) for _, spec in ladder)
    assert ladder[1][1].radius == 0.5


def test_explicit_spec_ladder():
    cfg = SweepConfig.model_validate(
        {
            "specs": [
                {"type": "rotation", "axis": [0, 0, 1], "angle": 0.1},
                {"type": "cap_twist", "angle": 0.2},
            ]
        }
    )
    ladder = cfg.ladder()
    assert [param for param, _ in ladder] == [0.0, 1.0]
    assert isinstance(ladder[0][1], RotationSpec)


def test_sweep_config_validation():
    with pytest.raises(ValidationError):
        SweepConfig(betas=[1.5])
    with pytest.raises(ValidationError):
        SweepConfig(annulus=(0.6, 0.3))
    with pytest.raises(ValidationError):
        SweepConfig(p=1.5)
    with pytest.raises(ValidationError):
        SweepConfig(q=2.0)


def test_tangent_field_matches_hedgehog(coarse_mesh):
    u = tangent_field(coarse_mesh, np.zeros(3), np.eye(3))
    np.testing.assert_allclose(u.values[1:], hedgehog(coarse_mesh).values[1:], atol=1e-14)


def test_clean_replaces_non_finite_values():
    data = {"a": [1.0, float("nan")], "b": {"c": float("inf")}, "d": "text", "e": 2}
    assert _clean(data) == {"a": [1.0, None], "b": {"c": None}, "d": "text", "e": 2}


def test_run_requires_load(tmp_path):
    benchmark = StabilityBenchmark(str(tmp_path), str(tmp_path / "sweep.json"))
    with pytest.raises(ParameterError):
        benchmark.run()


@pytest.mark.slow
def test_small_sweep(tmp_path):
    config = ExperimentConfig(
        mesh=MeshConfig(level=2, layers=8),
        solver=SolveOptions(max_iterations=400, restarts=1),
        sweep=SweepConfig(angles=[0.4, 0.2], cap_radius=0.6, p=2.0),
    )
    save_to = tmp_path / "sweep.json"
    benchmark = StabilityBenchmark(str(tmp_path), str(save_to), processes=2)
    summary = benchmark.load(config).run()

    assert summary["total"] == 3
    assert summary["schema_version"] == 1
    assert summary["predicted_exponents"]["a_norm"] == 0.25
    results = summary["results"]
    assert results[0]["control"] is True
    assert results[0]["delta"] == 0.0
    deltas = [r["delta"] for r in results]
    assert deltas == sorted(deltas)
    assert all(r["delta"] > 0.0 for r in results[1:])
    assert summary["bound_checks"]["energy_bound"]["total"] == 2
    assert set(results[1]["holder_by_beta"]) == {"0.25"}

    records = benchmark.records
    assert records[0].control
    assert all(math.isfinite(r.energy) for r in records)
    assert all(np.allclose(r.theta.T @ r.theta, np.eye(3), atol=1e-8) for r in records)

    table = pd.read_csv(tmp_path / "sweep.csv")
    assert list(table.columns) == SWEEP_CSV_COLUMNS
    assert len(table) == 3
    with open(save_to, encoding="utf-8") as f:
        assert json.load(f)["total"] == 3


@pytest.mark.slow
def test_cap_twist_sweep_at_p_four(tmp_path):
    config = ExperimentConfig(
        mesh=MeshConfig(level=3, layers=24),
        solver=SolveOptions(max_iterations=2000, restarts=1),
        sweep=SweepConfig(angles=[0.8, 0.56, 0.4, 0.28, 0.2], cap_radius=0.6, p=4.0),
    )
    benchmark = StabilityBenchmark(str(tmp_path), str(tmp_path / "sweep.json"), processes=2)
    summary = benchmark.load(config).run()

    assert summary["total"] == 6
    energy_bound = summary["bound_checks"]["energy_bound"]
    assert energy_bound["total"] == 5
    assert energy_bound["passed"] == 5
    assert summary["bound_checks"]["comparison_bound"]["total"] == 5
    assert summary["slopes"]["a_norm"]["slope"] >= 0.4
    assert summary["slopes"]["holder"]["slope"] >= 0.15
    assert summary["spearman_a2_energy_gap"]["rho"] > 0.0
