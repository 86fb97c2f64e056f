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

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from hmlab.utils import (
    EIGHT_PI,
    IdentitySpec,
    ParameterError,
    ResolutionError,
    SphereField,
    boundary_dirichlet_energy,
    dirichlet_energy,
    energy_split,
    eval_boundary_spec,
    monotonicity_profile,
    radial_term,
    rescaled_energy,
)


def constant_field(mesh):
    return SphereField(mesh, np.tile([0.0, 0.0, 1.0], (mesh.n_vertices, 1)))


def test_constant_field_has_no_energy(coarse_mesh):
    u = constant_field(coarse_mesh)
    assert dirichlet_energy(u) == pytest.approx(0.0, abs=1e-14)
    r0 = 2.01 * coarse_mesh.mesh_size_h
    profile = monotonicity_profile(u, np.zeros(3), [r0, (1.0 + r0) / 2.0, 1.0])
    np.testing.assert_allclose(profile.rescaled, 0.0, atol=1e-14)
    assert profile.max_violation == pytest.approx(0.0, abs=1e-14)


def test_hedgehog_energy_is_eight_pi(fine_hedgehog):
    assert dirichlet_energy(fine_hedgehog) == pytest.approx(EIGHT_PI, rel=0.03)


def test_energy_is_rotation_invariant(fine_hedgehog):
    turn = Rotation.from_rotvec([0.3, -0.2, 0.7]).as_matrix()
    assert dirichlet_energy(fine_hedgehog.rotated(turn)) == pytest.approx(
        dirichlet_energy(fine_hedgehog), rel=1e-10
    )


def test_boundary_energy_of_identity(sphere3):
    psi = eval_boundary_spec(IdentitySpec(), sphere3)
    assert boundary_dirichlet_energy(psi) == pytest.approx(EIGHT_PI, rel=0.01)


@pytest.mark.parametrize("rho", [0.75, 1.0])
def test_rescaled_hedgehog_energy_at_origin(fine_hedgehog, rho):
    assert rescaled_energy(fine_hedgehog, np.zeros(3), rho) == pytest.approx(EIGHT_PI, rel=0.05)


def test_rescaled_energy_away_from_singularity(fine_hedgehog):
    assert rescaled_energy(fine_hedgehog, np.array([0.5, 0.0, 0.0]), 0.4) < EIGHT_PI


def test_hedgehog_monotonicity_profile(fine_hedgehog):
    profile = monotonicity_profile(fine_hedgehog, np.zeros(3), [0.5, 0.75, 1.0])
    assert profile.max_violation <= 0.05 * EIGHT_PI
    assert profile.rescaled.shape == (3,)


def test_monotonicity_profile_validates_radii(fine_hedgehog):
    with pytest.raises(ParameterError):
        monotonicity_profile(fine_hedgehog, np.zeros(3), [0.8, 0.6])
    with pytest.raises(ParameterError):
        monotonicity_profile(fine_hedgehog, np.zeros(3), [])


def test_hedgehog_radial_term_is_small(fine_hedgehog):
    assert radial_term(fine_hedgehog, np.zeros(3), 0.5, 1.0) <= 0.05 * EIGHT_PI * 0.5


def test_radial_term_requires_ordered_radii(fine_hedgehog):
    with pytest.raises(ParameterError):
        radial_term(fine_hedgehog, np.zeros(3), 0.8, 0.5)


def test_energy_split_adds_up(fine_hedgehog):
    inside, outside = energy_split(fine_hedgehog, 0.5)
    assert inside + outside == pytest.approx(dirichlet_energy(fine_hedgehog), rel=1e-12)
    inside, outside = energy_split(fine_hedgehog, 0.3, center=np.array([0.2, 0.1, 0.0]))
    assert inside + outside == pytest.approx(dirichlet_energy(fine_hedgehog), rel=1e-12)


def test_rescaled_energy_rejects_unresolved_balls(fine_hedgehog):
    h = fine_hedgehog.mesh.mesh_size_h
    with pytest.raises(ResolutionError):
        rescaled_energy(fine_hedgehog, np.zeros(3), h)
    with pytest.raises(ParameterError):
        rescaled_energy(fine_hedgehog, np.array([0.6, 0.0, 0.0]), 0.5)


def test_linear_growth_of_ball_energy(fine_hedgehog):
    small = rescaled_energy(fine_hedgehog, np.zeros(3), 0.5) * 0.5
    large = rescaled_energy(fine_hedgehog, np.zeros(3), 1.0)
    assert math.isclose(small / large, 0.5, rel_tol=0.1)
