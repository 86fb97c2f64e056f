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
from pydantic import ValidationError
from scipy.spatial.transform import Rotation

from hmlab.utils import (
    BoundaryField,
    BubbleDipoleSpec,
    CapTwistSpec,
    CompositionSpec,
    ConstantSpec,
    IdentitySpec,
    InputError,
    MeshMismatchError,
    ParameterError,
    RotationSpec,
    SphereField,
    build_sphere_mesh,
    degree,
    eval_boundary_spec,
    hedgehog,
    holder_distance,
    linf_distance,
    parse_boundary_spec,
    w1p_distance,
    w1p_parts,
)


def test_identity_spec_returns_vertices(sphere3):
    psi = eval_boundary_spec(IdentitySpec(), sphere3)
    np.testing.assert_allclose(psi.values, sphere3.vertices, atol=1e-15)


def test_rotation_spec_from_axis_angle(sphere3):
    spec = RotationSpec(axis=(0.0, 0.0, 1.0), angle=0.3)
    expected = Rotation.from_rotvec([0.0, 0.0, 0.3]).as_matrix()
    np.testing.assert_allclose(spec.rotation_matrix(), expected, atol=1e-15)
    psi = eval_boundary_spec(spec, sphere3)
    np.testing.assert_allclose(psi.values, sphere3.vertices @ expected.T, atol=1e-14)


def test_rotation_spec_rejects_non_orthogonal_matrix():
    with pytest.raises(ValidationError):
        RotationSpec(matrix=[[1.0, 0.1, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    with pytest.raises(ValidationError):
        RotationSpec()


def test_reflection_has_degree_minus_one(sphere3):
    spec = RotationSpec(matrix=[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]])
    assert degree(eval_boundary_spec(spec, sphere3)).degree == -1


def test_cap_twist_is_identity_outside_the_cap(sphere3):
    spec = CapTwistSpec(center=(0.0, 0.0, 1.0), radius=0.5, angle=0.4)
    psi = eval_boundary_spec(spec, sphere3)
    outside = np.arccos(np.clip(sphere3.vertices[:, 2], -1.0, 1.0)) >= 0.5
    np.testing.assert_allclose(psi.values[outside], sphere3.vertices[outside], atol=1e-14)
    assert linf_distance(psi, eval_boundary_spec(IdentitySpec(), sphere3)) > 0.0


def test_cap_twist_with_zero_angle_is_identity(sphere3):
    psi = eval_boundary_spec(CapTwistSpec(angle=0.0), sphere3)
    np.testing.assert_allclose(psi.values, sphere3.vertices, atol=1e-14)


def test_cap_twist_radius_limit():
    with pytest.raises(ValidationError):
        CapTwistSpec(radius=math.pi / 2)


def test_bubble_dipole_keeps_degree_one(sphere3):
    psi = eval_boundary_spec(BubbleDipoleSpec(scale=0.8, separation=0.1), sphere3)
    result = degree(psi)
    assert result.degree == 1
    assert result.residual < 0.01


def test_overlapping_bubble_caps_are_rejected(sphere3):
    spec = BubbleDipoleSpec(scale=1.5, separation=0.5)
    with pytest.raises(ParameterError):
        spec.cap_centers()
    with pytest.raises(ParameterError):
        eval_boundary_spec(spec, sphere3)


def test_bubble_dipole_sends_cap_centre_to_antipode():
    spec = BubbleDipoleSpec(center=(0.0, 0.0, 1.0), scale=0.4)
    first, second = spec.cap_centers()
    images = spec.apply(np.stack([first, second]))
    np.testing.assert_allclose(images, -np.stack([first, second]), atol=1e-12)
    assert math.acos(float(first @ second)) == pytest.approx(0.9, abs=1e-12)


def test_composition_applies_members_in_order(sphere3):
    a = RotationSpec(axis=(1.0, 0.0, 0.0), angle=0.5)
    b = RotationSpec(axis=(0.0, 0.0, 1.0), angle=1.1)
    psi = eval_boundary_spec(CompositionSpec(members=[a, b]), sphere3)
    expected = sphere3.vertices @ a.rotation_matrix().T @ b.rotation_matrix().T
    np.testing.assert_allclose(psi.values, expected, atol=1e-14)


def test_parse_boundary_spec_from_mapping(sphere3):
    spec = parse_boundary_spec(
        {
            "type": "composition",
            "members": [
                {"type": "cap_twist", "center": [1.0, 0.0, 0.0], "radius": 0.4, "angle": 0.1},
                {"type": "constant", "vector": [0.0, 0.0, 2.0]},
            ],
        }
    )
    assert isinstance(spec, CompositionSpec)
    psi = eval_boundary_spec(spec, sphere3)
    np.testing.assert_allclose(psi.values, np.tile([0.0, 0.0, 1.0], (sphere3.n_vertices, 1)))


def test_parse_boundary_spec_rejects_unknown_type():
    with pytest.raises(ValidationError):
        parse_boundary_spec({"type": "spiral"})
    with pytest.raises(ValidationError):
        ConstantSpec(vector=(0.0, 0.0, 0.0))


def test_boundary_field_validation(sphere3):
    with pytest.raises(InputError):
        BoundaryField(sphere3, 2.0 * sphere3.vertices)
    with pytest.raises(MeshMismatchError):
        BoundaryField(sphere3, sphere3.vertices[:10])


def test_w1p_identity_against_constant(sphere3):
    ident = eval_boundary_spec(IdentitySpec(), sphere3)
    north = eval_boundary_spec(ConstantSpec(), sphere3)
    assert w1p_distance(ident, north, 2.0) == pytest.approx(math.sqrt(16.0 * math.pi), rel=0.03)


def test_w1p_sup_part_of_rotation(sphere3):
    theta = 0.3
    ident = eval_boundary_spec(IdentitySpec(), sphere3)
    turned = eval_boundary_spec(RotationSpec(axis=(0.0, 0.0, 1.0), angle=theta), sphere3)
    value, _ = w1p_parts(turned, ident, math.inf)
    assert value == pytest.approx(2.0 * math.sin(theta / 2.0), abs=1e-12)


def test_w1p_is_a_metric(sphere3, random_unit):
    f, g, k = (BoundaryField(sphere3, random_unit(sphere3.n_vertices)) for _ in range(3))
    for p in (1.0, 2.0, 3.5, math.inf):
        assert w1p_distance(f, f, p) == 0.0
        assert w1p_distance(f, g, p) == pytest.approx(w1p_distance(g, f, p), rel=1e-12)
        assert w1p_distance(f, k, p) <= w1p_distance(f, g, p) + w1p_distance(g, k, p) + 1e-12


def test_normalized_w1p_grows_with_p(sphere3):
    ident = eval_boundary_spec(IdentitySpec(), sphere3)
    twisted = eval_boundary_spec(CapTwistSpec(radius=0.7, angle=0.5), sphere3)
    values = [
        w1p_distance(twisted, ident, p, normalized=True) for p in (1.0, 1.5, 2.0, 3.0, 4.0, math.inf)
    ]
    assert all(b >= a * (1.0 - 1e-12) for a, b in zip(values, values[1:]))


def test_w1p_rejects_small_exponent(sphere3):
    ident = eval_boundary_spec(IdentitySpec(), sphere3)
    with pytest.raises(ParameterError):
        w1p_distance(ident, ident, 0.5)


def test_w1p_rejects_different_spheres(sphere3):
    other = build_sphere_mesh(2)
    with pytest.raises(MeshMismatchError):
        w1p_distance(
            eval_boundary_spec(IdentitySpec(), sphere3), eval_boundary_spec(IdentitySpec(), other), 2.0
        )


def test_holder_distance_zero_for_equal_fields(coarse_mesh):
    u = hedgehog(coarse_mesh)
    assert holder_distance(u, u, 0.5) == 0.0


def test_holder_distance_is_symmetric_and_positive(tiny_mesh):
    u = hedgehog(tiny_mesh)
    v = u.rotated(Rotation.from_rotvec([0.0, 0.2, 0.0]).as_matrix())
    d = holder_distance(u, v, 0.5, pairs="all")
    assert d > 0.0
    assert d == pytest.approx(holder_distance(v, u, 0.5, pairs="all"), rel=1e-12)
    assert d >= linf_distance(u, v)


def test_sampled_pairs_never_exceed_exhaustive(tiny_mesh):
    u = hedgehog(tiny_mesh)
    v = u.rotated(Rotation.from_rotvec([0.3, 0.0, 0.1]).as_matrix())
    assert holder_distance(u, v, 0.25) <= holder_distance(u, v, 0.25, pairs="all") + 1e-15


def test_holder_distance_checks_inputs(tiny_mesh, coarse_mesh):
    u = hedgehog(tiny_mesh)
    with pytest.raises(ParameterError):
        holder_distance(u, u, 1.5)
    with pytest.raises(MeshMismatchError):
        holder_distance(u, hedgehog(coarse_mesh), 0.5)


def test_sphere_field_rejects_wrong_shape(tiny_mesh):
    with pytest.raises(MeshMismatchError):
        SphereField(tiny_mesh, np.tile([0.0, 0.0, 1.0], (10, 1)))
