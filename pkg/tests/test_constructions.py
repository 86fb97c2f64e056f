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
    HKL_CONSTANT,
    AlignmentError,
    BubbleDipoleSpec,
    CapTwistSpec,
    CompositionSpec,
    ConstantSpec,
    ConstructionError,
    IdentitySpec,
    NotApplicableError,
    ParameterError,
    RegistrationEntry,
    RegistrationMap,
    RotationSpec,
    SphereField,
    StabilityRecord,
    antipodal,
    apply_registration,
    bcl_gap,
    bubble_scaling_curve,
    build_registration,
    build_shell_mesh,
    comparison_bounds,
    comparison_map,
    critical_exponents,
    default_registration_radius,
    eval_boundary_spec,
    fit_rotation,
    fit_tangent_map,
    harmonic_extension,
    hedgehog,
    homogeneous_extension,
    hkl_extension,
    interpolation_check,
    tangent_field,
    tangent_proxy,
)
from hmlab.utils.constructions import comparison_min_modulus


@pytest.fixture(scope="module")
def level_three_mesh():
    return build_shell_mesh(3, 8)


@pytest.fixture(scope="module")
def coarse_identity(coarse_mesh):
    return eval_boundary_spec(IdentitySpec(), coarse_mesh.sphere)


def shift_map(source, target, tau):
    return RegistrationMap(
        (
            RegistrationEntry(
                source=np.asarray(source, dtype=float),
                target=np.asarray(target, dtype=float),
                theta_target=np.eye(3),
                theta_source=np.eye(3),
                tau=tau,
            ),
        )
    )


class TestComparisonMap:
    def test_identity_data_reproduces_the_hedgehog(self, coarse_mesh, coarse_identity):
        u = hedgehog(coarse_mesh)
        w = comparison_map(u, coarse_identity, 0.5)
        np.testing.assert_allclose(w.values, u.values, atol=1e-12)
        np.testing.assert_array_equal(
            w.values[coarse_mesh.boundary_vertex_ids], coarse_identity.values
        )

    def test_trace_is_the_identity(self, coarse_mesh):
        psi = eval_boundary_spec(RotationSpec(axis=(0.0, 0.0, 1.0), angle=0.3), coarse_mesh.sphere)
        w = comparison_map(homogeneous_extension(psi, coarse_mesh), psi, 0.5)
        np.testing.assert_array_equal(
            w.values[coarse_mesh.boundary_vertex_ids], coarse_mesh.sphere.vertices
        )
        ring = coarse_mesh.shell_vertex_ids(4)
        np.testing.assert_allclose(w.values[ring], psi.values, atol=1e-12)
        inner = coarse_mesh.shell_vertex_ids(3)
        np.testing.assert_allclose(w.values[inner], psi.values, atol=1e-12)
        assert np.all(np.abs(np.linalg.norm(w.values, axis=1) - 1.0) < 1e-10)

    def test_competitor_for_identity_data_costs_at_least_eight_pi(self, fine_mesh):
        psi = eval_boundary_spec(RotationSpec(axis=(0.0, 0.0, 1.0), angle=0.3), fine_mesh.sphere)
        w = comparison_map(homogeneous_extension(psi, fine_mesh), psi, 0.5)
        gap = bcl_gap(w)
        assert gap.energy_gap >= -0.05 * EIGHT_PI
        assert gap.a_norm <= 2.0 * fine_mesh.mesh_size_h

    def test_modulus_stays_away_from_zero(self, coarse_mesh):
        theta = 0.5
        psi = eval_boundary_spec(RotationSpec(axis=(0.0, 0.0, 1.0), angle=theta), coarse_mesh.sphere)
        assert comparison_min_modulus(psi, coarse_mesh, 0.5) >= 1.0 - 2.0 * math.sin(theta / 2.0) - 1e-12

    def test_antipodal_data_cannot_be_joined(self, coarse_mesh, coarse_identity):
        with pytest.raises(ConstructionError):
            comparison_map(hedgehog(coarse_mesh), antipodal(coarse_identity), 0.5)

    def test_rho_must_be_a_shell_radius(self, coarse_mesh, coarse_identity):
        with pytest.raises(ParameterError):
            comparison_map(hedgehog(coarse_mesh), coarse_identity, 0.3)
        with pytest.raises(ParameterError):
            comparison_map(hedgehog(coarse_mesh), coarse_identity, 1.0)


class TestComparisonBounds:
    def test_zero_perturbation(self):
        bounds = comparison_bounds(EIGHT_PI, 0.0, 2.0, 0.5, 0.2, 0.0)
        assert bounds.shrunk == pytest.approx(0.5 * EIGHT_PI + 1.2 * EIGHT_PI * 0.5)
        assert bounds.relaxed == pytest.approx(EIGHT_PI + EIGHT_PI * 0.5 * 0.2)

    def test_delta_term(self):
        bounds = comparison_bounds(EIGHT_PI, 0.1, 2.0, 0.5, 1.0, 0.0)
        assert bounds.c6 == pytest.approx(4.0 / 3.0)
        tail = bounds.c6 * 2.0 * 0.01
        assert bounds.relaxed == pytest.approx(EIGHT_PI + EIGHT_PI * 0.5 + tail)

    def test_argument_checks(self):
        with pytest.raises(ParameterError):
            comparison_bounds(EIGHT_PI, 0.1, 2.0, 1.0, 0.5, 0.0)
        with pytest.raises(ParameterError):
            comparison_bounds(EIGHT_PI, 0.1, 2.0, 0.5, 0.5, 1.0)
        with pytest.raises(ParameterError):
            comparison_bounds(EIGHT_PI, 0.1, 1.0, 0.5, 0.5, 0.0)


class TestHKLExtension:
    def test_harmonic_extension_of_identity_is_linear(self, coarse_mesh, coarse_identity):
        h = harmonic_extension(coarse_identity, coarse_mesh)
        np.testing.assert_allclose(h, coarse_mesh.vertices, atol=1e-10)

    def test_constant_data(self, coarse_mesh):
        g = eval_boundary_spec(ConstantSpec(vector=(1.0, 0.0, 0.0)), coarse_mesh.sphere)
        result = hkl_extension(g, coarse_mesh)
        assert result.c_star == 0.0
        assert result.energy == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(result.field.values[0], [1.0, 0.0, 0.0], atol=1e-12)

    def test_identity_data(self, coarse_mesh, coarse_identity):
        result = hkl_extension(coarse_identity, coarse_mesh)
        assert 0.0 < result.c_star < HKL_CONSTANT
        np.testing.assert_allclose(
            result.field.values[coarse_mesh.boundary_vertex_ids], coarse_identity.values, atol=1e-10
        )
        assert abs(result.identity_gap) < 0.05
        assert result.boundary_energy == pytest.approx(EIGHT_PI, rel=0.05)

    def test_sigma_scales_the_energy(self, coarse_mesh, coarse_identity):
        one = hkl_extension(coarse_identity, coarse_mesh, sigma=1.0)
        two = hkl_extension(coarse_identity, coarse_mesh, sigma=2.0)
        assert two.energy == pytest.approx(2.0 * one.energy, rel=1e-12)
        assert two.c_star == pytest.approx(2.0 * one.c_star, rel=1e-12)

    @pytest.mark.parametrize(
        "spec",
        [
            IdentitySpec(),
            RotationSpec(axis=(1.0, 0.0, 0.0), angle=1.0),
            CapTwistSpec(radius=0.5, angle=math.pi / 4),
            BubbleDipoleSpec(scale=0.5, separation=0.2),
            CompositionSpec(
                members=[
                    RotationSpec(axis=(0.0, 1.0, 0.0), angle=0.5),
                    CapTwistSpec(radius=0.8, angle=0.6),
                ]
            ),
        ],
        ids=["identity", "rotation", "cap_twist", "bubble_dipole", "composition"],
    )
    def test_constant_stays_below_the_bound(self, level_three_mesh, spec):
        g = eval_boundary_spec(spec, level_three_mesh.sphere)
        result = hkl_extension(g, level_three_mesh)
        assert 0.0 < result.c_star <= HKL_CONSTANT
        np.testing.assert_allclose(
            result.field.values[level_three_mesh.boundary_vertex_ids], g.values, atol=1e-10
        )

    def test_argument_checks(self, coarse_mesh, coarse_identity):
        with pytest.raises(ParameterError):
            hkl_extension(coarse_identity, coarse_mesh, samples=4)
        with pytest.raises(ParameterError):
            hkl_extension(coarse_identity, coarse_mesh, sigma=0.0)


class TestTangentFit:
    def test_hedgehog_rotation_is_identity(self, coarse_mesh):
        theta = fit_rotation(hedgehog(coarse_mesh), np.zeros(3))
        np.testing.assert_allclose(theta, np.eye(3), atol=1e-10)

    def test_rotated_hedgehog(self, coarse_mesh):
        turn = Rotation.from_rotvec([0.2, -0.5, 0.3]).as_matrix()
        theta = fit_rotation(hedgehog(coarse_mesh).rotated(turn), np.zeros(3))
        np.testing.assert_allclose(theta, turn, atol=1e-10)
        np.testing.assert_allclose(theta.T @ theta, np.eye(3), atol=1e-12)

    def test_reflection_is_allowed(self, coarse_mesh):
        flip = np.diag([1.0, -1.0, 1.0])
        theta = fit_rotation(hedgehog(coarse_mesh).rotated(flip), np.zeros(3))
        np.testing.assert_allclose(theta, flip, atol=1e-10)

    def test_constant_field_is_degenerate(self, coarse_mesh):
        u = SphereField(coarse_mesh, np.tile([0.0, 0.0, 1.0], (coarse_mesh.n_vertices, 1)))
        with pytest.raises(AlignmentError):
            fit_rotation(u, np.zeros(3))

    def test_annulus_checks(self, coarse_mesh):
        with pytest.raises(ParameterError):
            fit_rotation(hedgehog(coarse_mesh), np.zeros(3), annulus=(0.5, 0.2))

    def test_refines_an_offset_centre(self, coarse_mesh):
        a = np.array([0.1, 0.0, 0.0])
        turn = Rotation.from_rotvec([0.0, 0.0, 0.2]).as_matrix()
        u = tangent_field(coarse_mesh, a, turn)
        fit = fit_tangent_map(u, np.zeros(3))
        np.testing.assert_allclose(fit.center, a, atol=1e-4)
        np.testing.assert_allclose(fit.rotation, turn, atol=1e-4)
        assert fit.rms < 1e-4

    def test_tangent_proxy_of_hedgehog(self, coarse_mesh):
        assert tangent_proxy(hedgehog(coarse_mesh)) == pytest.approx(0.0, abs=1e-12)
        turn = Rotation.from_rotvec([0.0, 0.0, 0.2]).as_matrix()
        assert tangent_proxy(hedgehog(coarse_mesh).rotated(turn)) > 0.0


class TestRegistration:
    def test_empty_map_is_identity(self, coarse_mesh, rng):
        points = 0.5 * rng.normal(size=(20, 3)) / 3.0
        eta = RegistrationMap()
        np.testing.assert_array_equal(eta(points), points)
        result = apply_registration(hedgehog(coarse_mesh), eta)
        np.testing.assert_array_equal(result.field.values, hedgehog(coarse_mesh).values)
        assert result.lip_forward == 0.0
        assert result.clamped == 0

    def test_small_shift_is_nearly_isometric(self, coarse_mesh):
        eps, tau = 0.01, 0.4
        eta = shift_map([eps, 0.0, 0.0], [0.0, 0.0, 0.0], tau)
        np.testing.assert_allclose(eta(np.array([[eps, 0.0, 0.0]])), [[0.0, 0.0, 0.0]], atol=1e-15)
        result = apply_registration(hedgehog(coarse_mesh), eta)
        assert 0.0 < result.lip_forward <= 4.0 * eps / tau
        assert result.lip_inverse <= 4.0 * eps / tau
        far = np.linalg.norm(coarse_mesh.vertices, axis=1) >= tau
        np.testing.assert_array_equal(result.field.values[far], hedgehog(coarse_mesh).values[far])

    def test_inverse(self, rng):
        eta = shift_map([0.02, -0.01, 0.0], [0.1, 0.0, 0.0], 0.5)
        points = 0.3 * rng.normal(size=(50, 3)) / 3.0 + np.array([0.1, 0.0, 0.0])
        np.testing.assert_allclose(eta.inverse(eta(points)), points, atol=1e-10)

    def test_rotation_alignment(self):
        turn = Rotation.from_rotvec([0.0, 0.0, 0.3]).as_matrix()
        eta = RegistrationMap(
            (
                RegistrationEntry(
                    source=np.zeros(3),
                    target=np.zeros(3),
                    theta_target=np.eye(3),
                    theta_source=turn,
                    tau=0.5,
                ),
            )
        )
        x = np.array([[0.1, 0.0, 0.0]])
        np.testing.assert_allclose(eta(x), x @ turn.T, atol=1e-15)

    def test_validation(self):
        with pytest.raises(ParameterError):
            shift_map([0.3, 0.0, 0.0], [0.0, 0.0, 0.0], 0.4)
        with pytest.raises(ParameterError):
            shift_map([0.8, 0.0, 0.0], [0.8, 0.0, 0.0], 0.4)
        with pytest.raises(ParameterError):
            build_registration(
                [np.zeros(3), np.array([0.5, 0.0, 0.0])],
                [np.zeros(3), np.array([0.5, 0.0, 0.0])],
                [np.eye(3)] * 2,
                [np.eye(3)] * 2,
                0.01,
                tau=0.3,
            )

    def test_default_radius(self):
        source = np.array([[0.04, 0.0, 0.0]])
        target = np.zeros((1, 3))
        assert default_registration_radius(source, target, 0.05) == pytest.approx(0.2)
        assert default_registration_radius(source, target, 0.2) == pytest.approx(0.4)
        near_edge = np.array([[0.9, 0.0, 0.0]])
        assert default_registration_radius(near_edge + 0.04, near_edge, 0.05) == pytest.approx(0.1)


class TestBubbleScaling:
    scales = (0.2, 0.14, 0.1, 0.07, 0.05)

    @pytest.mark.parametrize(
        "p, expected, tol",
        [(1.5, 1.0 / 3.0, 0.05), (2.0, 0.0, 0.1), (3.0, -1.0 / 3.0, 0.05)],
    )
    def test_slopes(self, p, expected, tol):
        curve = bubble_scaling_curve(p, self.scales, level=7)
        assert curve.excluded == ()
        assert len(curve.scales) == 5
        assert curve.fit.slope == pytest.approx(expected, abs=tol)

    def test_under_resolved_scales_are_excluded(self):
        curve = bubble_scaling_curve(2.0, [0.4, 0.01], level=5)
        assert curve.excluded == (0.01,)
        assert curve.scales == (0.4,)
        assert math.isnan(curve.fit.slope)
        assert curve.rows() == [{"p": 2.0, "lambda": 0.4, "norm": curve.norms[0]}]

    def test_exponent_range(self):
        with pytest.raises(ParameterError):
            bubble_scaling_curve(5.0, [0.4])


class TestInterpolation:
    def test_constant_difference_is_sharp(self, sphere3):
        diff = np.tile([0.3, 0.0, 0.4], (sphere3.n_vertices, 1))
        check = interpolation_check(sphere3, diff, 4.0)
        assert check.holds
        assert check.lhs == pytest.approx(check.rhs, rel=1e-12)

    @pytest.mark.parametrize("q", [3.0, 4.0, 8.0])
    def test_random_differences(self, sphere3, q):
        rng = np.random.default_rng(int(q))
        for _ in range(20):
            diff = rng.normal(size=(sphere3.n_vertices, 3)) * rng.random(sphere3.n_vertices)[:, None]
            assert interpolation_check(sphere3, diff, q).holds

    def test_exponent_range(self, sphere3):
        with pytest.raises(ParameterError):
            interpolation_check(sphere3, np.zeros((sphere3.n_vertices, 3)), 2.0)

    def test_critical_exponents(self):
        assert critical_exponents(4.0) == {"a_norm": 0.25, "holder": 0.125, "theta_dev": 0.125}
        with pytest.raises(ParameterError):
            critical_exponents(2.0)


def test_bcl_gap_of_hedgehog(fine_hedgehog):
    gap = bcl_gap(fine_hedgehog)
    assert gap.a_norm <= 2.0 * fine_hedgehog.mesh.mesh_size_h
    assert abs(gap.energy_gap) < 0.05 * EIGHT_PI


def test_bcl_gap_needs_degree_one(coarse_mesh):
    u = SphereField(coarse_mesh, np.tile([0.0, 0.0, 1.0], (coarse_mesh.n_vertices, 1)))
    with pytest.raises(NotApplicableError):
        bcl_gap(u)


def test_stability_record_properties():
    record = StabilityRecord(
        parameter=0.1,
        delta=0.05,
        a=np.array([0.03, 0.04, 0.0]),
        theta=np.eye(3),
        energy=EIGHT_PI + 0.5,
        holder=0.2,
        tangent_proxy=0.1,
    )
    assert record.a_norm == pytest.approx(0.05)
    assert record.energy_gap == pytest.approx(0.5)
    assert record.theta_dev == 0.0
    data = record.to_dict()
    assert data["control"] is False
    assert data["energy_bound"] is None
    assert data["a"] == [0.03, 0.04, 0.0]
