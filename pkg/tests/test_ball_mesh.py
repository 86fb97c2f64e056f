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

from hmlab.utils import (
    ParameterError,
    build_cap_probe,
    build_shell_mesh,
    build_sphere_mesh,
)
from hmlab.utils.ball_mesh import p1_gradient, signed_volumes

BALL_VOLUME = 4.0 * math.pi / 3.0


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_sphere_counts(level):
    sphere = build_sphere_mesh(level)
    assert sphere.n_vertices == 10 * 4**level + 2
    assert sphere.n_triangles == 20 * 4**level
    assert sphere.euler_characteristic() == 2


def test_sphere_vertices_are_unit(sphere3):
    np.testing.assert_allclose(np.linalg.norm(sphere3.vertices, axis=1), 1.0, atol=1e-12)


def test_sphere_triangles_face_outward(sphere3):
    v, t = sphere3.vertices, sphere3.triangles
    normal = np.cross(v[t[:, 1]] - v[t[:, 0]], v[t[:, 2]] - v[t[:, 0]])
    centroid = v[t].mean(axis=1)
    assert np.all(np.einsum("ij,ij->i", normal, centroid) > 0.0)


def test_sphere_area_converges(sphere3):
    assert sphere3.total_area == pytest.approx(4.0 * math.pi, rel=0.01)
    assert sphere3.vertex_weights.sum() == pytest.approx(sphere3.total_area, rel=1e-12)


def test_sphere_level_out_of_range():
    with pytest.raises(ParameterError):
        build_sphere_mesh(8)
    with pytest.raises(ParameterError):
        build_sphere_mesh(-1)


def test_shell_mesh_counts(tiny_mesh):
    assert tiny_mesh.n_vertices == 85
    assert tiny_mesh.n_tetrahedra == 80 + 3 * 80
    assert tiny_mesh.boundary_vertex_ids.size == 42


def test_shell_mesh_rejects_bad_parameters():
    with pytest.raises(ParameterError):
        build_shell_mesh(0, 4)
    with pytest.raises(ParameterError):
        build_shell_mesh(2, 1)


def test_shell_mesh_is_deterministic():
    a = build_shell_mesh(2, 4)
    b = build_shell_mesh(2, 4)
    assert np.array_equal(a.vertices, b.vertices)
    assert np.array_equal(a.tetrahedra, b.tetrahedra)


def test_tetrahedra_are_positive(coarse_mesh):
    vol = signed_volumes(coarse_mesh.vertices, coarse_mesh.tetrahedra)
    assert np.all(vol > 0.0)
    np.testing.assert_allclose(vol, coarse_mesh.volumes, rtol=1e-12)


def test_boundary_vertices_on_sphere(coarse_mesh):
    radii = np.linalg.norm(coarse_mesh.vertices[coarse_mesh.boundary_vertex_ids], axis=1)
    np.testing.assert_allclose(radii, 1.0, atol=1e-12)


def test_mesh_is_connected(coarse_mesh):
    assert coarse_mesh.is_connected()
    assert coarse_mesh.mesh_size_h > 0.0


def test_volume_close_to_ball():
    mesh = build_shell_mesh(3, 4)
    assert 0.97 <= mesh.volumes.sum() / BALL_VOLUME <= 1.03


def test_volume_error_shrinks_under_refinement():
    coarse = abs(build_shell_mesh(2, 4).volumes.sum() - BALL_VOLUME)
    fine = abs(build_shell_mesh(3, 8).volumes.sum() - BALL_VOLUME)
    assert fine < coarse / 2.0


def test_stiffness_reproduces_affine_energy(coarse_mesh):
    k = coarse_mesh.stiffness
    x = coarse_mesh.vertices
    energy = float(np.einsum("ic,ic->", x, k @ x))
    assert energy == pytest.approx(3.0 * coarse_mesh.volumes.sum(), rel=1e-10)
    np.testing.assert_allclose(k @ np.ones(coarse_mesh.n_vertices), 0.0, atol=1e-10)


def test_interior_coloring_is_proper(coarse_mesh):
    adj = coarse_mesh.adjacency
    covered = np.concatenate(coarse_mesh.interior_coloring)
    assert np.array_equal(np.sort(covered), coarse_mesh.interior_ids)
    for ids in coarse_mesh.interior_coloring:
        block = adj[ids][:, ids]
        assert block.nnz == 0


def test_interpolate_reproduces_affine_fields(coarse_mesh, rng):
    dirs = rng.normal(size=(200, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    points = 0.9 * rng.random(200)[:, None] * dirs
    values = coarse_mesh.vertices @ np.array([[1.0, 2.0, 0.5], [0.0, -1.0, 3.0], [2.0, 0.0, 1.0]])
    expected = points @ np.array([[1.0, 2.0, 0.5], [0.0, -1.0, 3.0], [2.0, 0.0, 1.0]])
    np.testing.assert_allclose(coarse_mesh.interpolate(values, points), expected, atol=1e-10)


def test_locate_rejects_points_outside(coarse_mesh):
    with pytest.raises(ParameterError):
        coarse_mesh.locate(np.array([[0.0, 0.0, 1.5]]))


def test_p1_gradient_of_affine_function(rng):
    points = rng.normal(size=(4, 3))
    g = np.array([0.3, -1.2, 2.0])
    values = points @ g + 0.7
    np.testing.assert_allclose(p1_gradient(points, values), g, atol=1e-10)


def test_p1_gradient_components():
    points = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    values = np.stack([points[:, 0], np.ones(4)], axis=1)
    grad = p1_gradient(points, values)
    np.testing.assert_allclose(grad, [[1.0, 0.0, 0.0], [0.0, 0.0, 0.0]], atol=1e-14)


def test_p1_gradient_degenerate():
    flat = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]], dtype=float)
    with pytest.raises(ParameterError):
        p1_gradient(flat, np.arange(4.0))


def test_cap_probe_shape():
    center = np.array([0.0, 0.6, 0.8])
    verts, _ = build_cap_probe(center, 0.3, rings=8)
    assert verts.shape == (1 + 3 * 8 * 9, 3)
    np.testing.assert_allclose(np.linalg.norm(verts, axis=1), 1.0, atol=1e-12)
    assert np.max(np.arccos(np.clip(verts @ center, -1.0, 1.0))) == pytest.approx(0.3, abs=1e-9)
