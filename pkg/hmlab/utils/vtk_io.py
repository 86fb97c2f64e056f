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
r"""Legacy ASCII VTK files for ball fields.

The title line records the mesh parameters, ``hmlab field s=<level> L=<layers>``,
so a reader can rebuild the exact mesh and check the stored coordinates.
"""

import re
from pathlib import Path
from typing import Union

import numpy as np
from camel.logger import get_logger

from .ball_mesh import build_shell_mesh
from .common import InputError
from .sphere_fields import SphereField

logger = get_logger(__name__)

VTK_TETRA = 10
FLOAT_FORMAT = "%.17g"
_TITLE = re.compile(r"hmlab field s=(\d+) L=(\d+)")


def write_field(path: Union[str, Path], u: SphereField, name: str = "u") -> Path:
    r"""Write ``u`` as an unstructured grid with point vectors ``name``.

    Args:
        path (Union[str, Path]): Output file.
        u (SphereField): Field to write.
        name (str, optional): Name of the vector array. (default: :obj:`"u"`)

    Returns:
        Path: The written path.
    """
    path = Path(path)
    mesh = u.mesh
    n, t = mesh.n_vertices, mesh.n_tetrahedra
    cells = np.hstack([np.full((t, 1), 4, dtype=np.int64), mesh.tetrahedra])
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write("# vtk DataFile Version 3.0\n")
        f.write(f"hmlab field s={mesh.level} L={mesh.layers}\n")
        f.write("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        f.write(f"POINTS {n} double\n")
        np.savetxt(f, mesh.vertices, fmt=FLOAT_FORMAT)
        f.write(f"CELLS {t} {5 * t}\n")
        np.savetxt(f, cells, fmt="%d")
        f.write(f"CELL_TYPES {t}\n")
        np.savetxt(f, np.full(t, VTK_TETRA), fmt="%d")
        f.write(f"POINT_DATA {n}\nVECTORS {name} double\n")
        np.savetxt(f, u.values, fmt=FLOAT_FORMAT)
    logger.info(f"Wrote field '{name}' with {n} points to {path}")
    return path


def _section(lines, keyword: str) -> int:
    for k, line in enumerate(lines):
        if line.startswith(keyword):
            return k
    raise InputError(f"VTK file has no {keyword} section")


def read_field(path: Union[str, Path]) -> SphereField:
    r"""Read a field written by :func:`write_field` and rebuild its mesh."""
    path = Path(path)
    try:
        lines = path.read_text(encoding="ascii").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise InputError(f"cannot read field file {path}: {e}") from e
    if len(lines) < 2 or not lines[0].startswith("# vtk DataFile"):
        raise InputError(f"{path} is not a legacy VTK file")
    match = _TITLE.match(lines[1].strip())
    if match is None:
        raise InputError(f"{path}: title line does not record the mesh parameters")
    mesh = build_shell_mesh(int(match.group(1)), int(match.group(2)))
    n = mesh.n_vertices

    start = _section(lines, "POINTS")
    if int(lines[start].split()[1]) != n:
        raise InputError(f"{path}: point count does not match the mesh (expected {n})")
    try:
        points = np.loadtxt(lines[start + 1 : start + 1 + n], dtype=float, ndmin=2)
        vec = _section(lines, "VECTORS")
        values = np.loadtxt(lines[vec + 1 : vec + 1 + n], dtype=float, ndmin=2)
    except ValueError as e:
        raise InputError(f"{path}: malformed numeric data ({e})") from e
    if points.shape != (n, 3) or not np.allclose(points, mesh.vertices, rtol=0.0, atol=1e-12):
        raise InputError(f"{path}: point coordinates do not match the rebuilt mesh")
    return SphereField(mesh, values)
