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
import numpy as np
import pytest

from hmlab.utils import build_shell_mesh, build_sphere_mesh, hedgehog


@pytest.fixture(scope="session")
def tiny_mesh():
    return build_shell_mesh(1, 2)


@pytest.fixture(scope="session")
def coarse_mesh():
    return build_shell_mesh(2, 8)


@pytest.fixture(scope="session")
def fine_mesh():
    return build_shell_mesh(3, 24)


@pytest.fixture(scope="session")
def sphere3():
    return build_sphere_mesh(3)


@pytest.fixture(scope="session")
def fine_hedgehog(fine_mesh):
    return hedgehog(fine_mesh)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def random_unit(rng):
    def sample(n):
        values = rng.normal(size=(n, 3))
        return values / np.linalg.norm(values, axis=1)[:, None]

    return sample
