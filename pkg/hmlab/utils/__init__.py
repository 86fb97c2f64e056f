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

from .common import (
    E3,
    EIGHT_PI,
    FOUR_PI,
    HKL_CONSTANT,
    AlignmentError,
    ConstructionError,
    HmlabError,
    InputError,
    MeshMismatchError,
    NotApplicableError,
    ParameterError,
    ResolutionError,
    SlopeFit,
    fit_loglog_slope,
)
from .ball_mesh import (
    ShellMesh,
    SphereMesh,
    build_cap_probe,
    build_shell_mesh,
    build_sphere_mesh,
)
from .sphere_fields import (
    BoundaryField,
    BoundarySpec,
    BubbleDipoleSpec,
    CapTwistSpec,
    CompositionSpec,
    ConstantSpec,
    IdentitySpec,
    RotationSpec,
    SphereField,
    eval_boundary_spec,
    holder_distance,
    linf_distance,
    parse_boundary_spec,
    w1p_distance,
    w1p_parts,
)
from .energy import (
    EnergyProfile,
    boundary_dirichlet_energy,
    dirichlet_energy,
    energy_split,
    monotonicity_profile,
    radial_term,
    rescaled_energy,
)
from .minimizer import (
    BoundCheck,
    SolveOptions,
    SolveReport,
    energy_upper_bound_check,
    hedgehog,
    homogeneous_extension,
    minimize,
)
from .topology import (
    DegreeResult,
    SingularPoint,
    SingularSet,
    antipodal,
    degree,
    detect_singularities,
    local_degree,
)
from .constructions import (
    BCLGap,
    BubbleScaling,
    ComparisonBounds,
    HKLExtension,
    InterpolationCheck,
    RegistrationEntry,
    RegistrationMap,
    RegistrationResult,
    StabilityRecord,
    TangentFit,
    apply_registration,
    bcl_gap,
    bubble_scaling_curve,
    build_registration,
    comparison_bounds,
    comparison_map,
    critical_exponents,
    default_registration_radius,
    fit_rotation,
    fit_tangent_map,
    harmonic_extension,
    hkl_extension,
    interpolation_check,
    tangent_proxy,
)
from .stability import MeshConfig, StabilityBenchmark, SweepConfig, tangent_field
from .vtk_io import read_field, write_field

__all__ = [
    "E3",
    "EIGHT_PI",
    "FOUR_PI",
    "HKL_CONSTANT",
    "AlignmentError",
    "ConstructionError",
    "HmlabError",
    "InputError",
    "MeshMismatchError",
    "NotApplicableError",
    "ParameterError",
    "ResolutionError",
    "SlopeFit",
    "fit_loglog_slope",
    "ShellMesh",
    "SphereMesh",
    "build_cap_probe",
    "build_shell_mesh",
    "build_sphere_mesh",
    "BoundaryField",
    "BoundarySpec",
    "BubbleDipoleSpec",
    "CapTwistSpec",
    "CompositionSpec",
    "ConstantSpec",
    "IdentitySpec",
    "RotationSpec",
    "SphereField",
    "eval_boundary_spec",
    "holder_distance",
    "linf_distance",
    "parse_boundary_spec",
    "w1p_distance",
    "w1p_parts",
    "EnergyProfile",
    "boundary_dirichlet_energy",
    "dirichlet_energy",
    "energy_split",
    "monotonicity_profile",
    "radial_term",
    "rescaled_energy",
    "BoundCheck",
    "SolveOptions",
    "SolveReport",
    "energy_upper_bound_check",
    "hedgehog",
    "homogeneous_extension",
    "minimize",
    "DegreeResult",
    "SingularPoint",
    "SingularSet",
    "antipodal",
    "degree",
    "detect_singularities",
    "local_degree",
    "BCLGap",
    "BubbleScaling",
    "ComparisonBounds",
    "HKLExtension",
    "InterpolationCheck",
    "RegistrationEntry",
    "RegistrationMap",
    "RegistrationResult",
    "StabilityRecord",
    "TangentFit",
    "apply_registration",
    "bcl_gap",
    "bubble_scaling_curve",
    "build_registration",
    "comparison_bounds",
    "comparison_map",
    "critical_exponents",
    "default_registration_radius",
    "fit_rotation",
    "fit_tangent_map",
    "harmonic_extension",
    "hkl_extension",
    "interpolation_check",
    "tangent_proxy",
    "MeshConfig",
    "StabilityBenchmark",
    "SweepConfig",
    "tangent_field",
    "read_field",
    "write_field",
]
