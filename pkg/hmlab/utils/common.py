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
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats
from camel.logger import get_logger

logger = get_logger(__name__)

EIGHT_PI = 8.0 * math.pi
FOUR_PI = 4.0 * math.pi
# Extension constant of the boundary-regularity argument.
HKL_CONSTANT = 128.0 * math.pi**1.5
HOLDER_SEED = 0x5EED
E3 = np.array([0.0, 0.0, 1.0])


class HmlabError(Exception):
    r"""Base class of all errors raised by the laboratory."""


class ParameterError(HmlabError, ValueError):
    r"""A parameter is outside the documented range of an operation."""


class MeshMismatchError(ParameterError):
    r"""Two objects were sampled on different meshes."""


class InputError(ParameterError):
    r"""Field data is malformed, e.g. not unit-norm."""


class ResolutionError(HmlabError, ValueError):
    r"""A radius or scale is below what the mesh resolves."""


class ConstructionError(HmlabError, RuntimeError):
    r"""An explicit construction could not be carried out."""


class AlignmentError(HmlabError, RuntimeError):
    r"""Rotation fitting received a rank-deficient correlation."""


class NotApplicableError(HmlabError):
    r"""A diagnostic does not apply to the given field."""


def smooth_step(t: np.ndarray) -> np.ndarray:
    r"""C¹ cutoff ``1 - 3t² + 2t³`` on ``[0, 1]``; 1 below 0, 0 above 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    return 1.0 - 3.0 * t**2 + 2.0 * t**3


def normalize_rows(
    values: np.ndarray, fallback: Optional[np.ndarray] = None, eps: float = 1e-14
) -> np.ndarray:
    r"""Normalize each row of an ``(n, 3)`` array.

    Args:
        values (np.ndarray): Rows to normalize.
        fallback (np.ndarray, optional): Unit vector used for rows whose norm
            is below ``eps``. If omitted, such rows raise.
            (default: :obj:`None`)
        eps (float, optional): Norm below which a row counts as zero.
            (default: :obj:`1e-14`)

    Returns:
        np.ndarray: Unit rows.
    """
    values = np.asarray(values, dtype=float)
    norms = np.linalg.norm(values, axis=-1)
    small = norms < eps
    if np.any(small):
        if fallback is None:
            raise ConstructionError(
                f"cannot normalize {int(small.sum())} zero vector(s)"
            )
        values = values.copy()
        values[small] = fallback
        norms = np.where(small, 1.0, norms)
    return values / norms[..., None]


def check_unit_rows(values: np.ndarray, tol: float, what: str) -> None:
    r"""Raise :class:`InputError` unless every row has norm 1 within ``tol``."""
    norms = np.linalg.norm(values, axis=1)
    bad = np.abs(norms - 1.0) > tol
    if np.any(bad):
        first = int(np.flatnonzero(bad)[0])
        raise InputError(
            f"{what}: {int(bad.sum())} value(s) are not unit vectors "
            f"(first at index {first}, norm {norms[first]:.3e})"
        )


def is_orthogonal(matrix: np.ndarray, tol: float = 1e-12) -> bool:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.shape != (3, 3):
        return False
    return bool(np.max(np.abs(matrix.T @ matrix - np.eye(3))) <= tol)


@dataclass(frozen=True)
class SlopeFit:
    r"""Least-squares slope of ``log y`` against ``log x``.

    Args:
        slope (float): Fitted slope.
        intercept (float): Fitted intercept (log scale).
        stderr (float): Standard error of the slope.
        ci_low (float): Lower end of the 95% confidence interval.
        ci_high (float): Upper end of the 95% confidence interval.
        n (int): Number of points used.
    """

    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    n: int

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "ci95": [self.ci_low, self.ci_high],
            "n": self.n,
        }


def fit_loglog_slope(x: Sequence[float], y: Sequence[float]) -> SlopeFit:
    r"""Fit ``log y = slope * log x + intercept`` over the positive pairs.

    Pairs with a nonpositive coordinate are skipped. Fewer than two usable
    points give a fit full of NaNs rather than an error, so that sweeps with
    degenerate ladders can still be reported.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    keep = (x > 0) & (y > 0) & np.isfinite(x) & np.isfinite(y)
    n = int(keep.sum())
    if n < 2:
        logger.warning(f"Slope fit needs two positive points, got {n}")
        nan = float("nan")
        return SlopeFit(nan, nan, nan, nan, nan, n)
    lx, ly = np.log(x[keep]), np.log(y[keep])
    if np.ptp(lx) == 0.0:
        logger.warning(f"Slope fit needs two distinct x values, got {n} equal ones")
        nan = float("nan")
        return SlopeFit(nan, nan, nan, nan, nan, n)
    if n == 2:
        slope = float((ly[1] - ly[0]) / (lx[1] - lx[0]))
        intercept = float(ly[0] - slope * lx[0])
        nan = float("nan")
        return SlopeFit(slope, intercept, nan, nan, nan, n)
    fit = stats.linregress(lx, ly)
    half = float(stats.t.ppf(0.975, n - 2) * fit.stderr)
    return SlopeFit(
        float(fit.slope),
        float(fit.intercept),
        float(fit.stderr),
        float(fit.slope) - half,
        float(fit.slope) + half,
        n,
    )
