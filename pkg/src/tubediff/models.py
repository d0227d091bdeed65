"""Model variants for reduced-order diffusion in a varying-radius tube.

Everything here is a pure coefficient function of the local radius slope;
the spatial wiring lives in :mod:`tubediff.discretize`.  The menu:

* ``SIMPLE_DIFFUSION`` ignores the radius entirely.
* ``FICK_JACOBS`` adds the radial advection term with a constant
  diffusion coefficient.
* ``ZWANZIG``, ``REGUERA_RUBI`` and ``KALINAY_PERCUS`` reuse the
  Fick-Jacobs operator with a slope-dependent diffusion coefficient.
* ``KALINAY_TEMPORAL`` keeps the Fick-Jacobs operator and rescales the
  time derivative by 1 + g'(x).
* ``EXPANDED_FLUX`` augments Fick-Jacobs with grid-scaled second-order
  flux terms and its own time-derivative factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from tubediff.network import MeshError, NetworkMesh, central_slopes


class ModelKind(Enum):
    SIMPLE_DIFFUSION = "simple-diffusion"
    FICK_JACOBS = "fick-jacobs"
    ZWANZIG = "zwanzig"
    REGUERA_RUBI = "reguera-rubi"
    KALINAY_PERCUS = "kalinay-percus"
    KALINAY_TEMPORAL = "kalinay-temporal"
    EXPANDED_FLUX = "expanded-flux"


MODEL_NAMES = {kind.value: kind for kind in ModelKind}

# Below this the arctan-based coefficients switch to their Taylor series
# to avoid 0/0; the truncation error there is ~1e-25, far below round-off.
_SERIES_CUTOFF = 1e-6


@dataclass(frozen=True)
class ModelSpec:
    """Which model to run plus its physical constants."""

    kind: ModelKind
    d0: float = 1.0
    epsilon: float = 1.0

    def __post_init__(self):
        if not self.d0 > 0.0:
            raise ValueError(f"d0 must be positive, got {self.d0}")
        if not self.epsilon > 0.0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")

    @classmethod
    def from_name(cls, name: str, d0: float = 1.0, epsilon: float = 1.0) -> "ModelSpec":
        try:
            kind = MODEL_NAMES[name]
        except KeyError:
            known = ", ".join(sorted(MODEL_NAMES))
            raise ValueError(f"unknown model {name!r}; choose one of: {known}") from None
        return cls(kind, d0=d0, epsilon=epsilon)


def _arctan_over(u: float) -> float:
    """arctan(u)/u, continued through u = 0."""
    if abs(u) < _SERIES_CUTOFF:
        u2 = u * u
        return 1.0 - u2 / 3.0 + u2 * u2 / 5.0
    return math.atan(u) / u


def diffusion_coefficient(spec: ModelSpec, slope: float) -> float:
    """Effective diffusion coefficient for a given local radius slope.

    Only the Zwanzig, Reguera-Rubi and Kalinay-Percus variants actually
    depend on the slope; every other model runs with ``spec.d0``.
    """
    s = float(slope)
    if spec.kind is ModelKind.ZWANZIG:
        return spec.d0 / (1.0 + s * s / 2.0)
    if spec.kind is ModelKind.REGUERA_RUBI:
        return spec.d0 / (1.0 + s * s / 4.0) ** (1.0 / 3.0)
    if spec.kind is ModelKind.KALINAY_PERCUS:
        return spec.d0 * _arctan_over(s / 2.0)
    return spec.d0


def diffusion_coefficients(spec: ModelSpec, slopes: np.ndarray) -> np.ndarray:
    return np.array([diffusion_coefficient(spec, s) for s in np.asarray(slopes)])


def kalinay_g(x: float, slope: float, epsilon: float = 1.0) -> float:
    """Spatial weight whose derivative rescales the time term.

    g(x) = (x/2) * (arctan(u)/u + (u/3) arctan(u) - 1) with
    u = sqrt(epsilon) * slope.  The bracket vanishes like u**4/ (45/4)
    at small slopes, so a series branch keeps it smooth through zero.
    """
    u = math.sqrt(epsilon) * float(slope)
    if abs(u) < _SERIES_CUTOFF:
        bracket = (4.0 / 45.0) * u ** 4
    else:
        at = math.atan(u)
        bracket = at / u + (u / 3.0) * at - 1.0
    return 0.5 * float(x) * bracket


def require_channel(mesh: NetworkMesh, what: str) -> None:
    """Reject branched meshes for features defined along a single axis."""
    if mesh.max_degree() > 2:
        raise MeshError(f"{what} is only defined on unbranched channels")


def kalinay_mass_factors(mesh: NetworkMesh, profile, epsilon: float = 1.0) -> np.ndarray:
    """Per-node time-derivative factors 1 + g'(x) for the temporal model.

    g is evaluated at every node from the centrally differenced radius
    slope, then differentiated with the same central rules.  The weight
    depends on the absolute axial coordinate, so node x positions must
    carry it; that also restricts the model to unbranched channels.
    """
    require_channel(mesh, "the temporally corrected model")
    radii = profile.radii(mesh)
    slopes = central_slopes(radii, mesh)
    xs = mesh.positions[:, 0]
    g = np.array([kalinay_g(x, s, epsilon) for x, s in zip(xs, slopes)])
    return 1.0 + central_slopes(g, mesh)


def effj_mass_factor(dx: float, radius: float, slope: float) -> float:
    """Expanded-flux time-derivative factor 1 + dx**2 R'**2 / (12 R**2)."""
    return 1.0 + (dx * dx * slope * slope) / (12.0 * radius * radius)
