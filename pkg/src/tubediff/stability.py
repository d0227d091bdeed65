"""Explicit-Euler stability screening for the spatial operators.

Two per-node criteria are applied.  The diffusive bound keeps the
update's own-node coefficient non-negative:

    alpha * beta <= 1,   alpha = 2 D dt / sum(dx_j),   beta = sum(1/dx_j)

with the sums running over the edges incident to the node.  The
advection bound tracks the most oscillatory grid mode through the
upwind stencils: with A_k = dt * coef * w_k for stencil weights w_k,
the mode multiplier is

    rho(pi) = 1 + A_0 - A_1 + A_2        (sign alternating with k)

and a node passes when |rho(pi)| <= 1.  Models that carry a mass
factor m(x) on the time derivative are screened with the effective
step dt / m(x).

Both bounds also yield the largest admissible step; reports keep the
per-node outcomes so a failing mesh pinpoints its binding node.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .discretize import laplacian_parts, local_spacings, third_derivative_parts, wind_stencils
from .models import (
    ModelKind,
    ModelSpec,
    diffusion_coefficient,
    effj_mass_factor,
    kalinay_mass_factors,
)
from .network import NetworkMesh, central_slopes

# float slack so a bound sitting exactly at 1 still passes
TOLERANCE = 1e-12

_XI_SAMPLES = 65


@dataclass
class StabilityReport:
    """Outcome of a stability screen at one candidate time step."""

    dt: float
    dt_max: float
    passed: bool
    binding_node: int
    alpha_beta: float
    advection_rho: float
    node_pass: dict[int, bool] = field(default_factory=dict)
    warnings: tuple[str, ...] = ()

    @property
    def failing_nodes(self) -> list[int]:
        return [i for i, ok in self.node_pass.items() if not ok]

    def as_table(self) -> str:
        head = (
            f"dt={self.dt:.6g}  dt_max={self.dt_max:.6g}  "
            f"alpha*beta={self.alpha_beta:.6g}  |rho(pi)|={self.advection_rho:.6g}  "
            f"{'PASS' if self.passed else 'FAIL'}"
        )
        lines = [head, f"binding node: {self.binding_node}"]
        bad = self.failing_nodes
        if bad:
            lines.append("failing nodes: " + ", ".join(str(i) for i in bad))
        for w in self.warnings:
            lines.append(f"warning: {w}")
        return "\n".join(lines)


def _edge_sums(mesh: NetworkMesh) -> tuple[np.ndarray, np.ndarray]:
    """Per-node sum of incident edge lengths and of their reciprocals."""
    sum_dx = np.zeros(mesh.n_nodes)
    sum_inv = np.zeros(mesh.n_nodes)
    for i in range(mesh.n_nodes):
        for _, dx in mesh.neighbors(i):
            sum_dx[i] += dx
            sum_inv[i] += 1.0 / dx
    return sum_dx, sum_inv


def _model_fields(mesh: NetworkMesh, profile, spec: ModelSpec):
    """Per-node diffusivity and mass factor for one model variant."""
    radii = profile.radii(mesh)
    slopes = central_slopes(radii, mesh)
    n = mesh.n_nodes
    mass = np.ones(n)
    if spec.kind is ModelKind.SIMPLE_DIFFUSION:
        diff = np.full(n, spec.d0)
        return radii, np.zeros(n), diff, mass
    diff = np.array([diffusion_coefficient(spec, s) for s in slopes])
    if spec.kind is ModelKind.KALINAY_TEMPORAL:
        mass = kalinay_mass_factors(mesh, profile, spec.epsilon)
    elif spec.kind is ModelKind.EXPANDED_FLUX:
        dx = local_spacings(mesh)
        mass = np.array(
            [effj_mass_factor(dx[i], radii[i], slopes[i]) for i in range(n)]
        )
        # the grid-scaled term raises the effective second-derivative
        # coefficient, so screen with it included
        diff = diff * (1.0 + dx * dx * slopes * slopes / (4.0 * radii * radii))
    return radii, slopes, diff, mass


def check_diffusion(mesh: NetworkMesh, dt: float, d0: float = 1.0) -> StabilityReport:
    """Diffusive positivity bound alone, at constant diffusivity d0."""
    if dt <= 0.0:
        raise ValueError("time step must be positive")
    if d0 <= 0.0:
        raise ValueError("diffusivity must be positive")
    sum_dx, sum_inv = _edge_sums(mesh)
    rate = 2.0 * d0 * sum_inv / sum_dx          # alpha*beta per unit dt
    dt_max = 1.0 / rate
    worst = int(np.argmin(dt_max))
    ab = dt * rate
    node_pass = {
        mesh.node_ids[i]: bool(ab[i] <= 1.0 + TOLERANCE)
        for i in range(mesh.n_nodes)
    }
    return StabilityReport(
        dt=dt,
        dt_max=float(dt_max[worst]),
        passed=all(node_pass.values()),
        binding_node=int(mesh.node_ids[worst]),
        alpha_beta=float(ab.max()),
        advection_rho=1.0,
        node_pass=node_pass,
    )


def diffusion_dt_max(mesh: NetworkMesh, d0: float = 1.0) -> float:
    """Largest step passing the diffusive bound (uniform grid: h^2 / 2 d0)."""
    sum_dx, sum_inv = _edge_sums(mesh)
    return float(np.min(sum_dx / (2.0 * d0 * sum_inv)))


def _advection_entries(mesh, radii, slopes, diff):
    """Per-node list of (coef, weights) pairs for the upwind stencils."""
    stencils, notes = wind_stencils(mesh, radii, slopes)
    per_node: dict[int, list[tuple[float, tuple[float, ...]]]] = {}
    for st in stencils:
        coef = diff[st.node] * (2.0 / radii[st.node]) * st.radius_slope
        per_node.setdefault(st.node, []).append((coef, st.weights))
    return per_node, tuple(notes)


def _advection_screen(mesh, radii, slopes, diff, mass, dt):
    """Per-node pi-mode data: (|rho(pi)|, dt bound, pass flag, warnings)."""
    per_node, notes = _advection_entries(mesh, radii, slopes, diff)
    warnings = list(notes)
    growing: list[tuple[int, float]] = []
    n = mesh.n_nodes
    rho_pi = np.ones(n)
    dt_max = np.full(n, math.inf)
    node_pass = {int(mesh.node_ids[i]): True for i in range(n)}
    xi = np.linspace(0.0, math.pi, _XI_SAMPLES)

    for i, entries in per_node.items():
        q = sum(
            coef * sum((-1.0) ** k * w for k, w in enumerate(weights))
            for coef, weights in entries
        )
        rho_pi[i] = 1.0 + dt * q / mass[i]
        if q < 0.0:
            dt_max[i] = 2.0 * mass[i] / (-q)
        elif q > 0.0:
            dt_max[i] = 0.0
            warnings.append(f"downwind-amplification node={mesh.node_ids[i]}")
        node_pass[int(mesh.node_ids[i])] = bool(abs(rho_pi[i]) <= 1.0 + TOLERANCE)

        symbol = np.ones_like(xi, dtype=complex)
        for coef, weights in entries:
            for k, w in enumerate(weights):
                symbol += (dt / mass[i]) * coef * w * np.exp(1j * k * xi)
        peak = float(np.abs(symbol).max())
        if peak > 1.0 + TOLERANCE and abs(rho_pi[i]) <= 1.0 + TOLERANCE:
            growing.append((int(mesh.node_ids[i]), peak))
    if growing:
        worst_node, worst_peak = max(growing, key=lambda pair: pair[1])
        warnings.append(
            f"mode-growth at {len(growing)} node(s) "
            f"(worst node={worst_node}, max|rho|-1={worst_peak - 1.0:.3g})"
        )
    return rho_pi, dt_max, node_pass, warnings


def check_advection(
    mesh: NetworkMesh, profile, spec: ModelSpec, dt: float
) -> StabilityReport:
    """Pi-mode amplification bound for the upwind advection rows alone."""
    if dt <= 0.0:
        raise ValueError("time step must be positive")
    radii, slopes, diff, mass = _model_fields(mesh, profile, spec)
    rho_pi, dt_max, node_pass, warnings = _advection_screen(
        mesh, radii, slopes, diff, mass, dt
    )
    worst = int(np.argmin(dt_max))
    return StabilityReport(
        dt=dt,
        dt_max=float(dt_max[worst]),
        passed=all(node_pass.values()),
        binding_node=int(mesh.node_ids[worst]),
        alpha_beta=0.0,
        advection_rho=float(np.abs(rho_pi).max()),
        node_pass=node_pass,
        warnings=tuple(warnings),
    )


def check_model(
    mesh: NetworkMesh, profile, spec: ModelSpec, dt: float
) -> StabilityReport:
    """Combined screen: diffusive bound and advection bound per node."""
    if dt <= 0.0:
        raise ValueError("time step must be positive")
    radii, slopes, diff, mass = _model_fields(mesh, profile, spec)
    sum_dx, sum_inv = _edge_sums(mesh)
    rate = 2.0 * diff * sum_inv / sum_dx
    ab = dt * rate / mass
    dt_max = mass / rate

    n = mesh.n_nodes
    node_pass = {
        int(mesh.node_ids[i]): bool(ab[i] <= 1.0 + TOLERANCE) for i in range(n)
    }
    warnings: list[str] = []
    rho_max = 1.0

    if spec.kind is not ModelKind.SIMPLE_DIFFUSION:
        rho_pi, adv_dt, adv_pass, adv_warn = _advection_screen(
            mesh, radii, slopes, diff, mass, dt
        )
        warnings.extend(adv_warn)
        rho_max = float(np.abs(rho_pi).max())
        for node_id, ok in adv_pass.items():
            node_pass[node_id] = node_pass[node_id] and ok
        dt_max = np.minimum(dt_max, adv_dt)

    if spec.kind is ModelKind.EXPANDED_FLUX:
        dx = local_spacings(mesh)
        lap_m, _ = laplacian_parts(mesh)
        thr_m, _, _ = third_derivative_parts(mesh)
        k1 = dx * dx * slopes * slopes / (4.0 * radii * radii)
        k2 = dx * dx * slopes / (4.0 * radii)
        lap_rows = np.abs((1.0 + k1)[:, None] * lap_m.toarray()).sum(axis=1)
        thr_rows = np.abs(k2[:, None] * thr_m.toarray()).sum(axis=1)
        for i in range(n):
            if thr_rows[i] > lap_rows[i]:
                warnings.append(
                    f"expansion-dominates-diffusion node={mesh.node_ids[i]}"
                )

    worst = int(np.argmin(dt_max))
    return StabilityReport(
        dt=dt,
        dt_max=float(dt_max[worst]),
        passed=all(node_pass.values()),
        binding_node=int(mesh.node_ids[worst]),
        alpha_beta=float(ab.max()),
        advection_rho=rho_max,
        node_pass=node_pass,
        warnings=tuple(warnings),
    )
