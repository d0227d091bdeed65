"""Closed-form transients and the error metrics built on them.

Two channel families admit exact time-dependent solutions of the
classical reduced model and therefore serve as references for every
discretization here.  In a linearly tapered tube a drifting Gaussian
stays exact because the taper contributes nothing beyond the plain heat
flow of the area-weighted field.  In a sinusoidal tube the same holds
after an exponential gain in time that offsets the curvature of the
radius profile.

Both families expose the tube-integrated field G, the concentration
c = G / (pi R^2), its spatial slope (for end conditions), and its time
derivative (for residual checks), all as closed forms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .integrate import BoundaryData, Trajectory, run
from .models import ModelKind, ModelSpec
from .network import (ConeRadius, NetworkMesh, SinusoidRadius, TabulatedRadius,
                      interval_mesh, refine)

# exact values this small (relative to the largest) are excluded from
# relative-error averages
RELATIVE_FLOOR = 1e-12


def _gaussian(x, spread, sigma, center):
    """Heat-kernel factor (sigma^2/2pi)^(1/4) spread^(-1/2) exp(...)."""
    amp = (sigma * sigma / (2.0 * math.pi)) ** 0.25
    return amp / np.sqrt(spread) * np.exp(-((x - center) ** 2) / (4.0 * spread))


@dataclass(frozen=True)
class ConeChannel:
    """Linearly tapered tube R = 1 + taper * x with a Gaussian transient."""

    taper: float
    sigma: float = 4.0
    center: float = 0.0
    x0: float = 0.0
    x1: float = 10.0
    d0: float = 1.0

    def profile(self) -> ConeRadius:
        return ConeRadius(self.taper)

    def mesh(self, n: int) -> NetworkMesh:
        return interval_mesh(self.x0, self.x1, n, self.profile())

    def spread(self, t: float) -> float:
        return self.sigma * self.sigma + self.d0 * t

    def tube_contents(self, x, t: float):
        return (1.0 + self.taper * np.asarray(x)) * _gaussian(
            np.asarray(x), self.spread(t), self.sigma, self.center
        )

    def concentration(self, x, t: float):
        x = np.asarray(x)
        radius = 1.0 + self.taper * x
        return self.tube_contents(x, t) / (math.pi * radius * radius)

    def slope(self, x, t: float):
        """d(concentration)/dx, exact."""
        x = np.asarray(x)
        s = self.spread(t)
        log_slope = -(x - self.center) / (2.0 * s) - self.taper / (1.0 + self.taper * x)
        return self.concentration(x, t) * log_slope

    def time_derivative(self, x, t: float):
        x = np.asarray(x)
        s = self.spread(t)
        shape = (x - self.center) ** 2 / (4.0 * s * s) - 1.0 / (2.0 * s)
        return self.d0 * self.concentration(x, t) * shape


@dataclass(frozen=True)
class SinusoidChannel:
    """Tube R = sin(wavenumber * x) on a margin inside one positive arch."""

    wavenumber: float
    sigma: float = 2.0
    center: float = 1.0
    margin: float = 1.0
    d0: float = 1.0

    @property
    def x0(self) -> float:
        return self.margin

    @property
    def x1(self) -> float:
        return math.pi / self.wavenumber - self.margin

    def profile(self) -> SinusoidRadius:
        return SinusoidRadius(self.wavenumber)

    def mesh(self, n: int) -> NetworkMesh:
        return interval_mesh(self.x0, self.x1, n, self.profile())

    def spread(self, t: float) -> float:
        return self.sigma * self.sigma + self.d0 * t

    def _gain(self, t: float) -> float:
        return math.exp(self.d0 * self.wavenumber * self.wavenumber * t)

    def tube_contents(self, x, t: float):
        x = np.asarray(x)
        return (
            self._gain(t)
            * np.sin(self.wavenumber * x)
            * _gaussian(x, self.spread(t), self.sigma, self.center)
        )

    def concentration(self, x, t: float):
        x = np.asarray(x)
        radius = np.sin(self.wavenumber * x)
        return self.tube_contents(x, t) / (math.pi * radius * radius)

    def slope(self, x, t: float):
        x = np.asarray(x)
        s = self.spread(t)
        w = self.wavenumber
        log_slope = -(x - self.center) / (2.0 * s) - w / np.tan(w * x)
        return self.concentration(x, t) * log_slope

    def time_derivative(self, x, t: float):
        x = np.asarray(x)
        s = self.spread(t)
        w = self.wavenumber
        shape = (x - self.center) ** 2 / (4.0 * s * s) - 1.0 / (2.0 * s) + w * w
        return self.d0 * self.concentration(x, t) * shape


def l1_error(numeric: np.ndarray, exact: np.ndarray) -> float:
    """Mean relative deviation, skipping points where the reference
    is negligibly small."""
    numeric = np.asarray(numeric, dtype=float)
    exact = np.asarray(exact, dtype=float)
    if numeric.shape != exact.shape:
        raise ValueError("arrays must have matching shapes")
    peak = np.max(np.abs(exact))
    if peak == 0.0:
        raise ValueError("reference field is zero everywhere; relative error undefined")
    mask = np.abs(exact) >= RELATIVE_FLOOR * peak
    return float(np.mean(np.abs((exact[mask] - numeric[mask]) / exact[mask])))


def run_channel(
    channel,
    spec: ModelSpec,
    *,
    n: int,
    dt: float,
    t_end: float,
    n_snapshots: int = 2,
    force: bool = False,
) -> Trajectory:
    """March one model on a channel, fed by the exact end slopes."""
    mesh = channel.mesh(n)
    x = mesh.positions[:, 0]
    leaves = [int(mesh.node_ids[i]) for i in mesh.leaf_indices()]
    ends = {node_id: float(x[mesh.index(node_id)]) for node_id in leaves}
    boundary = BoundaryData(
        {
            node_id: (lambda t, xe=xe: float(channel.slope(xe, t)))
            for node_id, xe in ends.items()
        }
    )
    return run(
        mesh,
        channel.profile(),
        spec,
        dt=dt,
        t_end=t_end,
        initial=channel.concentration(x, 0.0),
        boundary=boundary,
        n_snapshots=n_snapshots,
        force=force,
    )


def final_error(traj: Trajectory, channel) -> float:
    """Relative L1 deviation from the exact field at the last snapshot."""
    x = traj.mesh.positions[:, 0]
    exact = channel.concentration(x, float(traj.times[-1]))
    return l1_error(traj.final, exact)


def model_errors(
    channel, specs, *, n: int, dt: float, t_end: float, force: bool = False
) -> dict[str, float]:
    """Final-time error of several models on one channel and grid."""
    out = {}
    for spec in specs:
        traj = run_channel(channel, spec, n=n, dt=dt, t_end=t_end, force=force)
        out[spec.kind.value] = final_error(traj, channel)
    return out


def fitted_slope(spacings, errors) -> float:
    """Least-squares order of accuracy from (h, error) pairs."""
    return float(np.polyfit(np.log(np.asarray(spacings)), np.log(np.asarray(errors)), 1)[0])


@dataclass(frozen=True)
class ConvergenceResult:
    """Error ladder over grids plus its fitted order."""

    ns: tuple[int, ...]
    spacings: tuple[float, ...]
    errors: tuple[float, ...]

    @property
    def slope(self) -> float:
        return fitted_slope(self.spacings, self.errors)

    def tail_slope(self, k: int = 3) -> float:
        """Fitted order over the k finest grids only."""
        return fitted_slope(self.spacings[-k:], self.errors[-k:])

    def slope2_deviation(self, k: int = 3) -> float:
        """Coarsest error over its second-order reference value.

        The reference line has slope exactly 2 and is least-squares
        fitted (in log-log) to the ``k`` finest grids, then evaluated at
        the coarsest spacing.  Ratios well above 1 mean the coarsest
        grid sits above the second-order trend of the fine grids.
        """
        h = np.log(np.asarray(self.spacings[-k:], dtype=float))
        e = np.log(np.asarray(self.errors[-k:], dtype=float))
        intercept = float(np.mean(e - 2.0 * h))
        predicted = math.exp(intercept + 2.0 * math.log(self.spacings[0]))
        return self.errors[0] / predicted


def channel_convergence(
    channel,
    spec: ModelSpec,
    *,
    ns,
    dt: float,
    t_end: float,
    force: bool = False,
) -> ConvergenceResult:
    """Error at t_end on a ladder of uniform grids."""
    ns = tuple(int(n) for n in ns)
    errors = []
    spacings = []
    for n in ns:
        traj = run_channel(channel, spec, n=n, dt=dt, t_end=t_end, force=force)
        errors.append(final_error(traj, channel))
        spacings.append((channel.x1 - channel.x0) / (n - 1))
    return ConvergenceResult(ns, tuple(spacings), tuple(errors))


def refinement_ladder(mesh: NetworkMesh, levels: int) -> list[NetworkMesh]:
    """The mesh followed by its successive edge bisections."""
    return [mesh if k == 0 else refine(mesh, k) for k in range(levels)]


def common_node_error(traj: Trajectory, reference: Trajectory) -> float:
    """Relative L1 deviation from a finer-mesh reference at shared nodes.

    Bisection keeps parent node ids, so every node of the coarse run
    exists in the reference; values are compared id by id at the final
    snapshot.
    """
    ref_mesh = reference.mesh
    numeric = traj.final
    exact = np.array(
        [reference.final[ref_mesh.index(node_id)] for node_id in traj.mesh.node_ids]
    )
    return l1_error(numeric, exact)


def tree_convergence(
    meshes,
    spec: ModelSpec,
    *,
    dt: float,
    t_end: float,
    initial,
    reference_spec: ModelSpec | None = None,
    force: bool = False,
) -> ConvergenceResult:
    """Errors on nested tree meshes against a finest-grid reference run.

    ``meshes`` goes coarse to fine; the last mesh hosts the reference
    run (grid-corrected model unless ``reference_spec`` overrides) and
    the remaining meshes are each compared to it id by id.  ``initial``
    is a callable producing the start state for a given mesh, so every
    level samples the same underlying field.  Tree resolution is
    counted in edges, which exactly doubles under bisection; reported
    spacings are the mean edge length.
    """
    meshes = list(meshes)
    if len(meshes) < 2:
        raise ValueError("need at least one coarse mesh plus the reference mesh")
    if reference_spec is None:
        reference_spec = ModelSpec(ModelKind.EXPANDED_FLUX)
    reference = run(
        meshes[-1], TabulatedRadius(), reference_spec, dt=dt, t_end=t_end,
        initial=initial(meshes[-1]), n_snapshots=2, force=force,
    )
    ns = []
    spacings = []
    errors = []
    for mesh in meshes[:-1]:
        traj = run(
            mesh, TabulatedRadius(), spec, dt=dt, t_end=t_end,
            initial=initial(mesh), n_snapshots=2, force=force,
        )
        edges = mesh.n_nodes - 1
        ns.append(edges)
        spacings.append(mesh.total_length() / edges)
        errors.append(common_node_error(traj, reference))
    return ConvergenceResult(ns=tuple(ns), spacings=tuple(spacings),
                             errors=tuple(errors))
