"""Tests for the forward-Euler driver and its supporting pieces."""

import numpy as np
import pytest

from tubediff.discretize import FluxWindow, LateralFluxField, assemble_model
from tubediff.integrate import (
    BoundaryData,
    ConstraintPolicy,
    SimulationError,
    StabilityError,
    Trajectory,
    run,
    step,
    trapezoid_weights,
)
from tubediff.models import ModelKind, ModelSpec
from tubediff.network import ConeRadius, TabulatedRadius, interval_mesh

from tests.test_network import chain_mesh, y_mesh

SIMPLE = ModelSpec(ModelKind.SIMPLE_DIFFUSION)
FJ = ModelSpec(ModelKind.FICK_JACOBS)


class TestStep:
    def test_single_update_is_exact(self):
        mesh = chain_mesh([1.0, 1.0, 1.0])
        op = assemble_model(mesh, TabulatedRadius(), SIMPLE)
        c = np.array([0.0, 1.0, 0.0])
        out = step(c, op, dt=0.1)
        # leaf rows 2(c_nbr - c_leaf)/h^2, interior (1, -2, 1)/h^2
        assert np.array_equal(out, np.array([0.2, 0.8, 0.2]))

    def test_nonfinite_state_raises(self):
        mesh = chain_mesh([1.0, 1.0, 1.0])
        op = assemble_model(mesh, TabulatedRadius(), SIMPLE)
        c = np.array([0.0, 1.0, 0.0])
        with pytest.raises(SimulationError):
            step(c, op, dt=1e308)


class TestQuadrature:
    def test_chain_weights(self):
        mesh = chain_mesh([1.0] * 5)
        assert np.array_equal(trapezoid_weights(mesh), [0.5, 1.0, 1.0, 1.0, 0.5])

    def test_branch_node_collects_all_edges(self):
        mesh = y_mesh()
        w = trapezoid_weights(mesh)
        assert w[mesh.index(2)] == 1.5
        assert w.sum() == pytest.approx(mesh.total_length(), rel=1e-15)


class TestConservation:
    def test_closed_network_conserves_weighted_mass(self):
        mesh = y_mesh()
        rng = np.random.default_rng(7)
        c0 = rng.uniform(0.5, 2.0, mesh.n_nodes)
        traj = run(
            mesh, TabulatedRadius(), SIMPLE, dt=0.05, t_end=5.0, initial=c0
        )
        w = trapezoid_weights(mesh)
        masses = traj.states @ w
        assert np.max(np.abs(masses - masses[0])) <= 1e-12 * masses[0]

    def test_end_slopes_feed_mass_at_unit_rate(self):
        # D=1: mass rate is g_far - g_root for a straight channel
        mesh = chain_mesh([1.0] * 5)
        traj = run(
            mesh,
            TabulatedRadius(),
            SIMPLE,
            dt=0.1,
            t_end=2.0,
            initial=1.0,
            boundary=BoundaryData({0: -1.0, 4: 0.0}),
            n_snapshots=21,
        )
        w = trapezoid_weights(mesh)
        masses = traj.states @ w
        rates = np.diff(masses) / 0.1
        assert rates == pytest.approx(np.ones_like(rates), rel=1e-12)


class TestRunDriver:
    def test_snapshot_times_span_the_run(self):
        mesh = chain_mesh([1.0] * 5)
        traj = run(
            mesh, TabulatedRadius(), SIMPLE, dt=0.01, t_end=1.0,
            initial=0.0, n_snapshots=5,
        )
        assert traj.times == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
        assert traj.states.shape == (5, 5)

    def test_initial_snapshot_is_the_initial_state(self):
        mesh = chain_mesh([1.0] * 5)
        c0 = np.array([5.0, 4.0, 3.0, 2.0, 1.0])
        traj = run(mesh, TabulatedRadius(), SIMPLE, dt=0.1, t_end=1.0, initial=c0)
        assert np.array_equal(traj.states[0], c0)

    def test_reruns_are_bit_identical(self):
        cone = ConeRadius(0.2)
        mesh = interval_mesh(0.0, 10.0, 41, cone)
        x = mesh.positions[:, 0]
        c0 = np.exp(-((x - 5.0) ** 2))
        a = run(mesh, cone, FJ, dt=0.005, t_end=1.0, initial=c0)
        b = run(mesh, cone, FJ, dt=0.005, t_end=1.0, initial=c0)
        assert np.array_equal(a.states, b.states)

    def test_overlarge_step_is_refused(self):
        mesh = chain_mesh([1.0] * 5)  # dt_max = 0.5
        with pytest.raises(StabilityError):
            run(mesh, TabulatedRadius(), SIMPLE, dt=0.6, t_end=1.2, initial=1.0)

    def test_force_overrides_the_gate(self):
        mesh = chain_mesh([1.0] * 5)
        traj = run(
            mesh, TabulatedRadius(), SIMPLE, dt=0.6, t_end=1.2,
            initial=1.0, force=True,
        )
        assert np.isfinite(traj.final).all()

    def test_forced_blowup_raises_mid_march(self):
        mesh = chain_mesh([1.0] * 5)
        x = mesh.positions[:, 0]
        with pytest.raises(SimulationError):
            # the pi-mode grows about fivefold per step at this dt, so the
            # march overflows well before t_end
            run(
                mesh, TabulatedRadius(), SIMPLE, dt=1.5, t_end=900.0,
                initial=np.sin(np.pi * x / 4.0), force=True,
            )

    def test_fractional_step_count_is_rejected(self):
        mesh = chain_mesh([1.0] * 5)
        with pytest.raises(ValueError):
            run(mesh, TabulatedRadius(), SIMPLE, dt=0.3, t_end=1.0, initial=1.0)

    def test_time_dependent_end_slope_changes_the_answer(self):
        mesh = chain_mesh([1.0] * 5)
        fixed = run(
            mesh, TabulatedRadius(), SIMPLE, dt=0.1, t_end=1.0, initial=1.0,
            boundary=BoundaryData({4: 0.5}),
        )
        ramped = run(
            mesh, TabulatedRadius(), SIMPLE, dt=0.1, t_end=1.0, initial=1.0,
            boundary=BoundaryData({4: lambda t: 0.5 * t}),
        )
        assert not np.array_equal(fixed.final, ramped.final)

    def test_boundary_data_on_interior_node_is_rejected(self):
        mesh = chain_mesh([1.0] * 5)
        with pytest.raises(ValueError):
            run(
                mesh, TabulatedRadius(), SIMPLE, dt=0.1, t_end=1.0,
                initial=1.0, boundary=BoundaryData({2: 1.0}),
            )


class TestConstraintPolicy:
    def test_adjust_branches(self):
        mesh = chain_mesh([1.0, 1.0, 1.0])
        policy = ConstraintPolicy(node_ids=(0, 1, 2), c_hi=6.0, c_lo=4.0,
                                  outflow_strength=2.0)
        c = np.array([7.0, 5.0, 3.0])
        base = np.array([1.0, 1.0, 1.0])
        assert np.array_equal(policy.adjust(mesh, c, base), [-2.0, 1.0, 0.0])

    def test_unlisted_nodes_keep_scheduled_flux(self):
        mesh = chain_mesh([1.0, 1.0, 1.0])
        policy = ConstraintPolicy(node_ids=(1,))
        c = np.array([7.0, 7.0, 7.0])
        base = np.array([1.0, 1.0, 1.0])
        assert np.array_equal(policy.adjust(mesh, c, base), [1.0, -2.0, 1.0])

    def test_default_policy_governs_every_node(self):
        mesh = chain_mesh([1.0, 1.0, 1.0, 1.0])
        policy = ConstraintPolicy(c_hi=6.0, c_lo=4.0, outflow_strength=2.0)
        c = np.array([7.0, 5.0, 3.0, 6.5])
        base = np.array([1.0, 1.0, 1.0, 1.0])
        assert np.array_equal(policy.adjust(mesh, c, base), [-2.0, 1.0, 0.0, -2.0])

    def test_bad_parameters_are_rejected(self):
        with pytest.raises(ValueError):
            ConstraintPolicy(node_ids=(0,), c_hi=4.0, c_lo=6.0)
        with pytest.raises(ValueError):
            ConstraintPolicy(node_ids=(0,), outflow_strength=0.0)


class TestLateralFlux:
    def test_windows_turn_off_in_recorded_fluxes(self):
        mesh = chain_mesh([1.0] * 5)
        field = LateralFluxField((FluxWindow((1, 2), 3.0, t_start=0.0, t_end=0.5),))
        traj = run(
            mesh, TabulatedRadius(), SIMPLE, dt=0.05, t_end=1.0,
            initial=1.0, lateral=field, n_snapshots=3,
        )
        assert traj.fluxes is not None
        assert np.array_equal(traj.fluxes[0], [0.0, 3.0, 3.0, 0.0, 0.0])
        # window half-open: off at t = 0.5 and after
        assert np.array_equal(traj.fluxes[1], np.zeros(5))
        assert np.array_equal(traj.fluxes[2], np.zeros(5))

    def test_policy_override_is_recorded(self):
        mesh = chain_mesh([1.0] * 5)
        field = LateralFluxField((FluxWindow((1,), 3.0),))
        policy = ConstraintPolicy(node_ids=(1,), c_hi=6.0, c_lo=4.0,
                                  outflow_strength=2.0)
        traj = run(
            mesh, TabulatedRadius(), SIMPLE, dt=0.05, t_end=0.1,
            initial=7.0, lateral=field, policy=policy, n_snapshots=2,
        )
        assert traj.fluxes[0][mesh.index(1)] == -2.0

    def test_flux_raises_concentration(self):
        mesh = chain_mesh([1.0] * 5)
        field = LateralFluxField((FluxWindow((2,), 1.0),))
        traj = run(
            mesh, TabulatedRadius(), SIMPLE, dt=0.05, t_end=1.0,
            initial=1.0, lateral=field,
        )
        assert traj.final[2] > 1.0


class TestCsvOutput:
    def test_schema_and_roundtrip(self, tmp_path):
        cone = ConeRadius(0.5)
        mesh = interval_mesh(0.0, 2.0, 5, cone)
        traj = run(mesh, cone, FJ, dt=0.05, t_end=0.5, initial=2.0, n_snapshots=3)
        path = tmp_path / "out.csv"
        traj.to_csv(path)
        lines = path.read_text().strip().split("\n")
        assert lines[0] == "t,node_id,x_arc,c,G"
        assert len(lines) == 1 + 3 * 5
        t, node_id, x_arc, c, big_g = lines[1].split(",")
        assert float(t) == 0.0 and node_id == "0"
        assert float(c) == traj.states[0, 0]
        assert float(big_g) == np.pi * cone.radii(mesh)[0] ** 2 * traj.states[0, 0]

    def test_flux_column_appears_with_lateral_data(self, tmp_path):
        mesh = chain_mesh([1.0] * 5)
        field = LateralFluxField((FluxWindow((2,), 1.0),))
        traj = run(
            mesh, TabulatedRadius(), SIMPLE, dt=0.05, t_end=0.5,
            initial=1.0, lateral=field,
        )
        path = tmp_path / "out.csv"
        traj.to_csv(path)
        assert path.read_text().startswith("t,node_id,x_arc,c,G,J\n")

    def test_identical_runs_write_identical_bytes(self, tmp_path):
        mesh = y_mesh()
        out = []
        for name in ("a.csv", "b.csv"):
            traj = run(
                mesh, TabulatedRadius(), SIMPLE, dt=0.05, t_end=1.0, initial=2.0
            )
            p = tmp_path / name
            traj.to_csv(p)
            out.append(p.read_bytes())
        assert out[0] == out[1]
