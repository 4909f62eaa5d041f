"""Tests for pointnls.observables."""
import numpy as np
import pytest
from pydantic import ValidationError

from pointnls.charge import ChargeTrajectory, RunStatus, SolverConfig, solve_charge
from pointnls.observables import (ObservableEvaluator, ObservableSample, ObservablesError, TailOverflowError,
                                  inertia_envelope, observable_series, observables_at, psi_hat_at, spectral_snapshot,
                                  virial_report, virial_rhs)
from pointnls.propagator import FrameError, InitialDatum
from pointnls.states import (RadialQuadrature, datum_energy, datum_mass, inertia0, matched_gaussian_datum,
                             rebase_lambda)


def _constant_trajectory(charge: complex, params, t_end: float = 1.0, nodes: int = 11) -> ChargeTrajectory:
    times = np.linspace(0.0, t_end, nodes)
    return ChargeTrajectory(times, np.full(nodes, charge, dtype=complex), RunStatus.COMPLETED, np.zeros(nodes),
                            params, t_end / (nodes - 1))


@pytest.fixture(scope="module")
def defocusing_run(defocusing, defocusing_matched):
    return solve_charge(defocusing, defocusing_matched, SolverConfig(t_end=1.0), compute_residual=False)


@pytest.fixture(scope="module")
def focusing_run(focusing, focusing_matched):
    return solve_charge(focusing, focusing_matched, SolverConfig(t_end=1.0), compute_residual=False)


# ---------------------------------------------------------------------------
# Reconstruction of the wavefunction
# ---------------------------------------------------------------------------


class TestPsiHat:
    def test_initial_time_is_the_datum(self, defocusing_run, defocusing_matched):
        k = np.array([0.0, 0.3, 2.0, 40.0])
        assert np.array_equal(psi_hat_at(defocusing_run, defocusing_matched, 0.0, k), defocusing_matched.psi_hat(k))

    def test_free_flow(self, defocusing, gaussian_datum):
        trajectory = _constant_trajectory(0j, defocusing)
        k = np.linspace(0.0, 10.0, 21)

        expected = np.exp(-1j * k ** 2 * 0.5) * gaussian_datum.psi_hat(k)
        assert psi_hat_at(trajectory, gaussian_datum, 0.5, k) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("t", [0.7, 0.8])
    def test_constant_charge(self, defocusing, t):
        charge = 0.3 - 0.2j
        trajectory = _constant_trajectory(charge, defocusing)
        k = np.array([0.05, 0.5, 3.0, 30.0])
        free = np.exp(-1j * k ** 2 * t)

        expected = free * charge / (2.0 * np.pi * (k ** 2 + 1.0)) + charge * (1.0 - free) / (2.0 * np.pi * k ** 2)
        actual = psi_hat_at(trajectory, InitialDatum(q0=charge), t, k)
        assert np.max(np.abs(actual - expected)) < 1e-12

    def test_scalar_input(self, defocusing_run, defocusing_matched):
        value = psi_hat_at(defocusing_run, defocusing_matched, 0.5, 1.5)
        assert isinstance(value, complex)
        assert value == pytest.approx(psi_hat_at(defocusing_run, defocusing_matched, 0.5, [1.5])[0], rel=1e-14)

    def test_outside_run(self, defocusing_run, defocusing_matched):
        with pytest.raises(ObservablesError):
            psi_hat_at(defocusing_run, defocusing_matched, 1.5, 1.0)

    def test_wrong_frame(self, defocusing_run, defocusing_matched):
        with pytest.raises(FrameError):
            psi_hat_at(defocusing_run, rebase_lambda(defocusing_matched, 2.0), 0.5, 1.0)

    def test_snapshot_on_quadrature_nodes(self, defocusing_run, defocusing_matched):
        quad = RadialQuadrature.build(k_max=50.0, t_max=1.0)
        snap = spectral_snapshot(defocusing_run, defocusing_matched, 0.5, quad)

        assert np.array_equal(snap.k_nodes, quad.nodes)
        assert snap.psi_hat == pytest.approx(psi_hat_at(defocusing_run, defocusing_matched, 0.5, quad.nodes),
                                             rel=1e-12)
        assert snap.tail_estimate >= 0


# ---------------------------------------------------------------------------
# Observables
# ---------------------------------------------------------------------------


class TestObservablesAtZero:
    def test_matches_datum_observables(self, defocusing, defocusing_run, defocusing_matched, static_quad):
        sample = observables_at(defocusing_run, defocusing_matched, 0.0)

        assert sample.mass == pytest.approx(datum_mass(defocusing_matched, static_quad), rel=1e-6)
        assert sample.energy == pytest.approx(datum_energy(defocusing_matched, defocusing, static_quad),
                                              rel=1e-6, abs=1e-9)
        assert sample.inertia == pytest.approx(inertia0(defocusing_matched, static_quad), rel=1e-6)


class TestFreeFlow:
    def test_inertia_grows_quadratically(self, defocusing, gaussian_datum):
        trajectory = _constant_trajectory(0j, defocusing)
        sample = observables_at(trajectory, gaussian_datum, 0.5)

        assert sample.mass == pytest.approx(np.sqrt(np.pi), rel=1e-8)
        assert sample.energy == pytest.approx(np.pi, rel=1e-8)
        assert sample.inertia == pytest.approx(2.0 * np.pi, rel=1e-8)
        assert sample.virial_rhs == pytest.approx(8.0 * np.pi, rel=1e-12)

    def test_virial_is_exact(self, defocusing, gaussian_datum):
        trajectory = _constant_trajectory(0j, defocusing)
        report = virial_report(trajectory, gaussian_datum, [0.3, 0.6], cadence=0.05)

        assert report["d2M_fd"].to_numpy() == pytest.approx(8.0 * np.pi, rel=1e-6)
        assert report["gap"].max() < 1e-6


class TestConservation:
    @pytest.mark.parametrize("run, datum", [("defocusing_run", "defocusing_matched"),
                                            ("focusing_run", "focusing_matched")])
    def test_mass_and_energy_drift(self, request, run, datum):
        trajectory = request.getfixturevalue(run)
        datum = request.getfixturevalue(datum)
        assert trajectory.status is RunStatus.COMPLETED

        grid = np.linspace(0.0, trajectory.t_end, 5)
        series = observable_series(trajectory, datum, grid)
        mass, energy = series["mass"].to_numpy(), series["energy"].to_numpy()

        assert list(series.columns) == ["t", "mass", "energy", "inertia"]
        assert np.max(np.abs(mass / mass[0] - 1.0)) <= 1e-3
        assert np.max(np.abs(energy - energy[0])) <= 1e-3 * max(abs(energy[0]), 1.0)

    def test_drift_halves_under_refinement(self, defocusing, defocusing_matched):
        mass_drift, energy_drift = [], []
        for h, k_max in [(4e-3, 200.0), (2e-3, 400.0)]:
            trajectory = solve_charge(defocusing, defocusing_matched, SolverConfig(t_end=1.0, h_init=h),
                                      compute_residual=False)
            series = observable_series(trajectory, defocusing_matched, np.linspace(0.0, 1.0, 5), k_max)
            mass, energy = series["mass"].to_numpy(), series["energy"].to_numpy()
            mass_drift.append(np.max(np.abs(mass / mass[0] - 1.0)))
            energy_drift.append(np.max(np.abs(energy - energy[0])))

        assert mass_drift[1] <= 0.6 * mass_drift[0]
        assert energy_drift[1] <= 0.6 * energy_drift[0]


class TestVirial:
    def test_gap_against_finite_differences(self, defocusing):
        datum = matched_gaussian_datum(0.5, 0.5, defocusing)
        trajectory = solve_charge(defocusing, datum, SolverConfig(t_end=0.6), compute_residual=False)
        report = virial_report(trajectory, datum, [0.1, 0.3, 0.5], cadence=1e-2)

        assert list(report.columns) == ["t", "M", "d2M_fd", "rhs", "gap"]
        assert report["gap"].max() <= 0.03

    def test_rhs_without_charge(self, focusing):
        assert virial_rhs(-0.25, 0j, focusing) == -2.0

    def test_rhs_formula(self, focusing):
        q = 0.5 + 0.5j
        expected = 8.0 * 1.0 + 2.0 * (1.0 / np.pi - 2.0 * 0.5) * 0.5
        assert virial_rhs(1.0, q, focusing) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("times, cadence, match", [
        ([], 0.01, "at least one"),
        ([0.3], 0.0, "positive"),
        ([0.3, 0.31], 0.01, "two cadences"),
        ([0.005], 0.01, "inside the run"),
        ([0.995], 0.01, "inside the run"),
    ])
    def test_invalid_sampling(self, defocusing, gaussian_datum, times, cadence, match):
        trajectory = _constant_trajectory(0j, defocusing)
        with pytest.raises(ObservablesError, match=match):
            virial_report(trajectory, gaussian_datum, times, cadence)


class TestEnvelope:
    def test_values(self):
        envelope = inertia_envelope(2.0, -1.0, -0.5, -0.25, [0.0, 1.0])
        assert envelope.tolist() == [2.0, 0.0]


class TestEvaluator:
    def test_shared_grid_resolves_run(self, defocusing_run, defocusing_matched):
        evaluator = ObservableEvaluator(defocusing_run, defocusing_matched)
        assert evaluator.quad.nodes.size > RadialQuadrature.build().nodes.size
        assert evaluator.energy0 == pytest.approx(observables_at(defocusing_run, defocusing_matched, 0.0).energy,
                                                  rel=1e-6)

    def test_tail_overflow(self, defocusing_run, defocusing_matched):
        evaluator = ObservableEvaluator(defocusing_run, defocusing_matched, tail_tol=1e-300)
        with pytest.raises(TailOverflowError) as err:
            evaluator.sample(0.5)
        assert err.value.tail_estimate > 0

    def test_sample_validation(self):
        with pytest.raises(ValidationError):
            ObservableSample(t=0.0, mass=1.0, energy=0.0, inertia=-1.0, virial_rhs=0.0)
