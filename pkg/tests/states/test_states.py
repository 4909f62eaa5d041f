"""Tests for pointnls.states."""
import numpy as np
import pytest
from pydantic import ValidationError
from scipy import optimize

from pointnls.propagator import GaussianTerm, GreenTerm, InitialDatum, RegularPart
from pointnls.specfun import EULER_GAMMA
from pointnls.states import (THRESHOLD_FREQUENCY, ModelParams, QuadratureError, RadialQuadrature, StandingWave,
                             StatesError, boundary_mismatch, datum_energy, datum_mass, datum_norms, inertia0,
                             inertia_dot0, lambda_threshold, match_boundary, matched_gaussian_datum,
                             minimizing_charge, rebase_lambda, standing_wave, standing_wave_datum,
                             standing_wave_energy, wave_from_charge)

UNIT_CHARGE_OMEGA = 4.0 * np.exp(2.0 - 2.0 * EULER_GAMMA)


def _gaussian(amplitude=1.0, width=1.0, q0=0j) -> InitialDatum:
    return InitialDatum(regular=RegularPart(gaussians=(GaussianTerm(amplitude=amplitude, width=width),)), q0=q0)


# ---------------------------------------------------------------------------
# Parameters and standing waves
# ---------------------------------------------------------------------------


class TestModelParams:
    def test_zero_beta_rejected(self):
        with pytest.raises(ValidationError, match="nonzero"):
            ModelParams(sigma=1.0, beta=0.0)

    @pytest.mark.parametrize("field", [{"sigma": 0.0}, {"sigma": -1.0}, {"lam": 0.0}])
    def test_positive_fields(self, field):
        values = {"sigma": 1.0, "beta": 1.0} | field
        with pytest.raises(ValidationError):
            ModelParams(**values)

    def test_alias_and_flags(self):
        params = ModelParams.model_validate({"sigma": 0.4, "beta": -1.0, "lambda": 2.0})

        assert params.lam == 2.0
        assert params.below_half
        assert not params.focusing
        assert params.at_lambda(5.0).lam == 5.0
        assert params.lam == 2.0


class TestStandingWave:
    @pytest.mark.parametrize("sigma", [0.5, 1.0, 3.0])
    def test_unit_charge(self, sigma):
        wave = standing_wave(UNIT_CHARGE_OMEGA, ModelParams(sigma=sigma, beta=1.0 / (2.0 * np.pi)))
        assert wave.charge_modulus == pytest.approx(1.0, rel=1e-14)

    def test_charge_vanishes_at_threshold(self):
        wave = standing_wave(THRESHOLD_FREQUENCY * (1.0 + 1e-10), ModelParams(sigma=1.0, beta=1.0))
        assert wave.charge_modulus < 1e-4

    def test_inverse_map(self):
        params = ModelParams(sigma=1.5, beta=0.3)
        wave = standing_wave(12.0, params, eta=0.4)
        back = wave_from_charge(wave.charge_modulus, params, eta=wave.phase)

        assert back.omega == pytest.approx(12.0, rel=1e-10)
        assert back.phase == 0.4

    def test_below_threshold(self):
        with pytest.raises(StatesError, match="must exceed"):
            standing_wave(THRESHOLD_FREQUENCY, ModelParams(sigma=1.0, beta=1.0))

    def test_defocusing_has_none(self):
        with pytest.raises(StatesError, match="focusing"):
            standing_wave(10.0, ModelParams(sigma=1.0, beta=-1.0))

    def test_model_validates_frequency(self):
        with pytest.raises(ValidationError):
            StandingWave(omega=0.5, charge_modulus=1.0)

    def test_datum_energy_of_standing_wave(self, static_quad):
        params = ModelParams(sigma=1.0, beta=1.0)
        wave = standing_wave(5.0, params, eta=1.1)
        datum = standing_wave_datum(wave)

        assert datum.lam == 5.0
        assert abs(datum.q0) == pytest.approx(wave.charge_modulus, rel=1e-15)
        assert datum_energy(datum, params, static_quad) == pytest.approx(
            standing_wave_energy(wave.charge_modulus, params), rel=1e-8, abs=1e-12)


class TestLambdaThreshold:
    def test_closed_form(self):
        value = lambda_threshold(ModelParams(sigma=1.0, beta=1.0))
        assert value == pytest.approx(-1.0 / (32.0 * np.pi ** 2), rel=1e-14)
        assert value == pytest.approx(-3.1663e-3, rel=1e-4)

    def test_beta_scaling(self):
        assert lambda_threshold(ModelParams(sigma=1.0, beta=2.0)) == pytest.approx(
            0.5 * lambda_threshold(ModelParams(sigma=1.0, beta=1.0)), rel=1e-14)

    @pytest.mark.parametrize("sigma", [0.5, 1.0, 2.0, 3.0])
    def test_is_minimum_of_standing_wave_energies(self, sigma):
        params = ModelParams(sigma=sigma, beta=1.0)
        q_star = minimizing_charge(params)
        result = optimize.minimize_scalar(lambda s: standing_wave_energy(s, params), bounds=(0.1 * q_star, 3 * q_star),
                                          method="bounded", options={"xatol": 1e-12})
        threshold = lambda_threshold(params)

        assert threshold < 0
        assert result.fun == pytest.approx(threshold, rel=1e-8)
        assert standing_wave_energy(q_star, params) == pytest.approx(threshold, rel=1e-12)

    def test_defocusing_rejected(self):
        with pytest.raises(StatesError):
            lambda_threshold(ModelParams(sigma=1.0, beta=-1.0))


# ---------------------------------------------------------------------------
# Frames and boundary matching
# ---------------------------------------------------------------------------


class TestRebaseLambda:
    def test_same_lambda_is_identity(self, green_pair_datum):
        assert rebase_lambda(green_pair_datum, 1.0) is green_pair_datum

    def test_standing_wave_decomposition(self):
        wave = standing_wave(UNIT_CHARGE_OMEGA, ModelParams(sigma=1.0, beta=1.0 / (2.0 * np.pi)))
        rebased = rebase_lambda(standing_wave_datum(wave), 1.0)
        terms = {g.pole: g.coefficient for g in rebased.regular.green_terms}

        assert rebased.lam == 1.0
        assert terms == pytest.approx({UNIT_CHARGE_OMEGA: 1.0, 1.0: -1.0})

    def test_shared_pole_is_merged(self, green_pair_datum):
        rebased = rebase_lambda(green_pair_datum, 2.0)
        poles = sorted(g.pole for g in rebased.regular.green_terms)
        assert poles == [0.5, 1.0, 2.0]

    def test_round_trip_drops_cancelled_terms(self, green_pair_datum):
        there_and_back = rebase_lambda(rebase_lambda(green_pair_datum, 3.0), 1.0)
        assert sorted(g.pole for g in there_and_back.regular.green_terms) == [0.5, 2.0]

    @pytest.mark.parametrize("lam", [0.5, 2.0, 5.0])
    def test_energy_and_mass_invariant(self, green_pair_datum, focusing, static_quad, lam):
        rebased = rebase_lambda(green_pair_datum, lam)

        assert datum_energy(rebased, focusing, static_quad) == pytest.approx(
            datum_energy(green_pair_datum, focusing, static_quad), abs=1e-6)
        assert datum_mass(rebased, static_quad) == pytest.approx(datum_mass(green_pair_datum, static_quad), rel=1e-10)

    def test_nonpositive_lambda(self, green_pair_datum):
        with pytest.raises(StatesError):
            rebase_lambda(green_pair_datum, 0.0)


class TestBoundaryMatching:
    def test_matched_gaussian_has_no_mismatch(self, focusing):
        datum = matched_gaussian_datum(0.3 + 0.1j, 0.5, focusing)
        assert boundary_mismatch(datum, focusing) == pytest.approx(0.0, abs=1e-15)

    def test_mismatch_is_frame_invariant(self, green_pair_datum, focusing):
        before = boundary_mismatch(green_pair_datum, focusing)
        after = boundary_mismatch(rebase_lambda(green_pair_datum, 4.0), focusing)
        assert after == pytest.approx(before, abs=1e-13)

    def test_match_boundary_appends_anchor(self, green_pair_datum, focusing):
        matched = match_boundary(green_pair_datum, focusing, width=0.6)

        assert len(matched.regular.gaussians) == len(green_pair_datum.regular.gaussians) + 1
        assert matched.regular.gaussians[-1].width == 0.6
        assert boundary_mismatch(matched, focusing) == pytest.approx(0.0, abs=1e-14)

    def test_matched_datum_is_unchanged(self, focusing):
        datum = matched_gaussian_datum(0.8, 1.0, focusing)
        assert match_boundary(datum, focusing) is datum


# ---------------------------------------------------------------------------
# Norms, energy and moment of inertia at t = 0
# ---------------------------------------------------------------------------


class TestDatumNorms:
    def test_pure_charge_mass(self, static_quad):
        assert datum_mass(InitialDatum(q0=1.0), static_quad) == pytest.approx(1.0 / np.sqrt(4.0 * np.pi), rel=1e-8)

    def test_gaussian_mass(self, static_quad):
        assert datum_mass(_gaussian(), static_quad) == pytest.approx(np.sqrt(np.pi), rel=1e-10)

    def test_mass_linear_in_amplitude(self, static_quad):
        assert datum_mass(_gaussian(amplitude=2.0), static_quad) == pytest.approx(
            2.0 * datum_mass(_gaussian(), static_quad), rel=1e-12)

    @pytest.mark.parametrize("lam", [0.5, 1.0, 7.0])
    def test_gaussian_energy(self, focusing, static_quad, lam):
        datum = InitialDatum(regular=_gaussian().regular, lam=lam)
        assert datum_energy(datum, focusing, static_quad) == pytest.approx(np.pi, rel=1e-10)

    def test_tail_estimate_attached(self, green_pair_datum, static_quad):
        norms = datum_norms(green_pair_datum, static_quad)
        assert 0.0 <= norms.tail_estimate < 1e-6 * norms.mass2

    def test_tail_overflow(self, green_pair_datum):
        coarse = RadialQuadrature.build(k_max=2.0)
        with pytest.raises(QuadratureError) as err:
            datum_norms(green_pair_datum, coarse, tail_tol=1e-12)
        assert err.value.tail_estimate > 0

    def test_quadrature_integrates_gaussian(self, static_quad):
        assert static_quad.integrate(np.exp(-static_quad.nodes ** 2)) == pytest.approx(np.pi, rel=1e-13)

    def test_narrow_panels_for_evolution(self):
        static = RadialQuadrature.build()
        evolving = RadialQuadrature.build(t_max=2.0)
        assert evolving.nodes.size > static.nodes.size
        assert evolving.k_max == static.k_max

    def test_invalid_cutoff(self):
        with pytest.raises(StatesError):
            RadialQuadrature.build(k_max=0.0)


class TestInertia:
    def test_gaussian_inertia(self, static_quad):
        assert inertia0(_gaussian(), static_quad) == pytest.approx(np.pi, rel=1e-10)

    def test_variance_scaling(self, static_quad):
        narrow, wide = _gaussian(width=1.0), _gaussian(width=2.0)
        ratio_narrow = inertia0(narrow, static_quad) / datum_mass(narrow, static_quad) ** 2
        ratio_wide = inertia0(wide, static_quad) / datum_mass(wide, static_quad) ** 2
        assert ratio_wide == pytest.approx(4.0 * ratio_narrow, rel=1e-8)

    def test_real_data_have_no_drift(self, static_quad):
        datum = InitialDatum(regular=RegularPart(
            gaussians=(GaussianTerm(amplitude=1.0, width=1.0),),
            green_terms=(GreenTerm(coefficient=0.5, pole=1.5), GreenTerm(coefficient=-0.5, pole=3.0))), q0=0.7)
        assert inertia_dot0(datum, static_quad) == pytest.approx(0.0, abs=1e-12)

    def test_time_reversal_flips_drift(self, static_quad):
        def chirped(sign: float) -> InitialDatum:
            return InitialDatum(regular=RegularPart(gaussians=(GaussianTerm(amplitude=1.0, width=1.0),
                                                               GaussianTerm(amplitude=0.5j * sign, width=0.6))), q0=0.3)

        forward = inertia_dot0(chirped(1.0), static_quad)
        assert abs(forward) > 1e-3
        assert inertia_dot0(chirped(-1.0), static_quad) == pytest.approx(-forward, rel=1e-12)

    def test_pure_charge_rejected(self, static_quad):
        with pytest.raises(StatesError, match="pure-charge"):
            inertia0(InitialDatum(q0=1.0), static_quad)
        with pytest.raises(StatesError, match="pure-charge"):
            inertia_dot0(InitialDatum(q0=1.0), static_quad)
