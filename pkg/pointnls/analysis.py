"""
Blow-up certification from the energy threshold and the σ sweep.

A datum with E(0) < Λ blows up: M(t) ≥ 0 while M̈ ≤ 8(E(0) - Λ) < 0, so the concave quadratic
M(0) + Ṁ(0)t + 4(E(0) - Λ)t² bounds the existence time. The sweep tunes one datum per power σ
below the threshold and records bound and observation side by side.
"""

import logging
from concurrent.futures import ThreadPoolExecutor, as_completed

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy import optimize

from pointnls import PointNLSError, worker_count
from pointnls.charge import RunStatus, SolverConfig, solve_charge
from pointnls.propagator import InitialDatum
from pointnls.states import (ModelParams, RadialQuadrature, datum_energy, inertia0, inertia_dot0, lambda_threshold,
                             matched_gaussian_datum, minimizing_charge, rebase_lambda)

logger = logging.getLogger(__name__)

RUN_PAST_BOUND = 1.2
_SCAN_POINTS = 48
_MIN_RUN_STEPS = 50


class AnalysisError(PointNLSError):
    pass


class TuningError(AnalysisError):
    pass


class BlowupReport(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma: float
    beta: float
    E0: float | None = None
    Lambda: float | None = None
    certified: bool = False
    margin: float | None = None
    M0: float | None = None
    Mdot0: float | None = None
    glassey_T: float | None = None
    observed_T: float | None = None
    status: RunStatus | None = None
    within_hypotheses: bool = True
    error: str | None = None


def certify_blowup(datum: InitialDatum, params: ModelParams,
                   quad: RadialQuadrature | None = None) -> tuple[bool, float]:
    """
    Check the sufficient blow-up condition E(ψ₀) < Λ.

    :param datum: datum at any λ
    :param params: focusing model parameters
    :param quad: radial quadrature for the energy
    :return: (certified, Λ - E(ψ₀))
    """

    if params.beta <= 0:
        raise AnalysisError(f"blow-up certification needs beta > 0, got beta={params.beta!r}")
    if params.below_half:
        logger.warning("sigma=%g < 1/2: certification is outside the proven hypotheses", params.sigma)
    margin = lambda_threshold(params) - datum_energy(datum, params, quad)
    return margin > 0, margin


def glassey_bound(m0: float, mdot0: float, energy0: float, threshold: float) -> float:
    """
    Smallest positive root of M(0) + Ṁ(0)t + 4(E(0) - Λ)t².

    :param m0: moment of inertia at t = 0
    :param mdot0: its derivative at t = 0
    :param energy0: E(ψ₀)
    :param threshold: Λ
    :return: upper bound for the blow-up time
    """

    if not energy0 < threshold:
        raise AnalysisError(f"the Glassey bound needs E0 < Lambda, got E0={energy0!r}, Lambda={threshold!r}")
    if not 0 < m0 < np.inf:
        raise AnalysisError(f"the Glassey bound needs a finite positive M0, got {m0!r}")
    a = 4.0 * abs(energy0 - threshold)
    root = np.sqrt(mdot0 ** 2 + 4.0 * a * m0)
    # the two forms avoid cancellation for either sign of Ṁ(0)
    if mdot0 <= 0:
        return float(2.0 * m0 / (root - mdot0))
    return float((mdot0 + root) / (2.0 * a))


class GaussianFamily(BaseModel):
    """
    Matched data s ↦ s·G-charge plus the Gaussian of ``width`` that closes the boundary condition.

    ``energy_ratio`` sets the tuning target E0 = energy_ratio·Λ; ``control_scale`` is the charge
    used for defocusing rows, where there is nothing to tune.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    width: float = Field(default=0.2, gt=0)
    energy_ratio: float = Field(default=1.5, gt=1)
    control_scale: float = Field(default=1.0, gt=0)

    def datum(self, scale: float, params: ModelParams) -> InitialDatum:
        return matched_gaussian_datum(scale, self.width, params.at_lambda(1.0))


def tune_datum(family: GaussianFamily, params: ModelParams,
               quad: RadialQuadrature | None = None) -> InitialDatum:
    """
    Pick the family member with E0 = energy_ratio·Λ.

    The energy along the family is scanned for its minimum, refined with a bounded scalar
    minimization, and the target is bracketed between s = 0 (E0 = 0) and the minimizer.

    :param family: one-parameter datum family
    :param params: focusing model parameters
    :param quad: radial quadrature for the energy
    :return: tuned datum at λ = 1
    """

    quad = quad or RadialQuadrature.build()
    target = family.energy_ratio * lambda_threshold(params)

    def energy(scale: float) -> float:
        return datum_energy(family.datum(scale, params), params, quad)

    scales = np.linspace(0.0, 4.0 * minimizing_charge(params), _SCAN_POINTS + 1)[1:]
    values = np.array([energy(s) for s in scales])
    best = int(np.argmin(values))
    lo = scales[best - 1] if best > 0 else 0.0
    hi = scales[min(best + 1, scales.size - 1)]
    result = optimize.minimize_scalar(energy, bounds=(lo, hi), method="bounded")
    s_min, e_min = (result.x, result.fun) if result.fun < values[best] else (scales[best], values[best])
    logger.debug("Family minimum E=%.6g at s=%.6g (target %.6g)", e_min, s_min, target)
    if e_min >= target:
        raise TuningError(f"family width={family.width!r} reaches E0={e_min:.6g} at best, "
                          f"above the target {target:.6g} for sigma={params.sigma!r}")
    scale = optimize.brentq(lambda s: energy(s) - target, 0.0, s_min, xtol=1e-14, rtol=1e-12)
    return family.datum(scale, params)


def _run_config(config: SolverConfig, t_end: float) -> SolverConfig:
    h_init = min(config.h_init, t_end / _MIN_RUN_STEPS)
    return config.model_copy(update={"t_end": t_end, "h_init": h_init})


def analyze_blowup(datum: InitialDatum, params: ModelParams, config: SolverConfig,
                   quad: RadialQuadrature | None = None) -> BlowupReport:
    """
    Certify, bound and run one datum.

    Certified data are run to RUN_PAST_BOUND times the Glassey bound; everything else runs to
    config.t_end.

    :param datum: datum at any λ with a nonempty regular part
    :param params: model parameters
    :param config: solver configuration
    :param quad: radial quadrature for the t = 0 observables
    :return: BlowupReport
    """

    quad = quad or RadialQuadrature.build()
    params = params.at_lambda(1.0)
    datum = rebase_lambda(datum, 1.0)
    energy0 = datum_energy(datum, params, quad)
    m0 = inertia0(datum, quad)
    mdot0 = inertia_dot0(datum, quad)
    fields = dict(sigma=params.sigma, beta=params.beta, E0=energy0, M0=m0, Mdot0=mdot0,
                  within_hypotheses=not params.below_half)

    run = config
    if params.focusing:
        threshold = lambda_threshold(params)
        certified, margin = energy0 < threshold, threshold - energy0
        fields.update(Lambda=threshold, certified=certified, margin=margin)
        if certified:
            bound = glassey_bound(m0, mdot0, energy0, threshold)
            fields["glassey_T"] = bound
            run = _run_config(config, RUN_PAST_BOUND * bound)

    trajectory = solve_charge(params, datum, run, compute_residual=False)
    report = BlowupReport(**fields, observed_T=trajectory.t_est, status=trajectory.status)
    logger.info("sigma=%g beta=%g: E0=%.6g certified=%s glassey_T=%s status=%s", report.sigma, report.beta,
                energy0, report.certified, report.glassey_T, report.status.value)
    return report


def _sweep_row(sigma: float, beta: float, family: GaussianFamily, config: SolverConfig) -> BlowupReport:
    params = ModelParams(sigma=sigma, beta=beta)
    quad = RadialQuadrature.build()
    try:
        if params.focusing:
            datum = tune_datum(family, params, quad)
        else:
            datum = family.datum(family.control_scale, params)
        return analyze_blowup(datum, params, config, quad)
    except PointNLSError as exc:
        logger.error("Sweep row sigma=%g failed: %s", sigma, exc)
        return BlowupReport(sigma=sigma, beta=beta, within_hypotheses=not params.below_half, error=str(exc))


def sigma_sweep(sigmas: list[float], beta: float, family: GaussianFamily | None = None,
                config: SolverConfig | None = None) -> list[BlowupReport]:
    """
    Tune, certify and run one datum per power σ.

    :param sigmas: nonlinearity powers
    :param beta: coupling shared by every row
    :param family: datum family to tune along
    :param config: solver configuration (t_end is used by rows that are not certified)
    :return: reports ordered by σ
    """

    family = family or GaussianFamily()
    config = config or SolverConfig(t_end=1.0)
    if not sigmas:
        return []
    reports = []
    with ThreadPoolExecutor(max_workers=min(worker_count(), len(sigmas))) as executor:
        futures = {executor.submit(_sweep_row, s, beta, family, config): s for s in sigmas}
        for future in as_completed(futures):
            reports.append(future.result())
    return sorted(reports, key=lambda r: r.sigma)
