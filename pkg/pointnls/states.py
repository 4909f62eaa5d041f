"""
Static objects of the model: parameters, standing waves, the energy threshold Λ, and the mass,
energy and moment of inertia of a datum at t = 0.

Norms are radial Fourier integrals 2π∫g(k)k dk on a composite Gauss-Legendre grid up to k_max,
closed by analytic power tails from the Green content of the datum. The grid carries a second
set of panels on [k_max, 2k_max]; comparing their numeric value with the analytic tail model
gives the tail estimate attached to every result.
"""

import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from pointnls import PointNLSError
from pointnls.propagator import GaussianTerm, GreenTerm, InitialDatum, RegularPart
from pointnls.specfun import EULER_GAMMA, theta

logger = logging.getLogger(__name__)

THRESHOLD_FREQUENCY = 4.0 * np.exp(-2.0 * EULER_GAMMA)
KAPPA = complex(-2.0 * (np.log(2.0) - EULER_GAMMA + 0.25j * np.pi))

DEFAULT_K_MAX = 200.0
DEFAULT_K_RESOLVE = 25.0
DEFAULT_TAIL_TOL = 1e-6
_PANEL_ORDER = 12
_BASE_PANEL = 0.125
_STATIC_RESOLVE = 8.0
_GEOMETRIC_RATIO = 1.2


class StatesError(PointNLSError):
    pass


class QuadratureError(StatesError):
    def __init__(self, message: str, tail_estimate: float):
        super().__init__(f"{message} (tail estimate {tail_estimate:.3e})")
        self.tail_estimate = tail_estimate


class ModelParams(BaseModel):
    """Nonlinearity power σ, coupling β (β > 0 focusing) and decomposition parameter λ."""

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    sigma: float = Field(gt=0)
    beta: float
    lam: float = Field(default=1.0, gt=0, alias="lambda")

    @field_validator("beta")
    @classmethod
    def _nonzero_beta(cls, value: float) -> float:
        if value == 0:
            raise ValueError("beta must be nonzero")
        return value

    @property
    def focusing(self) -> bool:
        return self.beta > 0

    @property
    def below_half(self) -> bool:
        """σ < 1/2 lies outside the proven well-posedness range."""
        return self.sigma < 0.5

    def at_lambda(self, lam: float) -> "ModelParams":
        return self.model_copy(update={"lam": lam})


class StandingWave(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    omega: float = Field(gt=THRESHOLD_FREQUENCY)
    charge_modulus: float = Field(gt=0)
    phase: float = 0.0


def _require_focusing(params: ModelParams, what: str) -> None:
    if params.beta <= 0:
        raise StatesError(f"{what} needs focusing coupling beta > 0, got beta={params.beta!r}")


def standing_wave(omega: float, params: ModelParams, eta: float = 0.0) -> StandingWave:
    """
    Standing wave e^{iωt}Q(ω)e^{iη}G_ω.

    :param omega: frequency above 4e^{-2γ}
    :param params: model parameters (β > 0)
    :param eta: phase, carried through unchanged
    :return: StandingWave
    """

    _require_focusing(params, "standing waves")
    if not omega > THRESHOLD_FREQUENCY:
        raise StatesError(f"omega must exceed 4e^(-2γ) = {THRESHOLD_FREQUENCY:.12g}, got {omega!r}")
    log_term = np.log(np.sqrt(omega) / 2.0) + EULER_GAMMA
    modulus = (log_term / (2.0 * np.pi * params.beta)) ** (1.0 / (2.0 * params.sigma))
    return StandingWave(omega=omega, charge_modulus=modulus, phase=eta)


def wave_from_charge(modulus: float, params: ModelParams, eta: float = 0.0) -> StandingWave:
    """Invert Q ↦ ω: ω = 4 exp(2(2πβQ^{2σ} - γ))."""
    _require_focusing(params, "standing waves")
    if modulus <= 0:
        raise StatesError(f"charge modulus must be positive, got {modulus!r}")
    omega = 4.0 * np.exp(2.0 * (2.0 * np.pi * params.beta * modulus ** (2.0 * params.sigma) - EULER_GAMMA))
    return StandingWave(omega=omega, charge_modulus=modulus, phase=eta)


def standing_wave_energy(modulus: float, params: ModelParams) -> float:
    """E(u^ω) = -Q²/(4π) + σβ/(σ+1)·Q^{2σ+2}"""
    s = params.sigma
    return -modulus ** 2 / (4.0 * np.pi) + s * params.beta / (s + 1.0) * modulus ** (2.0 * s + 2.0)


def standing_wave_datum(wave: StandingWave) -> InitialDatum:
    """The standing-wave profile at t = 0, represented at λ = ω with zero regular part."""
    return InitialDatum(q0=wave.charge_modulus * np.exp(1j * wave.phase), lam=wave.omega)


def lambda_threshold(params: ModelParams) -> float:
    """Λ = -σ/(4π(σ+1)(4πσβ)^{1/σ}), the infimum of standing-wave energies."""
    _require_focusing(params, "the energy threshold")
    s = params.sigma
    return -s / (4.0 * np.pi * (s + 1.0) * (4.0 * np.pi * s * params.beta) ** (1.0 / s))


def minimizing_charge(params: ModelParams) -> float:
    """Charge modulus at which the standing-wave energy reaches Λ."""
    _require_focusing(params, "the energy threshold")
    return (1.0 / (4.0 * np.pi * params.sigma * params.beta)) ** (1.0 / (2.0 * params.sigma))


# ---------------------------------------------------------------------------
# λ-frame bookkeeping and boundary matching
# ---------------------------------------------------------------------------


def rebase_lambda(datum: InitialDatum, lambda_new: float) -> InitialDatum:
    """
    Represent the same ψ₀ at a new decomposition parameter.

    regular' = regular + q0·G_λ - q0·G_λ'; coefficients on a shared pole are added and terms that
    cancel are dropped.

    :param datum: datum at datum.lam
    :param lambda_new: new decomposition parameter
    :return: InitialDatum at lambda_new
    """

    if lambda_new <= 0:
        raise StatesError(f"lambda must be positive, got {lambda_new!r}")
    if lambda_new == datum.lam:
        return datum
    merged: dict[float, complex] = {g.pole: g.coefficient for g in datum.regular.green_terms}
    if datum.q0 != 0:
        merged[datum.lam] = merged.get(datum.lam, 0j) + datum.q0
        merged[lambda_new] = merged.get(lambda_new, 0j) - datum.q0
    green_terms = tuple(GreenTerm(coefficient=c, pole=mu) for mu, c in merged.items() if c != 0)
    regular = RegularPart(gaussians=datum.regular.gaussians, green_terms=green_terms)
    return InitialDatum(regular=regular, q0=datum.q0, lam=lambda_new)


def boundary_mismatch(datum: InitialDatum, params: ModelParams) -> complex:
    """
    φ_λ(0) - θ_λ(|q0|)q0, zero for data in the operator domain; independent of the frame.

    :param datum: datum at any λ
    :param params: model parameters (their λ is ignored)
    :return: complex mismatch
    """

    local = params.at_lambda(datum.lam)
    return datum.regular.value_at_origin() - theta(abs(datum.q0), local) * datum.q0


def match_boundary(datum: InitialDatum, params: ModelParams, width: float = 1.0) -> InitialDatum:
    """Append a Gaussian of ``width`` that removes the boundary mismatch."""
    mismatch = boundary_mismatch(datum, params)
    if mismatch == 0:
        return datum
    anchor = GaussianTerm(amplitude=-mismatch, width=width)
    regular = RegularPart(gaussians=datum.regular.gaussians + (anchor,), green_terms=datum.regular.green_terms)
    return InitialDatum(regular=regular, q0=datum.q0, lam=datum.lam)


def matched_gaussian_datum(q0: complex, width: float, params: ModelParams) -> InitialDatum:
    """Charge q0 plus the single Gaussian that satisfies the boundary condition, at params.lam."""
    amplitude = theta(abs(q0), params) * q0
    regular = RegularPart(gaussians=(GaussianTerm(amplitude=amplitude, width=width),))
    return InitialDatum(regular=regular, q0=q0, lam=params.lam)


# ---------------------------------------------------------------------------
# Radial quadrature
# ---------------------------------------------------------------------------


def _panels(edges: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def _geometric_edges(lo: float, hi: float, ratio: float) -> np.ndarray:
    count = max(1, int(np.ceil(np.log(hi / lo) / np.log(ratio))))
    return np.geomspace(lo, hi, count + 1)


@dataclass(frozen=True)
class RadialQuadrature:
    """
    Weights for 2π∫g(k)k dk on [0, k_max] (``nodes``/``weights``) and on [k_max, 2k_max]
    (``tail_nodes``/``tail_weights``).

    For t_max > 0 the uniform panels are narrowed so that the phase k²t of free evolution
    turns by a bounded angle per panel up to ``k_resolve``.
    """

    k_max: float
    nodes: np.ndarray
    weights: np.ndarray
    tail_nodes: np.ndarray
    tail_weights: np.ndarray

    @classmethod
    def build(cls, k_max: float = DEFAULT_K_MAX, t_max: float = 0.0,
              k_resolve: float = DEFAULT_K_RESOLVE) -> "RadialQuadrature":
        if k_max <= 0:
            raise StatesError(f"k_max must be positive, got {k_max!r}")
        if t_max > 0:
            uniform_to = min(k_resolve, k_max)
            width = min(_BASE_PANEL, 2.0 / (uniform_to * t_max))
        else:
            uniform_to = min(_STATIC_RESOLVE, k_max)
            width = _BASE_PANEL
        uniform = np.linspace(0.0, uniform_to, int(np.ceil(uniform_to / width)) + 1)
        edges = uniform
        if k_max > uniform_to:
            edges = np.concatenate((uniform, _geometric_edges(uniform_to, k_max, _GEOMETRIC_RATIO)[1:]))
        nodes, weights = _panels(edges, _PANEL_ORDER)
        tail_nodes, tail_weights = _panels(_geometric_edges(k_max, 2.0 * k_max, _GEOMETRIC_RATIO), _PANEL_ORDER)
        return cls(k_max, nodes, 2.0 * np.pi * nodes * weights, tail_nodes, 2.0 * np.pi * tail_nodes * tail_weights)

    def integrate(self, values: np.ndarray) -> float:
        return float(np.real(self.weights @ values))

    def integrate_tail(self, values: np.ndarray) -> float:
        return float(np.real(self.tail_weights @ values))


def _power_tail(coeffs: dict[int, float], lo: float, hi: float = np.inf) -> float:
    """∫_lo^hi Σ_p coeffs[p]·k^{-p} dk for p > 1."""
    total = 0.0
    for p, c in coeffs.items():
        upper = 0.0 if np.isinf(hi) else hi ** (1 - p)
        total += c * (lo ** (1 - p) - upper) / (p - 1)
    return total


@dataclass(frozen=True)
class SpectralNorms:
    """‖ψ‖², ‖φ‖², ‖∇φ‖² of a radial spectral profile with the tail estimate of the mass integral."""

    mass2: float
    phi2: float
    grad_phi2: float
    tail_estimate: float


def spectral_norms(quad: RadialQuadrature, psi_hat: np.ndarray, phi_hat: np.ndarray,
                   psi_tail: np.ndarray, phi_tail: np.ndarray, c2: complex, c4: complex,
                   d4: complex) -> SpectralNorms:
    """
    Norms of ψ̂ ~ c2/k² + c4/k⁴ and φ̂ ~ d4/k⁴ with analytic tails past k_max.

    :param quad: radial quadrature
    :param psi_hat: ψ̂ at quad.nodes
    :param phi_hat: φ̂ at quad.nodes
    :param psi_tail: ψ̂ at quad.tail_nodes
    :param phi_tail: φ̂ at quad.tail_nodes
    :param c2: 1/k² coefficient of ψ̂
    :param c4: 1/k⁴ coefficient of ψ̂
    :param d4: 1/k⁴ coefficient of φ̂
    :return: SpectralNorms
    """

    two_pi = 2.0 * np.pi
    # 2π|ψ̂|²k ~ 2π(|c2|² k^-3 + 2Re(c2 c̄4) k^-5); 2π k³|φ̂|² ~ 2π|d4|² k^-5
    mass_model = {3: two_pi * abs(c2) ** 2, 5: two_pi * 2.0 * (c2 * np.conj(c4)).real}
    grad_model = {5: two_pi * abs(d4) ** 2}
    phi_model = {7: two_pi * abs(d4) ** 2}
    k, k2 = quad.k_max, 2.0 * quad.k_max

    mass2 = quad.integrate(np.abs(psi_hat) ** 2) + _power_tail(mass_model, k)
    phi2 = quad.integrate(np.abs(phi_hat) ** 2) + _power_tail(phi_model, k)
    grad_phi2 = quad.integrate(quad.nodes ** 2 * np.abs(phi_hat) ** 2) + _power_tail(grad_model, k)

    mass_gap = abs(quad.integrate_tail(np.abs(psi_tail) ** 2) - _power_tail(mass_model, k, k2))
    grad_gap = abs(quad.integrate_tail(quad.tail_nodes ** 2 * np.abs(phi_tail) ** 2) - _power_tail(grad_model, k, k2))
    return SpectralNorms(mass2, phi2, grad_phi2, mass_gap + grad_gap)


def energy_from_norms(norms: SpectralNorms, q: complex, params: ModelParams) -> float:
    """E = ‖∇φ‖² + λ‖φ‖² - λ‖ψ‖² + θ_λ(|q|)|q|² + σβ/(σ+1)|q|^{2σ+2} at params.lam."""
    s, lam = params.sigma, params.lam
    modulus = abs(q)
    return (norms.grad_phi2 + lam * norms.phi2 - lam * norms.mass2 + theta(modulus, params) * modulus ** 2
            + s * params.beta / (s + 1.0) * modulus ** (2.0 * s + 2.0))


def _check_tail(norms: SpectralNorms, tol: float) -> None:
    if norms.tail_estimate > tol * max(norms.mass2, np.finfo(float).tiny):
        raise QuadratureError("radial quadrature did not converge below k_max", norms.tail_estimate)


def datum_norms(datum: InitialDatum, quad: RadialQuadrature | None = None,
                tail_tol: float = DEFAULT_TAIL_TOL) -> SpectralNorms:
    """Spectral norms of ψ₀ and φ_λ with the datum's own λ."""
    quad = quad or RadialQuadrature.build()
    coeffs, poles = datum.log_terms()
    c2 = complex(coeffs.sum()) / (2.0 * np.pi)
    c4 = -complex(np.sum(coeffs * poles)) / (2.0 * np.pi)
    d4 = -sum((g.coefficient * g.pole for g in datum.regular.green_terms), 0j) / (2.0 * np.pi)
    norms = spectral_norms(quad, datum.psi_hat(quad.nodes), datum.regular.phi_hat(quad.nodes),
                           datum.psi_hat(quad.tail_nodes), datum.regular.phi_hat(quad.tail_nodes), c2, c4, d4)
    _check_tail(norms, tail_tol)
    return norms


def datum_mass(datum: InitialDatum, quad: RadialQuadrature | None = None) -> float:
    """‖ψ₀‖ in L²."""
    return float(np.sqrt(datum_norms(datum, quad).mass2))


def datum_energy(datum: InitialDatum, params: ModelParams, quad: RadialQuadrature | None = None) -> float:
    """
    Energy of ψ₀, evaluated in the datum's own frame.

    :param datum: datum at any λ
    :param params: model parameters (their λ is replaced by datum.lam)
    :param quad: radial quadrature
    :return: E(ψ₀)
    """

    return float(energy_from_norms(datum_norms(datum, quad), datum.q0, params.at_lambda(datum.lam)))


def _require_regular(datum: InitialDatum) -> None:
    if datum.regular.is_empty:
        raise StatesError("pure-charge data are rejected for the moment of inertia: "
                          "add a Gaussian or a Green pair to the regular part")


def inertia0(datum: InitialDatum, quad: RadialQuadrature | None = None) -> float:
    """M(0) = 2π∫|∂_kψ̂₀|²k dk, with the 2π|c2|²/K⁴ tail."""
    _require_regular(datum)
    quad = quad or RadialQuadrature.build()
    c2 = datum.q0 / (2.0 * np.pi)
    body = quad.integrate(np.abs(datum.dpsi_hat(quad.nodes)) ** 2)
    return body + 2.0 * np.pi * abs(c2) ** 2 / quad.k_max ** 4


def inertia_dot0(datum: InitialDatum, quad: RadialQuadrature | None = None) -> float:
    """Ṁ(0) = 8π Im∫ψ̂₀ conj(∂_kψ̂₀) k² dk."""
    _require_regular(datum)
    quad = quad or RadialQuadrature.build()
    k = quad.nodes
    integrand = np.imag(datum.psi_hat(k) * np.conj(datum.dpsi_hat(k))) * k
    return 4.0 * float(quad.weights @ integrand)
