"""
Reconstruction of ψ̂_t from a charge trajectory and the conserved or monitored observables.

    ψ̂_t(k) = e^{-ik²t}ψ̂₀(k) + (i/2π)∫₀ᵗ e^{-ik²(t-τ)}q(τ)dτ

The history integral uses the piecewise-linear charge and exact antiderivatives on each
subinterval, so the rule stays accurate for any k²h. ∂_kψ̂_t is obtained the same way from the
k-derivative of the integrand, which brings in a factor -2ik(t-τ).
"""

import logging
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field

from pointnls import PointNLSError, divide_chunks
from pointnls.charge import ChargeTrajectory
from pointnls.propagator import FrameError, InitialDatum, green_hat
from pointnls.states import (DEFAULT_K_MAX, DEFAULT_TAIL_TOL, ModelParams, RadialQuadrature, SpectralNorms,
                             datum_energy, energy_from_norms, spectral_norms)

logger = logging.getLogger(__name__)

_SERIES_RADIUS = 0.5
_SERIES_TERMS = 24
_K_CHUNK = 512
_SPACING_RTOL = 1e-9


class ObservablesError(PointNLSError):
    pass


class TailOverflowError(ObservablesError):
    def __init__(self, message: str, tail_estimate: float):
        super().__init__(f"{message} (tail estimate {tail_estimate:.3e})")
        self.tail_estimate = tail_estimate


@dataclass(frozen=True)
class SpectralSnapshot:
    t: float
    k_nodes: np.ndarray
    psi_hat: np.ndarray
    phi_hat: np.ndarray
    dpsi_hat: np.ndarray
    tail_estimate: float


class ObservableSample(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    t: float
    mass: float = Field(gt=0)
    energy: float
    inertia: float = Field(ge=0)
    virial_rhs: float


def _moments(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """μ_p(z) = ∫₀¹ v^p e^{zv} dv for p = 0, 1, 2."""
    m0 = np.empty_like(z)
    m1 = np.empty_like(z)
    m2 = np.empty_like(z)
    small = np.abs(z) < _SERIES_RADIUS
    if np.any(small):
        zs = z[small]
        term = np.ones_like(zs)
        s0, s1, s2 = np.zeros_like(zs), np.zeros_like(zs), np.zeros_like(zs)
        for m in range(_SERIES_TERMS):
            s0 += term / (m + 1)
            s1 += term / (m + 2)
            s2 += term / (m + 3)
            term = term * zs / (m + 1)
        m0[small], m1[small], m2[small] = s0, s1, s2
    big = ~small
    if np.any(big):
        zb = z[big]
        ez = np.exp(zb)
        m0[big] = (ez - 1.0) / zb
        m1[big] = (ez * (zb - 1.0) + 1.0) / zb ** 2
        m2[big] = (ez * (zb * zb - 2.0 * zb + 2.0) - 2.0) / zb ** 3
    return m0, m1, m2


def _history_nodes(trajectory: ChargeTrajectory, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and charges on [0, t], closing with the interpolated charge at t."""
    times, q = trajectory.times, trajectory.q
    inside = times < t
    nodes = np.append(times[inside], t)
    charges = np.append(q[inside], trajectory.charge_at(t))
    return nodes, charges


def _history(nodes: np.ndarray, charges: np.ndarray, t: float, k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(i/2π)∫₀ᵗ e^{-ik²(t-τ)}q dτ and its k-derivative for piecewise-linear q."""
    hist = np.zeros(k.shape, dtype=complex)
    dhist = np.zeros(k.shape, dtype=complex)
    if nodes.size < 2:
        return hist, dhist
    h = np.diff(nodes)
    b = t - nodes[:-1]
    q_left = charges[:-1]
    dq = np.diff(charges)
    for start, k_chunk in zip(range(0, k.size, _K_CHUNK), divide_chunks(k, _K_CHUNK)):
        alpha = k_chunk[:, None] ** 2
        phase = np.exp(-1j * alpha * b[None, :])
        m0, m1, m2 = _moments(1j * alpha * h[None, :])
        # ∫ over one interval in u = τ - τ_j: e^{-iαb}∫₀ʰ e^{iαu}(q_j + (Δq/h)u)du
        base = phase * (q_left * h * m0 + dq * h * m1)
        # s = b - u weights for the derivative: s·q = b q_j + (bΔq/h - q_j)u - (Δq/h)u²
        moment = phase * (b * q_left * h * m0 + (b * dq - q_left * h) * h * m1 - dq * h * h * m2)
        sl = slice(start, start + k_chunk.size)
        hist[sl] = 1j / (2.0 * np.pi) * base.sum(axis=1)
        dhist[sl] = k_chunk / np.pi * moment.sum(axis=1)
    return hist, dhist


def _require_frame(datum: InitialDatum) -> None:
    if datum.lam != 1.0:
        raise FrameError(f"observables are reconstructed in the lambda=1 frame, datum has lambda={datum.lam!r}")


def _check_time(trajectory: ChargeTrajectory, t: float) -> None:
    if t < 0 or t > trajectory.t_end:
        raise ObservablesError(f"t={t!r} lies outside the trajectory [0, {trajectory.t_end!r}]")


def _reconstruct(trajectory: ChargeTrajectory, datum: InitialDatum, t: float,
                 k: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    nodes, charges = _history_nodes(trajectory, t)
    free = np.exp(-1j * k ** 2 * t)
    psi0, dpsi0 = datum.psi_hat(k), datum.dpsi_hat(k)
    hist, dhist = _history(nodes, charges, t, k)
    return free * psi0 + hist, free * (dpsi0 - 2j * k * t * psi0) + dhist


def psi_hat_at(trajectory: ChargeTrajectory, datum: InitialDatum, t: float, k: ArrayLike) -> np.ndarray | complex:
    """
    ψ̂_t(k) from the charge history.

    :param trajectory: solved charge trajectory
    :param datum: the datum the trajectory was solved from (lambda=1)
    :param t: time inside the trajectory
    :param k: radial wavenumber(s)
    :return: complex value(s)
    """

    _require_frame(datum)
    _check_time(trajectory, t)
    arr = np.asarray(k, dtype=float)
    psi, _ = _reconstruct(trajectory, datum, t, np.atleast_1d(arr))
    return complex(psi[0]) if arr.ndim == 0 else psi


def _charge_slope(trajectory: ChargeTrajectory, t: float) -> complex:
    times, q = trajectory.times, trajectory.q
    if times.size < 2:
        return 0j
    j = int(np.clip(np.searchsorted(times, t) - 1, 0, times.size - 2))
    return complex((q[j + 1] - q[j]) / (times[j + 1] - times[j]))


def _evaluate(trajectory: ChargeTrajectory, datum: InitialDatum, t: float,
              quad: RadialQuadrature) -> tuple[SpectralSnapshot, SpectralNorms, complex]:
    _require_frame(datum)
    _check_time(trajectory, t)
    k_all = np.concatenate((quad.nodes, quad.tail_nodes))
    psi, dpsi = _reconstruct(trajectory, datum, t, k_all)
    q_t = trajectory.charge_at(t)
    phi = psi - green_hat(q_t, 1.0, k_all)
    # ψ̂_t ~ q/(2πk²) + iq'/(2πk⁴); φ̂_t picks up q/(2πk⁴) from subtracting G₁
    c2 = q_t / (2.0 * np.pi)
    c4 = 1j * _charge_slope(trajectory, t) / (2.0 * np.pi)
    split = quad.nodes.size
    norms = spectral_norms(quad, psi[:split], phi[:split], psi[split:], phi[split:], c2, c4, c2 + c4)
    snapshot = SpectralSnapshot(t, quad.nodes, psi[:split], phi[:split], dpsi[:split], norms.tail_estimate)
    return snapshot, norms, q_t


def spectral_snapshot(trajectory: ChargeTrajectory, datum: InitialDatum, t: float,
                      quad: RadialQuadrature) -> SpectralSnapshot:
    """ψ̂_t, φ̂_t and ∂_kψ̂_t on the quadrature nodes, with the tail estimate of the norms."""
    return _evaluate(trajectory, datum, t, quad)[0]


def virial_rhs(energy0: float, q: complex, params: ModelParams) -> float:
    """8E(0) + 2(1/π - 4βσ/(σ+1)|q|^{2σ})|q|²"""
    s = params.sigma
    modulus = abs(q)
    return 8.0 * energy0 + 2.0 * (1.0 / np.pi - 4.0 * params.beta * s / (s + 1.0) * modulus ** (2.0 * s)) * modulus ** 2


def inertia_envelope(m0: float, mdot0: float, energy0: float, threshold: float, t: ArrayLike) -> np.ndarray:
    """Concave upper envelope M(0) + Ṁ(0)t + 4(E(0) - Λ)t² of the moment of inertia."""
    t = np.asarray(t, dtype=float)
    return m0 + mdot0 * t + 4.0 * (energy0 - threshold) * t ** 2


class ObservableEvaluator:
    """
    Evaluates observables of one run on a shared radial grid.

    The grid resolves the free phase k²t up to the end of the trajectory, so samples at
    different times use identical quadrature nodes.
    """

    def __init__(self, trajectory: ChargeTrajectory, datum: InitialDatum, k_max: float = DEFAULT_K_MAX,
                 tail_tol: float = DEFAULT_TAIL_TOL):
        _require_frame(datum)
        self.trajectory = trajectory
        self.datum = datum
        self.params = trajectory.params
        self.tail_tol = tail_tol
        self.quad = RadialQuadrature.build(k_max=k_max, t_max=trajectory.t_end)
        self.energy0 = datum_energy(datum, self.params)

    def sample(self, t: float) -> ObservableSample:
        snap, norms, q_t = _evaluate(self.trajectory, self.datum, t, self.quad)
        if snap.tail_estimate > self.tail_tol * norms.mass2:
            raise TailOverflowError(f"spectral snapshot at t={t!r} rejected", snap.tail_estimate)
        quad = self.quad
        inertia = quad.integrate(np.abs(snap.dpsi_hat) ** 2) + abs(q_t) ** 2 / (2.0 * np.pi * quad.k_max ** 4)
        energy = energy_from_norms(norms, q_t, self.params)
        return ObservableSample(t=t, mass=float(np.sqrt(norms.mass2)), energy=float(energy), inertia=inertia,
                                virial_rhs=virial_rhs(self.energy0, q_t, self.params))


def observables_at(trajectory: ChargeTrajectory, datum: InitialDatum, t: float,
                   k_max: float = DEFAULT_K_MAX) -> ObservableSample:
    """
    Mass, energy, moment of inertia and virial right-hand side at time t.

    :param trajectory: solved charge trajectory (carries the model parameters)
    :param datum: datum at lambda=1
    :param t: time inside the trajectory
    :param k_max: radial cutoff
    :return: ObservableSample
    """

    return ObservableEvaluator(trajectory, datum, k_max).sample(t)


def observable_series(trajectory: ChargeTrajectory, datum: InitialDatum, sample_times: ArrayLike,
                      k_max: float = DEFAULT_K_MAX) -> pd.DataFrame:
    """Table t, mass, energy, inertia at the requested times."""
    evaluator = ObservableEvaluator(trajectory, datum, k_max)
    rows = [evaluator.sample(float(t)) for t in np.asarray(sample_times, dtype=float)]
    return pd.DataFrame({
        "t": [r.t for r in rows],
        "mass": [r.mass for r in rows],
        "energy": [r.energy for r in rows],
        "inertia": [r.inertia for r in rows],
    })


def virial_report(trajectory: ChargeTrajectory, datum: InitialDatum, sample_times: ArrayLike,
                  cadence: float, k_max: float = DEFAULT_K_MAX) -> pd.DataFrame:
    """
    Compare the second central difference of M with the virial right-hand side.

    :param trajectory: solved charge trajectory
    :param datum: datum at lambda=1
    :param sample_times: interior times, spaced by at least two cadences
    :param cadence: finite-difference step δ
    :param k_max: radial cutoff
    :return: DataFrame with columns t, M, d2M_fd, rhs, gap
    """

    times = np.asarray(sample_times, dtype=float)
    if times.size == 0:
        raise ObservablesError("virial report needs at least one sample time")
    if cadence <= 0:
        raise ObservablesError(f"cadence must be positive, got {cadence!r}")
    slack = _SPACING_RTOL * cadence
    if np.any(np.diff(times) < 2.0 * cadence - slack):
        raise ObservablesError("virial sample times must be increasing and spaced by at least two cadences")
    if times[0] - cadence < -slack or times[-1] + cadence > trajectory.t_end + slack:
        raise ObservablesError("virial sample times must stay one cadence inside the run")

    evaluator = ObservableEvaluator(trajectory, datum, k_max)
    rows = []
    for t in times:
        before, centre, after = (evaluator.sample(min(max(float(t) + d, 0.0), trajectory.t_end))
                                 for d in (-cadence, 0.0, cadence))
        d2m = (after.inertia - 2.0 * centre.inertia + before.inertia) / cadence ** 2
        rhs = centre.virial_rhs
        rows.append((t, centre.inertia, d2m, rhs, abs(d2m - rhs) / max(abs(rhs), np.finfo(float).tiny)))
    logger.info("Virial report on %d samples, worst gap %.3e", len(rows), max(r[-1] for r in rows))
    return pd.DataFrame(rows, columns=["t", "M", "d2M_fd", "rhs", "gap"])
