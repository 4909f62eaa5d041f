"""
Forward solver for the charge equation in the λ = 1 frame,

    q(t) + ∫₀ᵗ I(t-τ)·F(q(τ)) dτ = f(t),    F(q) = (κ - 4πβ|q|^{2σ})q,

marched node by node with piecewise-linear product integration. The implicit equation at each
node is a scalar complex equation solved by fixed-point iteration with a Newton fallback; steps
are halved on non-convergence or excessive growth and never coarsened again.
"""

import logging
from dataclasses import dataclass
from enum import Enum
try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy import interpolate, optimize

from pointnls import PointNLSError
from pointnls.propagator import (FrameError, InitialDatum, TimeLattice, closed_form_forcing, product_weights,
                                 remainder_trace)
from pointnls.specfun import KernelTable
from pointnls.states import KAPPA, ModelParams, boundary_mismatch

logger = logging.getLogger(__name__)

UNDAMPED_ITERATIONS = 10
DAMPING = 0.5
GROWTH_EVENTS_FOR_BLOWUP = 3
# charge_residual doubles tick counts
MAX_TICKS = 2 ** 61
_MISMATCH_RTOL = 1e-8


class ChargeError(PointNLSError):
    pass


class RunStatus(str, Enum):
    COMPLETED = "Completed"
    BLOWUP = "BlowupDetected"
    TOLERANCE = "ToleranceFailure"


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    t_end: float = Field(gt=0)
    h_init: float = Field(default=1e-3, gt=0)
    h_min: float = Field(default=1e-9, gt=0)
    tol_fp: float = Field(default=1e-12, gt=0)
    q_cap: float = Field(default=1e6, gt=0)
    max_iter: int = Field(default=100, gt=0)
    growth_limit: float = Field(default=0.1, gt=0)

    @model_validator(mode="after")
    def _check_steps(self) -> Self:
        if not self.h_min < self.h_init <= self.t_end:
            raise ValueError(f"need h_min < h_init <= t_end, got {self.h_min!r}, {self.h_init!r}, {self.t_end!r}")
        if self.t_end / self.lattice_quantum >= MAX_TICKS:
            raise ValueError(f"t_end/h_min={self.t_end / self.h_min:.3g} overflows the tick lattice; raise h_min")
        return self

    @property
    def lattice_quantum(self) -> float:
        """Tick length fine enough for every step the halving can reach above h_min."""
        levels = int(np.ceil(np.log2(self.h_init / self.h_min))) + 1
        return self.h_init / 2 ** levels


@dataclass(frozen=True)
class ChargeTrajectory:
    times: np.ndarray
    q: np.ndarray
    status: RunStatus
    residual_norm: np.ndarray
    params: ModelParams
    quantum: float
    t_stop: float | None = None

    def __post_init__(self):
        if self.times.ndim != 1 or self.times.size == 0 or self.times[0] != 0.0:
            raise ChargeError("trajectory times must start at 0")
        if np.any(np.diff(self.times) <= 0):
            raise ChargeError("trajectory times must be strictly increasing")
        if self.q.shape != self.times.shape or self.residual_norm.shape != self.times.shape:
            raise ChargeError("trajectory arrays must be aligned with times")
        for arr in (self.times, self.q, self.residual_norm):
            arr.setflags(write=False)

    @property
    def t_est(self) -> float | None:
        return self.t_stop if self.status is RunStatus.BLOWUP else None

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    def lattice(self) -> TimeLattice:
        ticks = np.rint(self.times / self.quantum).astype(np.int64)
        if np.any(ticks * self.quantum != self.times):
            raise ChargeError("trajectory times are not on the tick lattice of the stored quantum")
        return TimeLattice(self.quantum, ticks)

    def charge_at(self, t: float) -> complex:
        """Piecewise-linear charge at ``t`` inside the run."""
        if t < 0 or t > self.t_end:
            raise ChargeError(f"t={t!r} outside the trajectory [0, {self.t_end!r}]")
        return complex(np.interp(t, self.times, self.q.real) + 1j * np.interp(t, self.times, self.q.imag))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": self.times,
            "Re_q": self.q.real,
            "Im_q": self.q.imag,
            "abs_q": np.abs(self.q),
            "residual": self.residual_norm,
        })


def nonlinearity(q: np.ndarray | complex, params: ModelParams) -> np.ndarray | complex:
    """F(q) = (κ - 4πβ|q|^{2σ})q"""
    return (KAPPA - 4.0 * np.pi * params.beta * np.abs(q) ** (2.0 * params.sigma)) * q


def _newton_system(weight: float, rhs: complex, params: ModelParams):
    strength = 4.0 * np.pi * params.beta
    two_sigma = 2.0 * params.sigma

    def system(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q = complex(x[0], x[1])
        rho2 = x[0] ** 2 + x[1] ** 2
        coupling = KAPPA - strength * rho2 ** params.sigma
        g = q + weight * coupling * q - rhs
        # d|q|^{2σ}/dx = 2σ|q|^{2σ-2}x, which vanishes at q = 0 for σ > 0
        slope = rho2 ** (params.sigma - 1.0) if rho2 > 0 else 0.0
        dx = 1.0 + weight * coupling - weight * strength * two_sigma * slope * x[0] * q
        dy = 1j * (1.0 + weight * coupling) - weight * strength * two_sigma * slope * x[1] * q
        jac = np.array([[dx.real, dy.real], [dx.imag, dy.imag]])
        return np.array([g.real, g.imag]), jac

    return system


def solve_node(weight: float, rhs: complex, guess: complex, params: ModelParams,
               config: SolverConfig) -> complex | None:
    """
    Solve q + weight·F(q) = rhs.

    :return: the root, or None when neither iteration converges
    """

    q = guess
    for it in range(config.max_iter):
        update = rhs - weight * nonlinearity(q, params)
        if it >= UNDAMPED_ITERATIONS:
            update = (1.0 - DAMPING) * q + DAMPING * update
        if not np.isfinite(update):
            break
        if abs(update - q) <= config.tol_fp * (1.0 + abs(update)):
            return complex(update)
        q = update

    system = _newton_system(weight, rhs, params)
    result = optimize.root(system, np.array([guess.real, guess.imag]), jac=True, method="hybr",
                           options={"xtol": config.tol_fp})
    if result.success:
        root = complex(result.x[0], result.x[1])
        if abs(system(result.x)[0] @ [1.0, 1j]) <= 10.0 * config.tol_fp * (1.0 + abs(root)):
            logger.debug("Newton fallback converged after fixed-point failure")
            return root
    return None


def _require_frame(datum: InitialDatum, params: ModelParams) -> None:
    if datum.lam != 1.0 or params.lam != 1.0:
        raise FrameError("the charge equation is solved in the lambda=1 frame; rebase the datum and parameters")


def solve_charge(params: ModelParams, datum: InitialDatum, config: SolverConfig,
                 compute_residual: bool = True) -> ChargeTrajectory:
    """
    March the charge equation from q(0) = datum.q0 up to config.t_end.

    :param params: model parameters at lambda=1
    :param datum: datum at lambda=1
    :param config: solver configuration
    :param compute_residual: attach the refined-grid residual to every node
    :return: ChargeTrajectory with status Completed, BlowupDetected or ToleranceFailure
    """

    _require_frame(datum, params)
    if abs(datum.q0) >= config.q_cap:
        raise ChargeError(f"q_cap={config.q_cap!r} must exceed |q0|={abs(datum.q0)!r}")
    if params.below_half:
        logger.warning("sigma=%g < 1/2 lies outside the proven well-posedness range; results are experimental",
                       params.sigma)
    mismatch = boundary_mismatch(datum, params)
    if abs(mismatch) > _MISMATCH_RTOL * (1.0 + abs(datum.q0)):
        logger.warning("Datum misses the boundary condition by %.3e; expect a boundary layer in q near t=0",
                       abs(mismatch))

    quantum = config.lattice_quantum
    end_tick = int(np.rint(config.t_end / quantum))
    step = int(np.rint(config.h_init / quantum))
    min_step = config.h_min / quantum
    table = KernelTable.build(np.arange(1, end_tick // step + 1) * step * quantum)

    ticks = [0]
    charges = [complex(datum.q0)]
    remainders = [complex(remainder_trace(datum, 0.0)[0])]
    forces = [complex(nonlinearity(datum.q0, params))]
    status = RunStatus.COMPLETED
    growth_events = 0
    logger.info("Solving charge equation: sigma=%g beta=%g t_end=%g h=%g", params.sigma, params.beta,
                config.t_end, config.h_init)

    while ticks[-1] < end_tick:
        this_step = min(step, end_tick - ticks[-1])
        lattice = TimeLattice(quantum, np.array(ticks + [ticks[-1] + this_step], dtype=np.int64))
        n = len(ticks)
        table = table.extend(lattice.differences(n)[:-1])
        t_new = lattice.times[n]
        weights = product_weights(table, lattice, n)
        r_new = complex(remainder_trace(datum, t_new)[0])
        history = weights[:-1] @ (np.array(remainders) - np.array(forces))
        rhs = complex(closed_form_forcing(datum, np.array([t_new]), table)[0]) + history + weights[-1] * r_new

        q_prev = charges[-1]
        if n >= 2:
            prev_step = ticks[-1] - ticks[-2]
            guess = q_prev + (q_prev - charges[-2]) * this_step / prev_step
        else:
            guess = q_prev
        q_new = solve_node(float(weights[-1]), rhs, guess, params, config)

        growing = n >= 2 and abs(q_prev) > abs(charges[-2])
        too_fast = q_new is not None and abs(q_new - q_prev) > config.growth_limit * max(abs(q_prev), 1.0)
        if q_new is None or too_fast:
            if too_fast or growing:
                growth_events += 1
            step //= 2
            logger.debug("Rejected step at t=%g (%s); h -> %g", t_new,
                         "growth" if too_fast else "no convergence", step * quantum)
            if step < min_step or step < 2:
                status = RunStatus.BLOWUP if growth_events >= GROWTH_EVENTS_FOR_BLOWUP else RunStatus.TOLERANCE
                break
            continue

        ticks.append(ticks[-1] + this_step)
        charges.append(q_new)
        remainders.append(r_new)
        forces.append(complex(nonlinearity(q_new, params)))
        if abs(q_new) <= abs(q_prev):
            growth_events = 0
        if abs(q_new) >= config.q_cap:
            status = RunStatus.BLOWUP
            break

    times = np.array(ticks, dtype=np.int64) * quantum
    q = np.array(charges)
    t_stop = None if status is RunStatus.COMPLETED else float(times[-1])
    if status is RunStatus.COMPLETED:
        logger.info("Charge run completed on %d nodes", times.size)
    else:
        logger.warning("Charge run stopped with %s at t=%.10g (|q|=%.6g)", status.value, t_stop, abs(q[-1]))

    trajectory = ChargeTrajectory(times, q, status, np.zeros(times.size), params, quantum, t_stop)
    if not compute_residual:
        return trajectory
    residual = charge_residual(trajectory, params, datum)
    return ChargeTrajectory(times, q, status, residual, params, quantum, t_stop)


def _midpoint_charges(times: np.ndarray, q: np.ndarray, mids: np.ndarray) -> np.ndarray:
    real = interpolate.CubicSpline(times, q.real)(mids)
    imag = interpolate.CubicSpline(times, q.imag)(mids)
    return real + 1j * imag


def charge_residual(trajectory: ChargeTrajectory, params: ModelParams, datum: InitialDatum) -> np.ndarray:
    """
    A-posteriori residual of the charge equation at every trajectory node.

    Midpoints are inserted with cubic-spline charges, weights and forcing are rebuilt on the
    refined grid, and |q_n + Σ_j w_{n,j}F(q_j) - f(t_n)| is reported at the original nodes.

    :param trajectory: charges on a tick lattice
    :param params: model parameters at lambda=1
    :param datum: datum at lambda=1 with datum.q0 == trajectory.q[0]
    :return: nonnegative residual per node
    """

    _require_frame(datum, params)
    if trajectory.q[0] != datum.q0:
        raise ChargeError("trajectory does not start at the datum's charge")
    coarse = trajectory.lattice()
    if coarse.ticks.size == 1:
        return np.zeros(1)

    ticks2 = coarse.ticks * 2
    mids = ticks2[:-1] + (ticks2[1:] - ticks2[:-1]) // 2
    fine_ticks = np.empty(2 * ticks2.size - 1, dtype=np.int64)
    fine_ticks[0::2] = ticks2
    fine_ticks[1::2] = mids
    fine = TimeLattice(0.5 * coarse.quantum, fine_ticks)
    fine_times = fine.times

    q_fine = np.empty(fine_ticks.size, dtype=complex)
    q_fine[0::2] = trajectory.q
    q_fine[1::2] = _midpoint_charges(trajectory.times, trajectory.q, fine_times[1::2])

    targets = np.arange(0, fine_ticks.size, 2)
    table = fine.kernel_table(targets=targets)
    integrand = np.asarray(nonlinearity(q_fine, params)) - remainder_trace(datum, fine_times)
    closed = closed_form_forcing(datum, fine_times[targets], table)
    residual = np.array([abs(q_fine[n] + product_weights(table, fine, n) @ integrand[: n + 1] - closed[i])
                         for i, n in enumerate(targets)])
    logger.debug("Residual max %.3e over %d nodes", residual.max(), residual.size)
    return residual
