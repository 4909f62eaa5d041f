"""
Initial data, free-evolution origin traces and the forcing of the charge equation.

Data are radial and built from two primitive families, Gaussians a·e^{-|x|²/(2w²)} and Green
functions c·G_μ with G_μ = K₀(√μ|x|)/(2π). With the unitary transform
f̂(k) = (1/2π)∫e^{-ix·k}f(x)dx their transforms are a w² e^{-k²w²/2} and c/(2π(k²+μ)).

The forcing f(t) = 4π∫₀ᵗ I(t-τ)(U₀(τ)ψ₀)(0)dτ is assembled through the Sonine split

    4π(U₀(τ)ψ₀)(0) = C(-γ - log τ) + D τ(-γ - log τ) + R(τ),

where C = Σc (charge included) and D = Σ iμc. The first two pieces convolve with I in closed
form, I*(-γ - log) = 1 and I*[τ(-γ - log τ)] = t - tN(t) + N1(t); the remainder R, which is
continuous with at most a τ² log τ singularity, goes through piecewise-linear product integration.
"""

import logging
from dataclasses import dataclass
from typing import Any

try:
    from typing import Self
except ImportError:  # Python < 3.11
    from typing_extensions import Self

import numpy as np
from numpy.typing import ArrayLike
from pydantic import BaseModel, ConfigDict, Field, model_validator

from pointnls import PointNLSError, divide_chunks
from pointnls.specfun import EULER_GAMMA, KernelTable, cin, macdonald_k0, sici

logger = logging.getLogger(__name__)

LATTICE_BITS = 10
_POLE_SUM_RTOL = 1e-12
_SERIES_CUT = 0.5
_DIFF_CHUNK = 256
_MAX_TICKS = 2 ** 62


class PropagatorError(PointNLSError):
    pass


class FrameError(PropagatorError):
    pass


class GaussianTerm(BaseModel):
    """a·exp(-|x|²/(2w²))"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    amplitude: complex
    width: float = Field(gt=0)

    def hat(self, k: np.ndarray) -> np.ndarray:
        w2 = self.width ** 2
        return self.amplitude * w2 * np.exp(-0.5 * w2 * k ** 2)

    def dhat(self, k: np.ndarray) -> np.ndarray:
        w2 = self.width ** 2
        return -self.amplitude * w2 ** 2 * k * np.exp(-0.5 * w2 * k ** 2)

    def value(self, r: np.ndarray) -> np.ndarray:
        return self.amplitude * np.exp(-0.5 * (r / self.width) ** 2)

    def trace(self, tau: np.ndarray) -> np.ndarray:
        w2 = self.width ** 2
        return self.amplitude * w2 / (w2 + 2j * tau)


class GreenTerm(BaseModel):
    """c·G_μ"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    coefficient: complex
    pole: float = Field(gt=0)


def green_hat(coefficient: complex, pole: float, k: np.ndarray) -> np.ndarray:
    return coefficient / (2.0 * np.pi * (k ** 2 + pole))


def green_dhat(coefficient: complex, pole: float, k: np.ndarray) -> np.ndarray:
    return -coefficient * k / (np.pi * (k ** 2 + pole) ** 2)


def green_value(coefficient: complex, pole: float, r: ArrayLike) -> np.ndarray:
    return coefficient * macdonald_k0(np.sqrt(pole) * np.asarray(r, dtype=float)) / (2.0 * np.pi)


class RegularPart(BaseModel):
    """
    Regular part φ_λ of a datum: Gaussians plus a zero-sum combination of Green functions.

    The zero-sum condition cancels the log singularity at the origin and the 1/k² tail of the
    transform, so φ_λ lies in H².
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    gaussians: tuple[GaussianTerm, ...] = ()
    green_terms: tuple[GreenTerm, ...] = ()

    @model_validator(mode="after")
    def _check_poles(self) -> Self:
        poles = [g.pole for g in self.green_terms]
        if len(set(poles)) != len(poles):
            dupes = sorted({p for p in poles if poles.count(p) > 1})
            raise ValueError(f"duplicate Green poles {dupes}: merge their coefficients into one term")
        total = sum((g.coefficient for g in self.green_terms), 0j)
        scale = max((abs(g.coefficient) for g in self.green_terms), default=0.0)
        if abs(total) > _POLE_SUM_RTOL * max(scale, 1.0):
            raise ValueError(f"Green coefficients must sum to zero, got {total!r}")
        return self

    @property
    def is_empty(self) -> bool:
        return not self.gaussians and not self.green_terms

    def phi_hat(self, k: ArrayLike) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape, dtype=complex)
        for g in self.gaussians:
            out += g.hat(k)
        for g in self.green_terms:
            out += green_hat(g.coefficient, g.pole, k)
        return out

    def dphi_hat(self, k: ArrayLike) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        out = np.zeros(k.shape, dtype=complex)
        for g in self.gaussians:
            out += g.dhat(k)
        for g in self.green_terms:
            out += green_dhat(g.coefficient, g.pole, k)
        return out

    def value(self, r: ArrayLike) -> np.ndarray:
        """φ(r); the origin takes the finite limit of value_at_origin."""
        r = np.asarray(r, dtype=float)
        out = np.zeros(r.shape, dtype=complex)
        for g in self.gaussians:
            out += g.value(r)
        if self.green_terms:
            origin = r == 0
            away = np.where(origin, 1.0, r)
            for g in self.green_terms:
                out += np.where(origin, 0.0, green_value(g.coefficient, g.pole, away))
            out[origin] = self.value_at_origin()
        return out

    def value_at_origin(self) -> complex:
        """φ(0) = Σa - (1/4π)Σ c log μ (finite thanks to the zero-sum condition)."""
        gauss = sum((g.amplitude for g in self.gaussians), 0j)
        green = sum((g.coefficient * np.log(g.pole) for g in self.green_terms), 0j)
        return complex(gauss - green / (4.0 * np.pi))


class InitialDatum(BaseModel):
    """ψ₀ = φ_λ + q0·G_λ"""

    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    regular: RegularPart = RegularPart()
    q0: complex = 0j
    lam: float = Field(default=1.0, gt=0, alias="lambda")

    def log_terms(self) -> tuple[np.ndarray, np.ndarray]:
        """Coefficients and poles of every Green-type term, the charge included."""
        coeffs = [g.coefficient for g in self.regular.green_terms] + [self.q0]
        poles = [g.pole for g in self.regular.green_terms] + [self.lam]
        return np.array(coeffs, dtype=complex), np.array(poles, dtype=float)

    def psi_hat(self, k: ArrayLike) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return self.regular.phi_hat(k) + green_hat(self.q0, self.lam, k)

    def dpsi_hat(self, k: ArrayLike) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return self.regular.dphi_hat(k) + green_dhat(self.q0, self.lam, k)

    def value(self, r: ArrayLike) -> np.ndarray:
        """
        Sample ψ₀ at radii ``r``.

        :param r: nonnegative radii; r = 0 only for chargeless data
        :return: complex samples
        """

        r = np.asarray(r, dtype=float)
        out = self.regular.value(r)
        if self.q0 == 0:
            return out
        if np.any(r == 0):
            raise PropagatorError(f"psi0 has a logarithmic singularity at r=0 for q0={self.q0!r}")
        return out + green_value(self.q0, self.lam, r)


def _require_frame(datum: InitialDatum) -> None:
    if datum.lam != 1.0:
        raise FrameError(f"datum is represented at lambda={datum.lam!r}; rebase it to lambda=1 first")


def _positive_times(tau: ArrayLike) -> tuple[np.ndarray, bool]:
    arr = np.asarray(tau, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
        raise PropagatorError("origin trace needs tau > 0; the log singularity at 0 lives in the forcing split")
    return arr, scalar


def origin_trace(datum: InitialDatum, tau: ArrayLike) -> Any:
    """
    Free-evolution trace (U₀(τ)ψ₀)(0).

    :param datum: initial datum, any frame
    :param tau: positive time(s)
    :return: complex trace, scalar for scalar input
    """

    t, scalar = _positive_times(tau)
    out = np.zeros(t.shape, dtype=complex)
    for g in datum.regular.gaussians:
        out += g.trace(t)
    coeffs, poles = datum.log_terms()
    for c, mu in zip(coeffs, poles):
        if c == 0:
            continue
        si, ci = sici(mu * t)
        out += c / (4.0 * np.pi) * np.exp(1j * mu * t) * (-ci + 1j * si)
    return complex(out[0]) if scalar else out


def _expi_minus_linear(x: np.ndarray) -> np.ndarray:
    """e^{ix} - 1 - ix without cancellation for small x."""
    cos_part = -2.0 * np.sin(0.5 * x) ** 2
    small = np.abs(x) < _SERIES_CUT
    sin_part = np.sin(x) - x
    xs = x[small]
    x2 = xs * xs
    sin_part[small] = -xs * x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0 * (1.0 - x2 / 72.0 * (1.0 - x2 / 110.0 * (1.0 - x2 / 156.0)))))
    return cos_part + 1j * sin_part


def log_coefficients(datum: InitialDatum) -> tuple[complex, complex]:
    """
    Coefficients (C, D) of the closed-form pieces C(-γ - log τ) and Dτ(-γ - log τ).

    :param datum: initial datum
    :return: (C, D) with C = Σc and D = Σ iμc over Green terms and the charge
    """

    coeffs, poles = datum.log_terms()
    return complex(coeffs.sum()), complex(1j * np.sum(coeffs * poles))


def remainder_trace(datum: InitialDatum, tau: ArrayLike) -> np.ndarray:
    """
    R(τ) = 4π(U₀(τ)ψ₀)(0) - C(-γ - log τ) - Dτ(-γ - log τ), continuous on [0, ∞).

    :param datum: initial datum
    :param tau: nonnegative times
    :return: complex values, with R(0) = 4πΣa - Σc log μ - iπC/2
    """

    t = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(t < 0):
        raise PropagatorError("remainder trace needs tau >= 0")
    out = np.zeros(t.shape, dtype=complex)
    for g in datum.regular.gaussians:
        out += 4.0 * np.pi * g.trace(t)
    coeffs, poles = datum.log_terms()
    pos = t > 0
    tp = t[pos]
    log_factor = -EULER_GAMMA - np.log(tp)
    for c, mu in zip(coeffs, poles):
        if c == 0:
            continue
        x = mu * tp
        si, _ = sici(x)
        out[pos] += c * (_expi_minus_linear(x) * log_factor + np.exp(1j * x) * (cin(x) - np.log(mu) + 1j * si))
        out[~pos] += c * (-np.log(mu) - 0.5j * np.pi)
    return out


@dataclass(frozen=True)
class TimeLattice:
    """
    Time nodes stored as integer ticks of a fixed quantum.

    Differences of nodes are then exact multiples of the quantum, which is what lets weights
    read N and N1 at exact kernel-table breakpoints.
    """

    quantum: float
    ticks: np.ndarray

    def __post_init__(self):
        if self.ticks.ndim != 1 or self.ticks.size == 0 or self.ticks[0] != 0:
            raise PropagatorError("time grid must start at 0")
        if np.any(np.diff(self.ticks) <= 0):
            raise PropagatorError("time grid must be strictly increasing")
        self.ticks.setflags(write=False)

    @classmethod
    def from_times(cls, times: ArrayLike, quantum: float | None = None) -> "TimeLattice":
        """
        Snap ``times`` onto a tick lattice.

        Without an explicit quantum, 2^-LATTICE_BITS of the smallest step is used, so nodes move
        by far less than a step.

        :param times: increasing nodes starting at 0
        :param quantum: tick length
        :return: TimeLattice
        """

        t = np.asarray(times, dtype=float)
        if t.ndim != 1 or t.size == 0 or t[0] != 0.0:
            raise PropagatorError("time grid must be one-dimensional and start at 0")
        steps = np.diff(t)
        if np.any(steps <= 0):
            raise PropagatorError("time grid must be strictly increasing")
        if quantum is None:
            quantum = float(steps.min()) / 2 ** LATTICE_BITS if steps.size else 1.0
        if t[-1] / quantum >= _MAX_TICKS:
            raise PropagatorError(f"time grid spans {t[-1] / quantum:.3g} ticks of {quantum!r}, beyond the int64 tick range")
        return cls(float(quantum), np.rint(t / quantum).astype(np.int64))

    @property
    def times(self) -> np.ndarray:
        return self.ticks * self.quantum

    def differences(self, n: int) -> np.ndarray:
        """t_n - τ_j for j = 0..n"""
        return (self.ticks[n] - self.ticks[: n + 1]) * self.quantum

    def all_differences(self, targets: np.ndarray | None = None) -> np.ndarray:
        """
        Distinct positive differences t_n - τ_j (j < n) for the target node indices.

        :param targets: node indices n, every node when omitted
        :return: sorted differences
        """

        targets = np.arange(self.ticks.size) if targets is None else np.asarray(targets)
        found = np.zeros(0, dtype=np.int64)
        for rows in divide_chunks(targets, _DIFF_CHUNK):
            diffs = self.ticks[rows][:, None] - self.ticks[None, :]
            found = np.union1d(found, diffs[diffs > 0])
        return found * self.quantum

    def kernel_table(self, table: KernelTable | None = None, targets: np.ndarray | None = None) -> KernelTable:
        """Kernel table covering every difference needed by the target nodes."""
        needed = self.all_differences(targets)
        if table is None:
            return KernelTable.build(needed)
        return table.extend(needed)


def product_weights(table: KernelTable, lattice: TimeLattice, n: int, rule: str = "linear") -> np.ndarray:
    """
    Weights w_{n,j} with ∫₀^{t_n} I(t_n-τ)g(τ)dτ ≈ Σ_j w_{n,j} g(τ_j).

    The "linear" rule integrates piecewise-linear g exactly; "midpoint" (debug) integrates the
    piecewise-constant average of the end values.

    :param table: kernel table holding every difference t_n - τ_j
    :param lattice: time nodes
    :param n: target node index
    :param rule: "linear" or "midpoint"
    :return: array of n + 1 weights
    """

    w = np.zeros(n + 1)
    if n == 0:
        return w
    s = lattice.differences(n)
    n_s, n1_s = table.lookup(s)
    big_a = n_s[:-1] - n_s[1:]
    if rule == "midpoint":
        w[:-1] += 0.5 * big_a
        w[1:] += 0.5 * big_a
        return w
    if rule != "linear":
        raise PropagatorError(f"unknown product-integration rule {rule!r}")
    h = np.diff(lattice.ticks[: n + 1]) * lattice.quantum
    big_b = (s[:-1] * big_a - (n1_s[:-1] - n1_s[1:])) / h
    w[:-1] += big_a - big_b
    w[1:] += big_b
    return w


def product_integrate(grid: ArrayLike, values: ArrayLike, table: KernelTable | None = None,
                      rule: str = "linear", quantum: float | None = None) -> np.ndarray:
    """
    Convolve I with the piecewise-linear interpolant of ``values`` at every node of ``grid``.

    :param grid: increasing nodes starting at 0
    :param values: samples at the nodes
    :param table: optional kernel table to extend
    :param rule: "linear" or "midpoint"
    :param quantum: tick length of the lattice, inferred from the grid when omitted
    :return: array of convolution values, 0 at the first node
    """

    lattice = TimeLattice.from_times(grid, quantum)
    table = lattice.kernel_table(table)
    vals = np.asarray(values)
    return np.array([product_weights(table, lattice, n, rule) @ vals[: n + 1] for n in range(lattice.ticks.size)])


def closed_form_forcing(datum: InitialDatum, times: np.ndarray, table: KernelTable) -> np.ndarray:
    """C + D(t - tN(t) + N1(t)): the part of the forcing that never needs product weights."""
    big_c, big_d = log_coefficients(datum)
    n_t, n1_t = table.lookup(times)
    return big_c + big_d * (times - times * n_t + n1_t)


def forcing(grid: ArrayLike, datum: InitialDatum, table: KernelTable | None = None,
            rule: str = "linear", quantum: float | None = None) -> np.ndarray:
    """
    Forcing f(t_n) of the compact charge equation at every node.

    :param grid: increasing nodes starting at 0 (snapped to a tick lattice)
    :param datum: datum in the lambda=1 frame
    :param table: optional kernel table to extend
    :param rule: product-integration rule for the remainder, "linear" or "midpoint"
    :param quantum: tick length of the lattice, inferred from the grid when omitted
    :return: complex array, f(0) = C
    """

    _require_frame(datum)
    lattice = TimeLattice.from_times(grid, quantum)
    table = lattice.kernel_table(table)
    times = lattice.times
    remainder = remainder_trace(datum, times)
    convolved = np.array([product_weights(table, lattice, n, rule) @ remainder[: n + 1]
                          for n in range(times.size)])
    logger.debug("Forcing assembled on %d nodes up to t=%g", times.size, times[-1])
    return closed_form_forcing(datum, times, table) + convolved
