"""
Special functions of the point-nonlinearity model.

The Volterra function of order -1, I(t) = ∫₀^∞ t^{s-1}/Γ(s) ds, is the kernel of the charge
equation. The solver never samples I near its singularity: it works through the primitive
N(t) = ∫₀ᵗ I and the first moment N1(t) = ∫₀ᵗ s I(s) ds, tabulated in a :class:`KernelTable`.

Two independent evaluations of I are kept. The Ramanujan-type representation

    I(t) = eᵗ + ∫₀^∞ e^{-tξ} / (π² + ln²ξ) dξ

is integrated on a fixed composite Gauss-Legendre grid after the substitution ξ = e^{y}/t, which
makes every evaluation deterministic and vectorized; N and N1 follow from the same grid in closed
form. The Mellin-type integral over s is evaluated with adaptive quadrature and serves as the
build-time cross-check.
"""

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
from numpy.typing import ArrayLike
from scipy import integrate, special

from pointnls import PointNLSError, divide_chunks

logger = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)

# Gauss-Legendre grid in y = ln(tξ); the Lorentzian 1/(π² + (y - ln t)²) is resolved by unit panels.
_Y_LO, _Y_HI = -46.0, 50.0
_GL_ORDER = 16
_CHUNK = 512

# Taylor coefficients of 1/Γ(1+s); ν(t) ~ Σ c_k k!/L^{k+1} with L = ln(1/t)
_RECIP_GAMMA_COEFFS = (1.0, EULER_GAMMA, -0.6558780715202538, -0.0420026350340952,
                       0.1665386113822915, -0.0421977345555443)
_N_QUAD_FLOOR = 46.0

_CROSS_CHECK_RTOL = 1e-8


class SpecfunError(PointNLSError):
    pass


def _composite_legendre(lo: float, hi: float, panels: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(lo, hi, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


_Y, _WY = _composite_legendre(_Y_LO, _Y_HI, int(_Y_HI - _Y_LO), _GL_ORDER)
_EY = np.exp(_Y)
_W_I = _WY * _EY * np.exp(-_EY)
_W_N = _WY * -np.expm1(-_EY)
_W_N1 = _WY * np.exp(-_Y) * special.gammainc(2.0, _EY)


def _positive(t: ArrayLike, name: str, allow_zero: bool = False) -> tuple[np.ndarray, bool]:
    arr = np.asarray(t, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    bad = (arr < 0) if allow_zero else (arr <= 0)
    if np.any(bad) or not np.all(np.isfinite(arr)):
        raise SpecfunError(f"{name} outside its domain: {arr[bad | ~np.isfinite(arr)][0]!r}")
    return arr, scalar


def _unwrap(values: np.ndarray, scalar: bool) -> Any:
    return float(values[0]) if scalar else values


def _lorentz_sums(t: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Σ_i weights_i / (π² + (y_i - ln t)²) for every t (t > 0), evaluated in chunks."""
    out = np.empty_like(t)
    log_t = np.log(t)
    for start, chunk in zip(range(0, t.size, _CHUNK), divide_chunks(log_t, _CHUNK)):
        lorentz = 1.0 / (np.pi ** 2 + (_Y[None, :] - chunk[:, None]) ** 2)
        out[start : start + chunk.size] = lorentz @ weights
    return out


def _volterra_I_ramanujan(t: np.ndarray) -> np.ndarray:
    return np.exp(t) + _lorentz_sums(t, _W_I) / t


def _volterra_I_mellin(t: float) -> float:
    scale = max(t, 1.0)
    upper = scale + 50.0 + 20.0 * np.sqrt(scale)
    log_t = np.log(t)

    def integrand(s: float) -> float:
        return np.exp((s - 1.0) * log_t - special.gammaln(s)) if s > 0 else 0.0

    points = [t] if t < upper else None
    value, _ = integrate.quad(integrand, 0.0, upper, points=points, epsabs=0.0, epsrel=1e-13, limit=400)
    return value


def volterra_I(t: ArrayLike, method: str = "ramanujan") -> Any:
    """
    Volterra function of order -1.

    :param t: positive time(s)
    :param method: "ramanujan" (vectorized, default) or "mellin" (adaptive quadrature over s)
    :return: I(t), float for scalar input
    """

    arr, scalar = _positive(t, "volterra_I argument")
    if method == "ramanujan":
        return _unwrap(_volterra_I_ramanujan(arr), scalar)
    if method == "mellin":
        return _unwrap(np.array([_volterra_I_mellin(float(x)) for x in arr]), scalar)
    raise SpecfunError(f"unknown Volterra method {method!r}")


def volterra_N(t: ArrayLike) -> Any:
    """Primitive N(t) = ν(t) = ∫₀ᵗ I(s) ds, with N(0) = 0."""
    arr, scalar = _positive(t, "volterra_N argument", allow_zero=True)
    out = np.zeros_like(arr)
    pos = arr > 0
    if np.any(pos):
        tp = arr[pos]
        tail = (0.5 * np.pi - np.arctan((_Y_HI - np.log(tp)) / np.pi)) / np.pi
        out[pos] = np.expm1(tp) + _lorentz_sums(tp, _W_N) + tail
    return _unwrap(out, scalar)


def volterra_N1(t: ArrayLike) -> Any:
    """First moment N1(t) = ∫₀ᵗ s I(s) ds = t N(t) - ∫₀ᵗ N, with N1(0) = 0."""
    arr, scalar = _positive(t, "volterra_N1 argument", allow_zero=True)
    out = np.zeros_like(arr)
    pos = arr > 0
    if np.any(pos):
        tp = arr[pos]
        out[pos] = tp * np.exp(tp) - np.expm1(tp) + tp * _lorentz_sums(tp, _W_N1)
    return _unwrap(out, scalar)


def _nu_small_t(log_inv_t: float) -> float:
    return sum(c * special.factorial(k) / log_inv_t ** (k + 1) for k, c in enumerate(_RECIP_GAMMA_COEFFS))


def volterra_N_quadrature(t: float) -> float:
    """
    Independent evaluation of N(t) by adaptive quadrature of I on [e^{-46}, t] plus the
    small-t asymptotic series of ν below the cut.

    :param t: time, larger than the cut e^{-46}
    :return: N(t)
    """

    arr, _ = _positive(t, "volterra_N_quadrature argument")
    t = float(arr[0])
    lower = -_N_QUAD_FLOOR
    if np.log(t) <= lower:
        raise SpecfunError(f"volterra_N_quadrature needs t > e^{lower:g}, got {t!r}")

    def integrand(u: float) -> float:
        s = np.exp(u)
        return float(_volterra_I_ramanujan(np.array([s]))[0] * s)

    body, _ = integrate.quad(integrand, lower, np.log(t), epsabs=0.0, epsrel=1e-12, limit=400)
    return body + _nu_small_t(_N_QUAD_FLOOR)


def sici(x: ArrayLike) -> tuple[Any, Any]:
    """
    Sine and cosine integrals with si(x) = Si(x) - π/2.

    :param x: positive argument(s)
    :return: (si, ci)
    """

    arr, scalar = _positive(x, "sici argument")
    si_big, ci = special.sici(arr)
    return _unwrap(si_big - 0.5 * np.pi, scalar), _unwrap(ci, scalar)


def cin(x: ArrayLike) -> Any:
    """Entire cosine integral Cin(x) = γ + ln x - ci(x); Cin(0) = 0."""
    arr, scalar = _positive(x, "cin argument", allow_zero=True)
    out = np.empty_like(arr)
    small = arr <= 2.0
    if np.any(small):
        xs = arr[small] ** 2
        term = np.ones_like(xs)
        acc = np.zeros_like(xs)
        for n in range(1, 18):
            term = term * xs / ((2 * n - 1) * (2 * n))
            acc += (-1) ** (n + 1) * term / (2 * n)
        out[small] = acc
    if np.any(~small):
        xl = arr[~small]
        out[~small] = EULER_GAMMA + np.log(xl) - special.sici(xl)[1]
    return _unwrap(out, scalar)


def macdonald_k0(x: ArrayLike) -> Any:
    """MacDonald function K₀ for positive arguments."""
    arr, scalar = _positive(x, "macdonald_k0 argument")
    return _unwrap(special.k0(arr), scalar)


def theta(s: ArrayLike, params: Any) -> Any:
    """
    Coupling θ_λ(s) = log(√λ/2)/(2π) + γ/(2π) - β s^{2σ}.

    :param s: charge modulus, s >= 0
    :param params: object with ``sigma``, ``beta`` and ``lam`` attributes (ModelParams)
    :return: θ_λ(s)
    """

    arr, scalar = _positive(s, "theta argument", allow_zero=True)
    value = (np.log(np.sqrt(params.lam) / 2.0) + EULER_GAMMA) / (2.0 * np.pi) - params.beta * arr ** (2.0 * params.sigma)
    return _unwrap(value, scalar)


def sonine_identity(t: float, n: int = 4000) -> float:
    """
    Evaluate ∫₀ᵗ I(t-τ)(-γ - log τ) dτ, which equals 1 for every t > 0.

    The range is split at t/2. On [0, t/2] in the kernel variable the log factor is smooth and is
    integrated piecewise-linearly against exact N/N1 differences; on the other half the kernel
    is smooth and the log factor is handled by a log-weighted adaptive rule.

    :param t: positive time
    :param n: number of product-integration intervals on the singular-kernel half
    :return: the convolution value
    """

    arr, _ = _positive(t, "sonine_identity argument")
    t = float(arr[0])
    half = 0.5 * t

    s = np.linspace(0.0, half, n + 1)
    g = -EULER_GAMMA - np.log(t - s)
    dn = np.diff(volterra_N(s))
    dn1 = np.diff(volterra_N1(s))
    h = np.diff(s)
    kernel_half = np.sum(g[:-1] * dn + np.diff(g) / h * (dn1 - s[:-1] * dn))

    log_part, _ = integrate.quad(lambda tau: volterra_I(t - tau), 0.0, half, weight="alg-loga", wvar=(0.0, 0.0),
                                 epsabs=1e-13, epsrel=1e-12, limit=200)
    log_half = -EULER_GAMMA * (volterra_N(t) - volterra_N(half)) - log_part
    return float(kernel_half + log_half)


@dataclass(frozen=True)
class KernelTable:
    """
    N and N1 tabulated at exact breakpoints.

    Weights are built from differences of these values only; :meth:`lookup` refuses values that
    are not breakpoints, so no interpolation ever enters a quadrature weight.
    """

    breakpoints: np.ndarray
    n_values: np.ndarray
    n1_values: np.ndarray

    def __post_init__(self):
        bp, nv, n1v = self.breakpoints, self.n_values, self.n1_values
        if bp.ndim != 1 or bp.size == 0 or nv.shape != bp.shape or n1v.shape != bp.shape:
            raise SpecfunError("KernelTable arrays must be one-dimensional and aligned")
        if bp[0] != 0.0 or nv[0] != 0.0 or n1v[0] != 0.0:
            raise SpecfunError("KernelTable must start at t = 0 with N = N1 = 0")
        if np.any(np.diff(bp) <= 0):
            raise SpecfunError("KernelTable breakpoints must be strictly increasing")
        if np.any(np.diff(nv) <= 0):
            raise SpecfunError("KernelTable N values must be strictly increasing")
        for arr in (bp, nv, n1v):
            arr.setflags(write=False)

    @classmethod
    def build(cls, breakpoints: ArrayLike, cross_check: bool = True) -> "KernelTable":
        """
        Tabulate N and N1 at ``breakpoints`` (0 is always included).

        :param breakpoints: nonnegative times
        :param cross_check: compare both evaluations of I at the largest breakpoint
        :return: KernelTable
        """

        bp = np.unique(np.concatenate(([0.0], np.asarray(breakpoints, dtype=float).ravel())))
        if bp[0] < 0:
            raise SpecfunError(f"negative breakpoint {bp[0]!r}")
        if cross_check and bp[-1] > 0:
            _cross_check(float(bp[-1]))
        logger.debug("Kernel table built on %d breakpoints up to t=%g", bp.size, bp[-1])
        return cls(bp, volterra_N(bp), volterra_N1(bp))

    def extend(self, breakpoints: ArrayLike) -> "KernelTable":
        """Return a table that also covers ``breakpoints``; self is returned when nothing is new."""
        new = np.setdiff1d(np.asarray(breakpoints, dtype=float).ravel(), self.breakpoints)
        if new.size == 0:
            return self
        if new[0] < 0:
            raise SpecfunError(f"negative breakpoint {new[0]!r}")
        bp = np.concatenate((self.breakpoints, new))
        order = np.argsort(bp, kind="stable")
        nv = np.concatenate((self.n_values, volterra_N(new)))[order]
        n1v = np.concatenate((self.n1_values, volterra_N1(new)))[order]
        return KernelTable(bp[order], nv, n1v)

    def lookup(self, values: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
        """
        N and N1 at ``values``, which must all be breakpoints.

        :param values: times present in the table
        :return: (N, N1) arrays shaped like ``values``
        """

        arr = np.asarray(values, dtype=float)
        idx = np.searchsorted(self.breakpoints, arr)
        inside = idx < self.breakpoints.size
        if not np.all(inside) or np.any(self.breakpoints[np.minimum(idx, self.breakpoints.size - 1)] != arr):
            raise SpecfunError("kernel lookup off the breakpoints; interpolation is not allowed for weights")
        return self.n_values[idx], self.n1_values[idx]


def _cross_check(t: float) -> None:
    fast = float(_volterra_I_ramanujan(np.array([t]))[0])
    slow = _volterra_I_mellin(t)
    rel = abs(fast - slow) / abs(slow)
    logger.debug("Volterra cross-check at t=%g: relative difference %.3e", t, rel)
    if rel > _CROSS_CHECK_RTOL:
        raise SpecfunError(f"Volterra representations disagree at t={t!r}: relative difference {rel:.3e}")
