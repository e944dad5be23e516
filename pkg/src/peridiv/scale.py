"""Scale-function family in closed exponential-sum form.

For q > 0 the q-scale function of the mirror process is

    W_q(x) = sum_j e^(r_j x) / psi'(r_j),   x >= 0,

over the roots r_j of psi(theta) - q = 0.  Every function needed downstream
(tilted and integrated scale functions and the composite kernels built from
them) is an exponential sum over the same roots plus an affine part, so
derivatives and integrals are taken term by term; no quadrature appears
outside test oracles.

Useful reductions used here (exact consequences of the partial fraction of
1/(psi-q), with w_j = 1/psi'(r_j) over the q = delta roots):

    sum_j w_j / r_j           = 1/delta
    sum_j w_j / (phi - r_j)   = 1/gamma,     phi = phi_{gamma+delta}
    Z_delta(x)                = 1 + delta * Wbar_delta(x)
    Z_{gamma,delta}(x)        = gamma * sum_j w_j e^(r_j x) / (phi - r_j)
    Zbar_delta(x)             = x + delta * Wbarbar_delta(x)

The second and third lines remove the e^(phi x) term analytically, which is
what keeps large-x evaluation free of catastrophic cancellation.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import PreconditionViolated
from .model import (
    ModelSpec,
    RootDecomposition,
    TimePreference,
    laplace_exponent,
    solve_roots,
)

ArrayLike = Union[float, np.ndarray]

_OVERFLOW_SHIFT = 300.0

_QTAGS = ("delta", "gamma+delta")


def _expm1_over(u: np.ndarray) -> np.ndarray:
    """(e^u - 1)/u for complex u, stable near u = 0."""
    u = np.asarray(u, dtype=complex)
    small = np.abs(u) < 1e-6
    safe = np.where(small, 1.0, u)
    out = np.where(small, 1.0 + u / 2.0 + u * u / 6.0, (np.exp(safe) - 1.0) / safe)
    return out


@dataclass(frozen=True, eq=False)
class ExpSum:
    """f(x) = Re(sum_j c_j e^(r_j x)) + const + slope*x."""

    rates: np.ndarray
    coeffs: np.ndarray
    const: float = 0.0
    slope: float = 0.0

    def __call__(self, x: ArrayLike) -> ArrayLike:
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xa = np.atleast_1d(x)
        expo = np.multiply.outer(xa, self.rates)
        m = expo.real.max(axis=-1)
        shift = np.where(m > _OVERFLOW_SHIFT, m - _OVERFLOW_SHIFT, 0.0)
        mant = np.exp(expo - shift[..., None]) @ self.coeffs
        val = np.exp(shift) * mant.real + self.const + self.slope * xa
        return float(val[0]) if scalar else val

    def eval_shifted(self, x: ArrayLike, shift_rate: float) -> ArrayLike:
        """f(x) * e^(-shift_rate*x), computed without forming large terms."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xa = np.atleast_1d(x)
        expo = np.multiply.outer(xa, self.rates - shift_rate)
        val = (np.exp(expo) @ self.coeffs).real
        with np.errstate(under="ignore"):
            val = val + (self.const + self.slope * xa) * np.exp(-shift_rate * xa)
        return float(val[0]) if scalar else val

    def derivative(self) -> "ExpSum":
        return ExpSum(self.rates, self.coeffs * self.rates, self.slope, 0.0)

    def antiderivative(self) -> "ExpSum":
        """int_0^x f(y) dy; requires slope == 0."""
        if self.slope != 0.0:
            raise ValueError("antiderivative needs slope == 0")
        c = self.coeffs / self.rates
        return ExpSum(self.rates, c, -float(c.sum().real), self.const)

    def __add__(self, other):
        if isinstance(other, ExpSum):
            if self.rates is not other.rates and not np.array_equal(
                self.rates, other.rates
            ):
                raise ValueError("ExpSum addition requires identical rates")
            return ExpSum(
                self.rates,
                self.coeffs + other.coeffs,
                self.const + other.const,
                self.slope + other.slope,
            )
        return ExpSum(self.rates, self.coeffs, self.const + float(other), self.slope)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __mul__(self, a: float):
        a = float(a)
        return ExpSum(self.rates, a * self.coeffs, a * self.const, a * self.slope)

    __rmul__ = __mul__


def cross_difference(
    f: ExpSum, g: ExpSum, a: float, b: ArrayLike, dy_order: int = 0
) -> ArrayLike:
    """(d/db)^dy_order of f(a)g(b) - f(b)g(a), diagonal cancellation removed.

    Expanding the products over a shared rate basis, the equal-rate terms
    cancel identically and are skipped; each remaining pair contributes
    (f_j g_k - f_k g_j)(r_k^n e^(r_j a + r_k b) - r_j^n e^(r_j b + r_k a))
    with n = dy_order.  Constant parts enter as a zero-rate term; the slope
    parts of the inputs here are pure roundoff residue and are dropped.
    """
    if not np.array_equal(f.rates, g.rates):
        raise ValueError("cross_difference requires identical rates")
    r = np.concatenate([f.rates, [0.0 + 0.0j]])
    fc = np.concatenate([f.coeffs, [complex(f.const)]])
    gc = np.concatenate([g.coeffs, [complex(g.const)]])
    b = np.asarray(b, dtype=float)
    scalar = b.ndim == 0
    ba = np.atleast_1d(b)
    total = np.zeros(ba.shape, dtype=complex)
    n = len(r)
    for j in range(n):
        for k in range(j + 1, n):
            w = fc[j] * gc[k] - fc[k] * gc[j]
            if w == 0.0:
                continue
            total += w * (
                r[k] ** dy_order * np.exp(r[j] * a + r[k] * ba)
                - r[j] ** dy_order * np.exp(r[j] * ba + r[k] * a)
            )
    out = total.real
    return float(out[0]) if scalar else out


class ScaleContext:
    """All scale-function machinery for one (model, gamma, delta) triple.

    Immutable after construction and safe to share across threads.
    """

    def __init__(self, model: ModelSpec, time_pref: TimePreference):
        self.model = model
        self.time_pref = time_pref
        g, d = time_pref.gamma, time_pref.delta
        self.gamma = g
        self.delta = d
        self.mu = model.mu
        self.dec_delta: RootDecomposition = solve_roots(model, d)
        self.dec_gamma_delta: RootDecomposition = solve_roots(model, g + d)
        self.phi_delta = self.dec_delta.phi_q
        self.phi_gd = self.dec_gamma_delta.phi_q
        if not self.phi_gd > self.phi_delta:
            raise PreconditionViolated("phi_{gamma+delta} must exceed phi_delta")
        for dec in (self.dec_delta, self.dec_gamma_delta):
            if np.abs(dec.roots).min() == 0.0:
                raise PreconditionViolated("root at zero; q must be > 0")

        self.g_frac = g / (g + d)  # gamma/(gamma+delta)
        self.d_frac = d / (g + d)
        self.A0 = self.g_frac * self.mu / d  # recurring constant in A, Q, Gamma

        r, w = self.dec_delta.roots, self.dec_delta.weights
        self._w_d = ExpSum(r, w)
        self._wp_d = self._w_d.derivative()
        self._wbar_d = self._w_d.antiderivative()
        self._wbarbar_d = self._wbar_d.antiderivative()
        self._z_d = d * self._wbar_d + 1.0
        self._zbar_d = self._z_d.antiderivative()
        self._zgd = ExpSum(r, g * w / (self.phi_gd - r))
        self._j = self.d_frac * self._zgd + self.g_frac * self._z_d
        self._h = self.g_frac * (self._zbar_d + (-self.mu / d))
        self._c = self.g_frac * (self._z_d - self._zgd)
        self._k = (-self.A0) * self._z_d - self._zbar_d + self.mu / d

        self._jp = self._j.derivative()
        self._hp = self._h.derivative()

        rg, wg = self.dec_gamma_delta.roots, self.dec_gamma_delta.weights
        self._w_gd = ExpSum(rg, wg)
        self._wp_gd = self._w_gd.derivative()
        self._wbar_gd = self._w_gd.antiderivative()
        self._wbarbar_gd = self._wbar_gd.antiderivative()
        self._z_q_gd = (g + d) * self._wbar_gd + 1.0
        self._zbar_q_gd = self._z_q_gd.antiderivative()

    # -- tag plumbing ------------------------------------------------------

    def _dec(self, q: str) -> RootDecomposition:
        if q == "delta":
            return self.dec_delta
        if q == "gamma+delta":
            return self.dec_gamma_delta
        raise ValueError(f"q must be one of {_QTAGS}, got {q!r}")

    def _pick(self, q: str, fd, fgd):
        if q == "delta":
            return fd
        if q == "gamma+delta":
            return fgd
        raise ValueError(f"q must be one of {_QTAGS}, got {q!r}")

    def _piecewise(self, x: ArrayLike, pos, neg) -> ArrayLike:
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xa = np.atleast_1d(x)
        out = np.empty_like(xa)
        mask = xa < 0
        if mask.any():
            out[mask] = neg(xa[mask])
        if (~mask).any():
            out[~mask] = pos(xa[~mask])
        return float(out[0]) if scalar else out

    # -- scale functions ---------------------------------------------------

    def W(self, x: ArrayLike, q: str = "delta") -> ArrayLike:
        f = self._pick(q, self._w_d, self._w_gd)
        return self._piecewise(x, f, lambda v: np.zeros_like(v))

    def W_prime(self, x: ArrayLike, q: str = "delta") -> ArrayLike:
        """dW/dx for x > 0; x = 0 gives the x -> 0+ limit."""
        f = self._pick(q, self._wp_d, self._wp_gd)
        return self._piecewise(x, f, lambda v: np.zeros_like(v))

    def W_bar(self, x: ArrayLike, q: str = "delta") -> ArrayLike:
        f = self._pick(q, self._wbar_d, self._wbar_gd)
        return self._piecewise(x, f, lambda v: np.zeros_like(v))

    def W_bar_bar(self, x: ArrayLike, q: str = "delta") -> ArrayLike:
        f = self._pick(q, self._wbarbar_d, self._wbarbar_gd)
        return self._piecewise(x, f, lambda v: np.zeros_like(v))

    def Z(self, x: ArrayLike, theta: float = 0.0, q: str = "delta") -> ArrayLike:
        """Tilted scale function Z_q(x, theta); theta = 0 gives Z_q(x)."""
        if theta == 0.0:
            f = self._pick(q, self._z_d, self._z_q_gd)
            return self._piecewise(x, f, lambda v: np.ones_like(v))
        dec = self._dec(q)
        factor = laplace_exponent(self.model, float(theta)) - dec.q

        def pos(v):
            u = np.multiply.outer(v, dec.roots - theta)
            inner = (_expm1_over(u) @ dec.weights) * v
            return np.exp(theta * v) * (1.0 - factor * inner.real)

        return self._piecewise(x, pos, lambda v: np.exp(theta * v))

    def Z_bar(self, x: ArrayLike, q: str = "delta") -> ArrayLike:
        f = self._pick(q, self._zbar_d, self._zbar_q_gd)
        return self._piecewise(x, f, lambda v: v)

    def Z_gamma_delta(self, x: ArrayLike) -> ArrayLike:
        """Z_delta(x, phi_{gamma+delta}), evaluated in its stable reduced form."""
        return self._piecewise(x, self._zgd, lambda v: np.exp(self.phi_gd * v))

    # -- first and second derivatives (x+ limits where one-sided) ----------

    def Z_delta_prime(self, x: ArrayLike) -> ArrayLike:
        return self.delta * self.W(x)

    def Z_delta_second(self, x: ArrayLike) -> ArrayLike:
        return self.delta * self.W_prime(x)

    def Z_gd_prime(self, x: ArrayLike) -> ArrayLike:
        return self.phi_gd * self.Z_gamma_delta(x) - self.gamma * self.W(x)

    def Z_gd_second(self, x: ArrayLike) -> ArrayLike:
        return (
            self.phi_gd**2 * self.Z_gamma_delta(x)
            - self.phi_gd * self.gamma * self.W(x)
            - self.gamma * self.W_prime(x)
        )

    def Z_prime_family(self, x: ArrayLike) -> Tuple[ArrayLike, ...]:
        return (
            self.Z_delta_prime(x),
            self.Z_gd_prime(x),
            self.Z_delta_second(x),
            self.Z_gd_second(x),
        )

    # -- composite kernels -------------------------------------------------

    def J(self, x: ArrayLike) -> ArrayLike:
        def neg(v):
            return self.d_frac * np.exp(self.phi_gd * v) + self.g_frac

        return self._piecewise(x, self._j, neg)

    def J_prime(self, x: ArrayLike) -> ArrayLike:
        return self.d_frac * self.phi_gd * self.Z_gamma_delta(x)

    def J_second(self, x: ArrayLike) -> ArrayLike:
        return self.d_frac * self.phi_gd * self.Z_gd_prime(x)

    def H(self, x: ArrayLike) -> ArrayLike:
        def neg(v):
            return self.g_frac * (v - self.mu / self.delta)

        return self._piecewise(x, self._h, neg)

    def H_prime(self, x: ArrayLike) -> ArrayLike:
        return self.g_frac * self.Z(x)

    def H_second(self, x: ArrayLike) -> ArrayLike:
        return self.g_frac * self.delta * self.W(x)

    def C(self, x: ArrayLike) -> ArrayLike:
        def neg(v):
            return self.g_frac * (1.0 - np.exp(self.phi_gd * v))

        return self._piecewise(x, self._c, neg)

    def C_prime(self, x: ArrayLike) -> ArrayLike:
        return self.g_frac * (
            (self.gamma + self.delta) * self.W(x) - self.phi_gd * self.Z_gamma_delta(x)
        )

    def C_second(self, x: ArrayLike) -> ArrayLike:
        return self.g_frac * (
            (self.gamma + self.delta) * self.W_prime(x) - self.phi_gd * self.Z_gd_prime(x)
        )

    def K(self, x: ArrayLike) -> ArrayLike:
        def neg(v):
            return -self.A0 - v + self.mu / self.delta

        return self._piecewise(x, self._k, neg)

    def _inv_zgd(self, b: float) -> float:
        with np.errstate(under="ignore"):
            return float(
                np.exp(-self.phi_delta * b)
                / self._zgd.eval_shifted(b, self.phi_delta)
            )

    def first_passage_pair(
        self, y: ArrayLike, b: float, order: int = 0
    ) -> Tuple[ArrayLike, ArrayLike]:
        """(d/dy)^order of (B(y; b), L(y; b)) for y >= 0, cancellation-free.

        B(y;b)*Z_{gamma,delta}(b) and L(y;b)*Z_{gamma,delta}(b) are cross
        differences over the shared root basis; evaluating them pairwise keeps
        both factors accurate when the raw products dwarf the result.
        """
        inv = self._inv_zgd(b)
        bb = -self.g_frac * cross_difference(self._k, self._zgd, b, y, order) * inv
        ll = -self.g_frac * cross_difference(self._z_d, self._zgd, b, y, order) * inv
        return bb, ll

    def B(self, x: ArrayLike, b: float) -> ArrayLike:
        if b <= 0:
            raise PreconditionViolated("B requires b > 0")

        def pos(v):
            return self.first_passage_pair(v, b)[0]

        def neg(v):
            ratio = np.exp(self.phi_gd * v) * self._inv_zgd(b)
            return self.g_frac * (self.K(v) - ratio * self.K(b))

        return self._piecewise(x, pos, neg)

    def L(self, x: ArrayLike, b: float) -> ArrayLike:
        if b <= 0:
            raise PreconditionViolated("L requires b > 0")

        def pos(v):
            return self.first_passage_pair(v, b)[1]

        def neg(v):
            ratio = np.exp(self.phi_gd * v) * self._inv_zgd(b)
            return self.g_frac * (1.0 - ratio * self.Z(b))

        return self._piecewise(x, pos, neg)

    def A_lower(self, x: ArrayLike, d: float, kappa: float) -> ArrayLike:
        """A_{gamma,delta}(x; d): the inhomogeneous part of the value below b_u."""
        if not d >= kappa >= 0:
            raise PreconditionViolated("A_lower requires d >= kappa >= 0")
        scale = 1.0 / self.g_frac
        return scale * self.gA(x, d, kappa)

    def gA(self, x: ArrayLike, d: float, kappa: float) -> ArrayLike:
        """gamma/(gamma+delta) * A_{gamma,delta}(x; d), the combination used directly."""
        return -self.A0 * self.J(x) - self.H(x) + (d - kappa) * self.C(x)

    def A_upper(self, x: ArrayLike, d: float, kappa: float) -> ArrayLike:
        """A_{u,gamma,delta}(x; d) for the explicit upper-region form."""
        if not d >= kappa >= 0:
            raise PreconditionViolated("A_upper requires d >= kappa >= 0")
        x = np.asarray(x, dtype=float)
        return x + (d - kappa + self.mu / (self.gamma + self.delta)) * (
            -np.expm1(-self.phi_gd * x)
        )

    # -- stable large-argument helpers --------------------------------------

    def hj_ratio(self, b: ArrayLike) -> ArrayLike:
        """H(b)/J(b) for b >= 0, stable for large b."""
        s = self.phi_delta
        return self._h.eval_shifted(b, s) / self._j.eval_shifted(b, s)

    def jh_cross(self, a: float, b: float) -> float:
        """J(a)H(b) - J(b)H(a) for a, b >= 0, free of diagonal cancellation."""
        return cross_difference(self._j, self._h, a, b)

    def hj_cross_over_j(self, b: float, y: ArrayLike) -> ArrayLike:
        """(H(b)J(y) - H(y)J(b)) / J(b) for 0 <= y, b; the no-cost barrier value."""
        return cross_difference(self._h, self._j, b, y) * self.inv_J(b)

    def marginal_value_at_lower(self, bu: float, d: float) -> float:
        """-(H(b_u)/J(b_u)) J'(d) + H'(d), stable for large arguments.

        Both terms grow like e^(phi_delta d) while their difference decays;
        when the shifted difference is below its own roundoff floor the true
        value has collapsed to the asymptotic limit 0.
        """
        s = self.phi_delta
        hj = float(self.hj_ratio(bu))
        jp = float(self._jp.eval_shifted(d, s))
        hp = float(self._hp.eval_shifted(d, s))
        bracket = -hj * jp + hp
        noise = 1e-13 * (abs(hj * jp) + abs(hp))
        if abs(bracket) <= noise:
            return 0.0
        return float(np.exp(s * d) * bracket)

    def inv_J(self, x: ArrayLike) -> ArrayLike:
        """1/J(x) for x >= 0, underflowing to 0 for very large x."""
        with np.errstate(under="ignore"):
            return np.exp(-self.phi_delta * np.asarray(x, dtype=float)) / (
                self._j.eval_shifted(x, self.phi_delta)
            )
