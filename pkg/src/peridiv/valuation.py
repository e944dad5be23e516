"""Expected present value of a periodic two-barrier dividend strategy.

For a strategy (b_u, b_l, kappa) the value function is, with y = b_u - x and
d = b_u - b_l,

    V(x) = gA(y; d) + Z_{gamma,delta}(y) V(b_u) + C(y) V(b_l),

where gA collects the inhomogeneous scale-function terms and the two constants
solve a 2x2 linear system obtained by evaluating the display at x = 0 (where
V vanishes) and x = b_l.  The negative-argument conventions of the scale
kernels make the same display valid above b_u, where it reduces to the
explicit affine-plus-exponential form used for tail integrals here.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import PreconditionViolated, SingularSystem, SolverError
from .scale import ScaleContext

ArrayLike = Union[float, np.ndarray]

SINGULAR_DET_TOL = 1e-14

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_GL_PANEL_WIDTH = 0.25


@dataclass(frozen=True)
class Strategy:
    """Barrier pair with fixed transaction cost.

    Pays the surplus down to b_l at any decision time where it is >= b_u;
    admissible when the gross payment always covers the cost, b_u - b_l >= kappa.
    """

    b_u: float
    b_l: float
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, "b_u", float(self.b_u))
        object.__setattr__(self, "b_l", float(self.b_l))
        object.__setattr__(self, "kappa", float(self.kappa))
        if self.b_l < 0 or self.b_u < 0 or self.kappa < 0:
            raise ValueError("barriers and kappa must be >= 0")
        if self.b_l > self.b_u:
            raise ValueError("need b_l <= b_u")

    @property
    def d(self) -> float:
        return self.b_u - self.b_l

    @property
    def admissible(self) -> bool:
        return self.b_u - self.b_l >= self.kappa


@dataclass
class ValuationReport:
    at_bu: float
    at_bl: float
    grid: np.ndarray  # columns (x, value, first_derivative)
    smoothness_gap: float
    generator_residual_max: float
    hjb_residual_max: float


class StrategyValuation:
    """Precomputed constants and evaluators for one (context, strategy) pair.

    Below b_u the value is held in its first-passage form
    V(x) = B(y; b_u) + (d - kappa + V(b_l)) L(y; b_u) with y = b_u - x, whose
    factors are evaluated through pairwise cross differences and therefore
    stay accurate when the underlying scale functions are exponentially
    large.  Above b_u the value is affine plus a decaying exponential.
    """

    def __init__(self, ctx: ScaleContext, s: Strategy):
        if not s.admissible:
            raise PreconditionViolated(
                f"strategy not admissible: b_u - b_l = {s.d} < kappa = {s.kappa}"
            )
        if s.b_u <= 0:
            raise PreconditionViolated("need b_u > 0")
        self.ctx = ctx
        self.s = s
        bu, bl, kap, d = s.b_u, s.b_l, s.kappa, s.d

        b_d, l_d = ctx.first_passage_pair(d, bu)
        denom = 1.0 - float(l_d)
        if abs(denom) < SINGULAR_DET_TOL:
            raise SingularSystem(f"valuation system pivot 1 - L = {denom:.3e}")
        if bl == 0.0:
            # shifted ratio keeps the liquidation constant finite for any b_u
            ga_sum = (-ctx.A0) * ctx._j + (-1.0) * ctx._h + (d - kap) * ctx._c
            shift = ctx.phi_delta
            self.at_bl = 0.0
            self.at_bu = float(
                -ga_sum.eval_shifted(bu, shift) / ctx._zgd.eval_shifted(bu, shift)
            )
        else:
            self.at_bl = ((d - kap) * float(l_d) + float(b_d)) / denom
            b_0, l_0 = ctx.first_passage_pair(0.0, bu)
            self.at_bu = float(b_0) + (d - kap + self.at_bl) * float(l_0)
        self._net = d - kap + self.at_bl

        # upper region: V(b_u + u) = a0 + a1*u + a2*e^(-phi u)
        lump = d - kap + ctx.mu / (ctx.gamma + ctx.delta)
        self.up_a0 = ctx.g_frac * (lump + self.at_bl)
        self.up_a1 = ctx.g_frac
        self.up_a2 = self.at_bu - ctx.g_frac * (lump + self.at_bl)

    @property
    def smoothness_gap(self) -> float:
        return self.at_bu - self.at_bl - (self.s.d - self.s.kappa)

    def _eval(self, x: ArrayLike, order: int) -> ArrayLike:
        """V and its first two derivatives, x+ branch at the seam."""
        ctx = self.ctx
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        xa = np.atleast_1d(x)
        y = self.s.b_u - xa
        out = np.empty_like(xa)
        lower = y >= 0
        if lower.any():
            bb, ll = ctx.first_passage_pair(y[lower], self.s.b_u, order)
            # d/dx = -d/dy per derivative order
            out[lower] = (-1.0) ** order * (bb + self._net * ll)
        if (~lower).any():
            u = -y[~lower]
            e = self.up_a2 * np.exp(-ctx.phi_gd * u)
            if order == 0:
                out[~lower] = self.up_a0 + self.up_a1 * u + e
            elif order == 1:
                out[~lower] = self.up_a1 - ctx.phi_gd * e
            else:
                out[~lower] = ctx.phi_gd**2 * e
        return float(out[0]) if scalar else out

    def value(self, x: ArrayLike) -> ArrayLike:
        return self._eval(x, 0)

    def _one_sided(self, x: float, side: str, order: int) -> float:
        if side not in ("left", "right"):
            raise ValueError("side must be 'left' or 'right'")
        ctx = self.ctx
        y = self.s.b_u - x
        if y > 0 or (y == 0 and side == "left"):
            bb, ll = ctx.first_passage_pair(y, self.s.b_u, order)
            return float((-1.0) ** order * (bb + self._net * ll))
        u = -y
        e = self.up_a2 * np.exp(-ctx.phi_gd * u)
        if order == 1:
            return float(self.up_a1 - ctx.phi_gd * e)
        return float(ctx.phi_gd**2 * e)

    def derivative(self, x: float, side: str = "right") -> float:
        return self._one_sided(x, side, 1)

    def second_derivative(self, x: float, side: str = "right") -> float:
        return self._one_sided(x, side, 2)

    def derivative_vec(self, x: ArrayLike) -> ArrayLike:
        """Derivative on arrays, taking the x+ branch at the seam."""
        x = np.asarray(x, dtype=float)
        out = np.atleast_1d(np.array(self._eval(x, 1), dtype=float, copy=True))
        seam = np.atleast_1d(x) == self.s.b_u
        if seam.any():
            out[seam] = self._one_sided(self.s.b_u, "right", 1)
        return float(out[0]) if x.ndim == 0 else out

    # -- generator machinery ------------------------------------------------

    def _jump_average(self, x: float, beta: float) -> float:
        """int_0^inf V(x+s) beta e^(-beta s) ds, exact tail past the seam."""
        ctx, s = self.ctx, self.s
        s0 = max(s.b_u - x, 0.0)
        u0 = max(x - s.b_u, 0.0)
        tail = np.exp(-beta * s0) * (
            self.up_a0
            + self.up_a1 * (u0 + 1.0 / beta)
            + self.up_a2 * np.exp(-ctx.phi_gd * u0) * beta / (beta + ctx.phi_gd)
        )
        if s0 == 0.0:
            return float(tail)
        n_panels = int(np.ceil(s0 / _GL_PANEL_WIDTH))
        edges = np.linspace(0.0, s0, n_panels + 1)
        half = 0.5 * (edges[1:] - edges[:-1])
        mid = 0.5 * (edges[1:] + edges[:-1])
        nodes = mid[:, None] + half[:, None] * _GL_NODES[None, :]
        wts = half[:, None] * _GL_WEIGHTS[None, :]
        integrand = self.value(x + nodes) * beta * np.exp(-beta * nodes)
        return float((integrand * wts).sum() + tail)

    def generator_apply(self, x: float) -> float:
        """(L - delta)V(x) for the process generator L.

        The drift used with the compensated jump integral is the
        small-jump-compensated triplet drift c - int_0^1 s Pi(ds), so that the
        operator matches the psi parametrisation of the model.
        """
        ctx = self.ctx
        model = ctx.model
        side = "left" if x <= self.s.b_u else "right"
        v = float(self.value(x))
        vp = self.derivative(x, side)
        vpp = self.second_derivative(x, side)
        m1 = np.array(
            [(1.0 - np.exp(-b) * (1.0 + b)) / b for _, b in model.jump_phases]
        )
        lam = model.rates
        c_tilde = model.drift_c - float((lam * m1).sum())
        jump = 0.0
        for (lam_i, beta_i), m1_i in zip(model.jump_phases, m1):
            avg = self._jump_average(x, beta_i)
            jump += lam_i * (avg - v - vp * m1_i)
        acc = -c_tilde * vp + jump
        if model.sigma > 0:
            acc += 0.5 * model.sigma**2 * vpp
        return acc - ctx.delta * v


def value(ctx: ScaleContext, s: Strategy, x: ArrayLike) -> ArrayLike:
    """V_kappa(x) under the strategy; valid on the whole half line."""
    return StrategyValuation(ctx, s).value(x)


def value_periodic_barrier(ctx: ScaleContext, b: float, x: ArrayLike) -> ArrayLike:
    """Zero-cost single periodic barrier value V_0(x; pi_b).

    Below the barrier the two products share their leading exponential terms,
    so the cross-difference form is used; above it the negative-argument
    conventions keep the direct display stable.
    """
    if b <= 0:
        raise PreconditionViolated("value_periodic_barrier requires b > 0")
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    xa = np.atleast_1d(x)
    out = np.empty_like(xa)
    below = xa <= b
    if below.any():
        out[below] = ctx.hj_cross_over_j(b, b - xa[below])
    if (~below).any():
        y = b - xa[~below]
        out[~below] = ctx.hj_ratio(b) * ctx.J(y) - ctx.H(y)
    return float(out[0]) if scalar else out


def value_derivative(
    ctx: ScaleContext, s: Strategy, x: float, side: str = "right"
) -> float:
    return StrategyValuation(ctx, s).derivative(x, side)


def smoothness_gap(ctx: ScaleContext, s: Strategy) -> float:
    """V(b_u) - V(b_l) - (b_u - b_l - kappa); zero iff the value is smooth."""
    return StrategyValuation(ctx, s).smoothness_gap


def generator_residual(ctx: ScaleContext, s: Strategy, x: float) -> float:
    """(L - delta)V(x) plus, above b_u, the payment term gamma*[...]."""
    sv = StrategyValuation(ctx, s)
    res = sv.generator_apply(x)
    if x > s.b_u:
        res += ctx.gamma * (x - s.b_l - s.kappa + sv.at_bl - float(sv.value(x)))
    return res


def _payment_gain(sv: StrategyValuation, x: float, l: np.ndarray) -> np.ndarray:
    return (l - sv.s.kappa) + sv.value(x - l) - float(sv.value(x))


def hjb_argmax(ctx: ScaleContext, s: Strategy, x: float, n_grid: int = 400) -> float:
    """Maximiser of the payment bracket over {0} union [kappa, x]."""
    sv = StrategyValuation(ctx, s)
    if x < s.kappa:
        return 0.0
    cands = np.linspace(s.kappa, x, n_grid)
    extra = [s.kappa, x]
    if s.kappa <= x - s.b_l <= x:
        extra.append(x - s.b_l)
    cands = np.concatenate([cands, np.array(extra)])
    gains = _payment_gain(sv, x, cands)
    best = int(np.argmax(gains))
    if gains[best] <= 0.0:
        return 0.0
    return float(cands[best])


def hjb_residual(ctx: ScaleContext, s: Strategy, x: float, n_grid: int = 400) -> float:
    """Residual of the dynamic-programming equation at x >= kappa."""
    if x < s.kappa:
        raise PreconditionViolated("hjb_residual requires x >= kappa")
    sv = StrategyValuation(ctx, s)
    gen = sv.generator_apply(x)
    cands = np.linspace(s.kappa, x, n_grid)
    extra = [s.kappa, x]
    if s.kappa <= x - s.b_l <= x:
        extra.append(x - s.b_l)
    cands = np.concatenate([cands, np.array(extra)])
    bracket = float(_payment_gain(sv, x, cands).max())
    return gen + ctx.gamma * max(bracket, 0.0)


def build_report(
    ctx: ScaleContext,
    s: Strategy,
    n_grid: int = 200,
    x_max: float = None,
    seam_pad: float = 1e-6,
) -> ValuationReport:
    """Evaluate value, derivative and residuals on a grid over [0, x_max]."""
    sv = StrategyValuation(ctx, s)
    if x_max is None:
        x_max = 3.0 * s.b_u
    xs = np.linspace(0.0, x_max, n_grid)
    vals = sv.value(xs)
    dvals = sv.derivative_vec(xs)
    v0 = float(sv.value(0.0))
    if abs(v0) > 1e-9 * (1.0 + abs(float(vals.max()))):
        raise SolverError(f"value at 0 is {v0:.3e}, expected 0")
    if vals.min() < -1e-9:
        raise SolverError(f"negative value {vals.min():.3e} on the grid")
    interior = xs[(xs > 0) & (np.abs(xs - s.b_u) > seam_pad)]
    gen_res = [generator_residual(ctx, s, float(x)) for x in interior]
    hjb_xs = xs[xs >= s.kappa]
    hjb_res = [hjb_residual(ctx, s, float(x)) for x in hjb_xs]
    return ValuationReport(
        at_bu=sv.at_bu,
        at_bl=sv.at_bl,
        grid=np.column_stack([xs, vals, dvals]),
        smoothness_gap=sv.smoothness_gap,
        generator_residual_max=float(np.max(np.abs(gen_res))) if gen_res else 0.0,
        hjb_residual_max=float(np.max(np.abs(hjb_res))) if hjb_res else 0.0,
    )


def value_many(
    ctx: ScaleContext,
    bu: np.ndarray,
    bl: np.ndarray,
    kappa: float,
    x0: float,
) -> np.ndarray:
    """Vectorised V(x0) over arrays of admissible (b_u, b_l) pairs.

    Used by brute-force grid searches; mirrors StrategyValuation without the
    per-pair object overhead.
    """
    bu = np.asarray(bu, dtype=float)
    bl = np.asarray(bl, dtype=float)
    d = bu - bl
    if np.any(d < kappa):
        raise PreconditionViolated("inadmissible pair in grid")

    def gA(x):
        return -ctx.A0 * ctx.J(x) - ctx.H(x) + (d - kappa) * ctx.C(x)

    a1, c1 = ctx.Z_gamma_delta(bu), ctx.C(bu)
    a2, c2 = ctx.Z_gamma_delta(d), ctx.C(d) - 1.0
    r1, r2 = -gA(bu), -gA(d)
    det = a1 * c2 - c1 * a2
    vbu = (r1 * c2 - c1 * r2) / det
    vbl = (a1 * r2 - r1 * a2) / det
    vbu = np.where(bl == 0.0, r1 / a1, vbu)
    vbl = np.where(bl == 0.0, 0.0, vbl)
    y0 = bu - x0
    return gA(y0) + ctx.Z_gamma_delta(y0) * vbu + ctx.C(y0) * vbl
