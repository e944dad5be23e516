"""Optimal barrier solves.

Three nested root conditions determine the optimal strategy:

    Q(b)      = H(b)/J(b) + 1/phi = 0           -> b*   (zero-cost barrier)
    Gamma(d)  = 0 with b_u = b_l + d            -> b_u  (smooth pairing)
    G(b_l)    = V'(b_l) = 1                     -> b_l* (marginal value one)

with liquidation (b_l* = 0) whenever G(0) <= 1 or b* = 0.  All solves use
bracketed bisection with expanding upper brackets.  For the Gamma bracketing
the equivalent rescaling Gamma / (J(b_u) J(d)) is used, which stays finite for
arbitrarily large barriers.
"""
from __future__ import annotations

import concurrent.futures
import math
import os
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np

from .errors import BracketNotFound, PreconditionViolated, SolverError
from .model import ModelSpec, TimePreference
from .scale import ScaleContext
from .valuation import Strategy, StrategyValuation

BSTAR_XTOL = 1e-12
BU_XTOL = 1e-13
BL_XTOL = 1e-12
KAPPA0_TOL = 1e-8
BRACKET_CAP = 1e6


@dataclass
class Diagnostics:
    gamma_residual: float
    vprime_residual: Optional[float]
    smoothness_gap: float
    iterations: dict = field(default_factory=dict)


@dataclass
class OptimalSolution:
    b_star: float
    b_u_star: float
    b_l_star: float
    kappa: float
    liquidation: bool
    diagnostics: Diagnostics

    @property
    def strategy(self) -> Strategy:
        return Strategy(self.b_u_star, self.b_l_star, self.kappa)


@dataclass
class SweepRecord:
    parameter: str
    value: float
    b_star: float
    b_u_star: float
    b_l_star: float
    liquidation: bool
    status: str = "ok"


def _bisect(
    f: Callable[[float], float],
    lo: float,
    hi: float,
    xtol: float,
    check_lo: bool = True,
    check_hi: bool = True,
) -> Tuple[float, int]:
    """Root of f on [lo, hi] assuming f(lo) < 0 < f(hi); returns (root, iters)."""
    if check_lo and not f(lo) < 0:
        raise SolverError(f"bracket low end f({lo}) not negative")
    if check_hi and not f(hi) > 0:
        raise SolverError(f"bracket high end f({hi}) not positive")
    it = 0
    while hi - lo > xtol * (1.0 + abs(lo) + abs(hi)) and it < 200:
        mid = 0.5 * (lo + hi)
        if f(mid) < 0:
            lo = mid
        else:
            hi = mid
        it += 1
    return 0.5 * (lo + hi), it


def Q_fn(ctx: ScaleContext, b: float) -> float:
    """Q(b) = H(b)/J(b) + 1/phi_{gamma+delta}; b* is its unique root."""
    return float(ctx.hj_ratio(b)) + 1.0 / ctx.phi_gd


def solve_b_star(ctx: ScaleContext) -> float:
    root, _ = _solve_b_star_count(ctx)
    return root


def _solve_b_star_count(ctx: ScaleContext) -> Tuple[float, int]:
    if Q_fn(ctx, 0.0) >= 0.0:
        return 0.0, 0
    hi = 1.0
    while Q_fn(ctx, hi) <= 0.0:
        hi *= 2.0
        if hi > BRACKET_CAP:
            raise BracketNotFound("no sign change of Q below 1e6")
    root, it = _bisect(lambda b: Q_fn(ctx, b), 0.0, hi, BSTAR_XTOL, check_lo=False,
                       check_hi=False)
    return root, it


def Gamma_fn(ctx: ScaleContext, b_l: float, d: float, kappa: float) -> float:
    """Smoothness function Gamma_{b_l}(d); its root pins b_u = b_l + d.

    The pair of cross products J(d)H(b_u) - J(b_u)H(d) shares its leading
    exponential terms, so it is evaluated through the pairwise form rather
    than as two separate products.
    """
    if d < kappa:
        raise PreconditionViolated("Gamma_fn requires d >= kappa")
    bu = b_l + d
    return (
        (d - kappa - ctx.A0) * ctx.J(bu) - ctx.H(bu) + ctx.jh_cross(d, bu)
    )


def _gamma_scaled(ctx: ScaleContext, b_l: float, d: float, kappa: float) -> float:
    """Gamma / (J(b_u) J(d)): same sign and roots, stable for large barriers."""
    bu = b_l + d
    hj_bu = float(ctx.hj_ratio(bu))
    hj_d = float(ctx.hj_ratio(d))
    inv_jd = float(ctx.inv_J(d))
    # sum the tiny ratio difference first: both terms vanish as d grows and
    # adding hj_bu before subtracting hj_d would absorb the first term
    return (d - kappa - ctx.A0 - hj_bu) * inv_jd + (hj_bu - hj_d)


def solve_b_u(
    ctx: ScaleContext, b_l: float, kappa: float, b_star: Optional[float] = None
) -> float:
    root, _ = _solve_b_u_count(ctx, b_l, kappa, b_star)
    return root


def _solve_b_u_count(
    ctx: ScaleContext, b_l: float, kappa: float, b_star: Optional[float] = None
) -> Tuple[float, int]:
    bs = solve_b_star(ctx) if b_star is None else b_star
    if b_l < 0 or b_l > bs * (1.0 + 1e-12) + 1e-15:
        raise PreconditionViolated(f"b_l = {b_l} outside [0, b*] with b* = {bs}")
    f = lambda d: _gamma_scaled(ctx, b_l, d, kappa)
    lo = kappa * (1.0 + 1e-9) + 1e-12
    hi = max(1.0, 2.0 * kappa)
    while f(hi) <= 0.0:
        hi *= 2.0
        if hi > BRACKET_CAP * (1.0 + kappa):
            raise BracketNotFound("no sign change of Gamma; model pathology")
    d_root, it = _bisect(f, lo, hi, BU_XTOL, check_hi=False)
    bu = b_l + d_root
    if not bu > bs - 1e-9:
        raise SolverError(f"solved b_u = {bu} does not exceed b* = {bs}")
    if not ctx.phi_gd * float(ctx.hj_ratio(bu)) + 1.0 > -1e-10:
        raise SolverError("sign condition phi*H/J + 1 > 0 failed at solved b_u")
    return bu, it


def G_fn(ctx: ScaleContext, b_l: float, kappa: float) -> float:
    """Derivative of the smooth-strategy value at its lower barrier."""
    bu = solve_b_u(ctx, b_l, kappa)
    return ctx.marginal_value_at_lower(bu, bu - b_l)


def solve_optimal(ctx: ScaleContext, kappa: float) -> OptimalSolution:
    """Full three-step solve: b*, then the G = 1 condition, then b_u.

    kappa must be strictly positive: at kappa = 0 the smooth-pair condition
    degenerates (its unique root is d = 0) and the optimal strategy is the
    single periodic barrier b* from solve_b_star.
    """
    if kappa <= 0:
        raise PreconditionViolated(
            "kappa must be > 0; for kappa = 0 use solve_b_star and "
            "value_periodic_barrier"
        )
    bs, it_bstar = _solve_b_star_count(ctx)
    iters = {"b_star": it_bstar}

    liquidation = True
    b_l = 0.0
    vprime_res: Optional[float] = None
    if bs > 0.0:
        g0 = G_fn(ctx, 0.0, kappa)
        if g0 > 1.0:
            # endpoint signs are known: G(0) - 1 > 0 and G(b*) - 1 < 0
            f = lambda b: 1.0 - G_fn(ctx, b, kappa)
            b_l, it_bl = _bisect(f, 0.0, bs, BL_XTOL, check_lo=False, check_hi=False)
            iters["b_l"] = it_bl
            liquidation = False
            vprime_res = G_fn(ctx, b_l, kappa) - 1.0
            if abs(vprime_res) > 1e-8:
                raise SolverError(f"V'(b_l*) - 1 = {vprime_res:.3e} exceeds 1e-8")

    bu, it_bu = _solve_b_u_count(ctx, b_l, kappa, b_star=bs)
    iters["b_u"] = it_bu
    d = bu - b_l
    gamma_res = Gamma_fn(ctx, b_l, d, kappa)
    gap = StrategyValuation(ctx, Strategy(bu, b_l, kappa)).smoothness_gap

    sol = OptimalSolution(
        b_star=bs,
        b_u_star=bu,
        b_l_star=b_l,
        kappa=kappa,
        liquidation=liquidation,
        diagnostics=Diagnostics(gamma_res, vprime_res, gap, iters),
    )
    _check_solution(sol)
    return sol


def _check_solution(sol: OptimalSolution) -> None:
    if sol.b_star > 0 and not (
        -1e-12 <= sol.b_l_star <= sol.b_star * (1 + 1e-9) + 1e-12
        and sol.b_star <= sol.b_u_star + 1e-9
    ):
        raise SolverError(
            f"barrier ordering violated: b_l*={sol.b_l_star} b*={sol.b_star} "
            f"b_u*={sol.b_u_star}"
        )
    if not sol.b_u_star > sol.b_l_star + sol.kappa:
        raise SolverError("b_u* must strictly exceed b_l* + kappa")
    if sol.liquidation != (sol.b_l_star == 0.0):
        raise SolverError("liquidation flag inconsistent with b_l*")


def solve_kappa0(ctx: ScaleContext, kappa_max: float = 1e4) -> float:
    """Smallest cost at which liquidation is optimal; inf if none below cap.

    The liquidation predicate is monotone in kappa, so a plain bisection on it
    converges; kappa = 0 itself is never probed (solve_optimal needs kappa > 0).
    """
    liq = lambda k: solve_optimal(ctx, k).liquidation
    lo, hi = 0.0, 1.0
    while not liq(hi):
        lo = hi
        hi *= 2.0
        if hi > kappa_max:
            return math.inf
    while hi - lo > KAPPA0_TOL:
        mid = 0.5 * (lo + hi)
        if liq(mid):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def _thread_count() -> int:
    env = os.environ.get("PERIDIV_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def sweep(
    model: ModelSpec,
    time_pref: TimePreference,
    parameter: str,
    lo: float,
    hi: float,
    steps: int,
    kappa: float,
) -> List[SweepRecord]:
    """Solve the optimal pair across a parameter grid; failures become row flags."""
    if parameter not in ("kappa", "gamma", "delta"):
        raise ValueError("parameter must be kappa, gamma or delta")
    if steps < 2:
        raise ValueError("steps must be >= 2")
    values = np.linspace(lo, hi, steps)

    def solve_one(v: float) -> SweepRecord:
        try:
            if parameter == "kappa":
                tp = time_pref
                kap = float(v)
            elif parameter == "gamma":
                tp = TimePreference(float(v), time_pref.delta)
                kap = kappa
            else:
                tp = TimePreference(time_pref.gamma, float(v))
                kap = kappa
            ctx = ScaleContext(model, tp)
            sol = solve_optimal(ctx, kap)
            return SweepRecord(
                parameter, float(v), sol.b_star, sol.b_u_star, sol.b_l_star,
                sol.liquidation,
            )
        except Exception as exc:  # degrade row by row, keep sweeping
            return SweepRecord(
                parameter, float(v), math.nan, math.nan, math.nan, False,
                status=f"error:{type(exc).__name__}",
            )

    workers = _thread_count()
    if workers == 1:
        return [solve_one(v) for v in values]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(solve_one, values))
