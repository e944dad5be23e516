"""Risk-process family with rational Laplace exponent.

The surplus is X(t) = x - c*t + sigma*B(t) + sum of upward jumps, where the
jumps form a compound Poisson process with hyperexponential density
sum_i lam_i * beta_i * exp(-beta_i s).  All fluctuation formulas operate on
the spectrally negative mirror process Y = x - X, whose Laplace exponent is

    psi(theta) = c*theta + (sigma^2/2)*theta^2 + sum_i lam_i*(beta_i/(beta_i+theta) - 1),

a rational function of theta.  Clearing denominators turns psi(theta)-q into a
polynomial, so the roots r_j^(q) and the partial-fraction weights 1/psi'(r_j)
are available in closed form.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Tuple, Union

import numpy as np

from .errors import (
    ModelFileError,
    NearMultipleRoots,
    NoPositiveRealRoot,
    PoleError,
)

Scalar = Union[float, complex, np.ndarray]

ROOT_DISTINCTNESS_TOL = 1e-8
RESIDUAL_TOL = 1e-10
REAL_ROOT_IMAG_TOL = 1e-9


@dataclass(frozen=True)
class ModelSpec:
    """Surplus-process parameters.

    drift_c      continuous expense rate (surplus drifts down at this rate)
    sigma        Brownian volatility, >= 0
    jump_phases  tuple of (rate, scale) pairs: jump intensity lam_i and
                 exponential parameter beta_i of each mixture component
    """

    drift_c: float
    sigma: float
    jump_phases: Tuple[Tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "drift_c", float(self.drift_c))
        object.__setattr__(self, "sigma", float(self.sigma))
        phases = tuple((float(l), float(b)) for l, b in self.jump_phases)
        object.__setattr__(self, "jump_phases", phases)
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        for lam, beta in phases:
            if lam <= 0 or beta <= 0:
                raise ValueError("jump rates and scales must be > 0")
        betas = [b for _, b in phases]
        if len(set(betas)) != len(betas):
            raise ValueError("jump scales beta_i must be pairwise distinct")
        # monotone paths carry no risk and are excluded
        if not (self.sigma > 0 or (phases and self.drift_c > 0)):
            raise ValueError(
                "degenerate model: need sigma > 0, or jumps together with drift_c > 0"
            )

    @property
    def rates(self) -> np.ndarray:
        return np.array([l for l, _ in self.jump_phases], dtype=float)

    @property
    def scales(self) -> np.ndarray:
        return np.array([b for _, b in self.jump_phases], dtype=float)

    @property
    def total_jump_rate(self) -> float:
        return float(sum(l for l, _ in self.jump_phases))

    @property
    def mu(self) -> float:
        """Net drift of the surplus, mu = -psi'(0+) = sum lam_i/beta_i - c."""
        return float(sum(l / b for l, b in self.jump_phases) - self.drift_c)

    @property
    def bounded_variation(self) -> bool:
        return self.sigma == 0.0

    def n_roots(self, q: float = 1.0) -> int:
        """Degree of the cleared polynomial: m+2 with diffusion, m+1 without."""
        m = len(self.jump_phases)
        return m + 2 if self.sigma > 0 else m + 1


@dataclass(frozen=True)
class TimePreference:
    """Poisson intensity of decision times (gamma) and discount force (delta)."""

    gamma: float
    delta: float

    def __post_init__(self):
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "delta", float(self.delta))
        if self.gamma <= 0:
            raise ValueError("gamma must be > 0")
        if self.delta <= 0:
            raise ValueError("delta must be > 0")


def _check_poles(model: ModelSpec, theta: Scalar) -> None:
    th = np.asarray(theta)
    for _, beta in model.jump_phases:
        if np.any(np.abs(th + beta) == 0.0):
            raise PoleError(f"theta equals pole -beta_i = {-beta}")


def laplace_exponent(model: ModelSpec, theta: Scalar) -> Scalar:
    """psi(theta); accepts real or complex scalars and arrays."""
    _check_poles(model, theta)
    th = np.asarray(theta)
    out = model.drift_c * th + 0.5 * model.sigma**2 * th * th
    for lam, beta in model.jump_phases:
        out = out + lam * (beta / (beta + th) - 1.0)
    return out if isinstance(theta, np.ndarray) else out[()]


def psi_derivatives(model: ModelSpec, theta: Scalar) -> Tuple[Scalar, Scalar]:
    """(psi', psi'') in closed form."""
    _check_poles(model, theta)
    th = np.asarray(theta)
    d1 = model.drift_c + model.sigma**2 * th
    d2 = np.full_like(th, model.sigma**2, dtype=np.result_type(th, float))
    for lam, beta in model.jump_phases:
        d1 = d1 - lam * beta / (beta + th) ** 2
        d2 = d2 + 2.0 * lam * beta / (beta + th) ** 3
    if isinstance(theta, np.ndarray):
        return d1, d2
    return d1[()], d2[()]


def psi_prime(model: ModelSpec, theta: Scalar) -> Scalar:
    return psi_derivatives(model, theta)[0]


@dataclass(frozen=True, eq=False)
class RootDecomposition:
    """Roots r_j of psi(theta)-q = 0 with partial-fraction weights 1/psi'(r_j).

    phi_q is the unique strictly positive real root (the right inverse of psi
    at q).  Roots are kept in complex arithmetic; conjugate pairs carry
    conjugate weights.
    """

    q: float
    roots: np.ndarray
    weights: np.ndarray
    phi_q: float

    def __post_init__(self):
        self.roots.setflags(write=False)
        self.weights.setflags(write=False)


def _cleared_polynomial(model: ModelSpec, q: float) -> np.ndarray:
    """Descending coefficients of (psi(theta)-q) * prod_i (beta_i + theta)."""
    a = 0.5 * model.sigma**2
    lam_sum = model.total_jump_rate
    if a > 0:
        base = np.array([a, model.drift_c, -(q + lam_sum)])
    else:
        base = np.array([model.drift_c, -(q + lam_sum)])
    betas = model.scales
    prod_all = np.array([1.0])
    for b in betas:
        prod_all = np.convolve(prod_all, [1.0, b])
    poly = np.convolve(base, prod_all)
    for i, (lam, beta) in enumerate(model.jump_phases):
        prod_others = np.array([1.0])
        for j, b in enumerate(betas):
            if j != i:
                prod_others = np.convolve(prod_others, [1.0, b])
        term = lam * beta * prod_others
        poly[len(poly) - len(term):] += term
    return poly


@functools.lru_cache(maxsize=256)
def _solve_roots_cached(model: ModelSpec, q: float) -> RootDecomposition:
    poly = _cleared_polynomial(model, q)
    roots = np.roots(poly)  # companion-matrix eigenvalues
    # one Newton polish step on psi(theta)-q per root
    resid = laplace_exponent(model, roots) - q
    roots = roots - resid / psi_prime(model, roots)

    resid = np.abs(laplace_exponent(model, roots) - q)
    tol = RESIDUAL_TOL * (1.0 + abs(q))
    if np.any(resid > tol):
        raise NearMultipleRoots(
            f"root residual {resid.max():.3e} exceeds {tol:.3e} at q={q}"
        )

    diffs = np.abs(roots[:, None] - roots[None, :])
    np.fill_diagonal(diffs, np.inf)
    spread = np.abs(roots[:, None] - roots[None, :]).max()
    if diffs.min() < ROOT_DISTINCTNESS_TOL * max(spread, 1.0):
        raise NearMultipleRoots(
            f"roots separated by {diffs.min():.3e} (spread {spread:.3e}) at q={q}"
        )

    is_real = np.abs(roots.imag) <= REAL_ROOT_IMAG_TOL * (1.0 + np.abs(roots))
    roots = np.where(is_real, roots.real + 0.0j, roots)
    pos_real = roots.real[is_real & (roots.real > 0)]
    if pos_real.size == 0:
        raise NoPositiveRealRoot(f"no positive real root of psi(theta)={q}")
    phi_q = float(pos_real.max())

    order = np.lexsort((roots.imag, roots.real))
    roots = roots[order]
    weights = 1.0 / psi_prime(model, roots)
    return RootDecomposition(q=float(q), roots=roots, weights=weights, phi_q=phi_q)


def solve_roots(model: ModelSpec, q: float) -> RootDecomposition:
    """All roots of psi(theta)-q = 0 for q > 0, with weights and phi_q."""
    if q <= 0:
        raise ValueError("solve_roots requires q > 0")
    return _solve_roots_cached(model, float(q))


def phi(model: ModelSpec, q: float) -> float:
    """Right inverse of psi: the largest real s with psi(s) = q, for q >= 0."""
    if q < 0:
        raise ValueError("phi requires q >= 0")
    if q > 0:
        return solve_roots(model, q).phi_q
    if model.mu <= 0:
        return 0.0
    lo = 1e-12
    if laplace_exponent(model, lo) >= 0:
        return 0.0  # positive zero below resolution
    hi = 1.0
    while laplace_exponent(model, hi) <= 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if laplace_exponent(model, mid) <= 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * (1.0 + hi):
            break
    return 0.5 * (lo + hi)


_MODEL_KEYS = {"drift_c", "sigma", "gamma", "delta"}


def parse_model_text(text: str) -> Tuple[ModelSpec, TimePreference]:
    """Parse the flat key-value model format.

    Recognised keys: drift_c, sigma, gamma, delta, jump_rate_i / jump_scale_i
    for i = 1..m.  Unknown keys, unparsable values, or unpaired jump entries
    raise ModelFileError.
    """
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ModelFileError(f"line {lineno}: expected 'key = value'")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key in values:
            raise ModelFileError(f"line {lineno}: duplicate key {key!r}")
        try:
            values[key] = float(val)
        except ValueError:
            raise ModelFileError(f"line {lineno}: bad number {val!r} for {key!r}")

    phases = []
    i = 1
    while f"jump_rate_{i}" in values or f"jump_scale_{i}" in values:
        rk, sk = f"jump_rate_{i}", f"jump_scale_{i}"
        if rk not in values or sk not in values:
            raise ModelFileError(f"jump phase {i} needs both {rk} and {sk}")
        phases.append((values.pop(rk), values.pop(sk)))
        i += 1

    unknown = set(values) - _MODEL_KEYS
    if unknown:
        raise ModelFileError(f"unknown keys: {sorted(unknown)}")
    missing = _MODEL_KEYS - set(values)
    if missing:
        raise ModelFileError(f"missing keys: {sorted(missing)}")

    try:
        model = ModelSpec(values["drift_c"], values["sigma"], tuple(phases))
        tp = TimePreference(values["gamma"], values["delta"])
    except ValueError as exc:
        raise ModelFileError(str(exc))
    return model, tp


def load_model_file(path: str) -> Tuple[ModelSpec, TimePreference]:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_model_text(fh.read())
