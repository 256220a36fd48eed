"""Closed-form outage analysis of the mixed DF/DT network.

Covers the direct-transmission outage, the union upper bound on the mixed
outage, the concavity and on/off thresholds on sigma_in, the OP gain ratio
and the two optimizers built on them (cone aperture and maximum rate).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq
from scipy.special import erf, i0e, i1e

from coopnet.errors import (
    HypothesisViolated,
    MaxIterationsExceeded,
    QuadratureNonConvergence,
    RootNotBracketed,
    TargetUnreachable,
)
from coopnet.netmodel import (
    TWO_PI,
    NetworkParams,
    derive_scalars,
    require_zero_rho,
    validate_params,
)

# lambda_s * delta * D^2 must stay below this for the concavity results
HIGH_RELIABILITY_LIMIT = (3.0 - math.sqrt(5.0)) / 2.0
ROOT_SCAN_CELLS = 64


class RegimeWarning(UserWarning):
    """The union bound left [0, 1] and was clamped."""


@dataclass(frozen=True)
class SpecialFunctionConfig:
    abs_tol: float = 1e-12
    # scaled Bessel functions are accurate everywhere, so the switch to the
    # large-argument form happens immediately
    series_asymptotic_switch: float = 0.0
    # panel-Gauss nodes per panel for the relay-position quadrature
    quadrature_points: int = 16
    angular_points: int = 64

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be > 0")


DEFAULT_CONFIG = SpecialFunctionConfig()


# --- special functions ---------------------------------------------------

def nuttall_q20(s: float) -> float:
    """Nuttall Q_{2,0}(s, 0) via exponentially scaled Bessel functions.

    sigma * Q_{2,0}(D / sigma, 0) is the mean distance between a point at
    distance D and an isotropic 2-D Gaussian of per-axis std sigma.
    """
    if s < 0:
        raise ValueError("nuttall_q20 requires s >= 0")
    x = 0.25 * s * s
    # e^{-x} I_n(x) == i{n}e(x) for x >= 0
    return math.sqrt(math.pi / 8.0) * ((s * s + 2.0) * i0e(x) + s * s * i1e(x))


def gamma_factor(s_param: float, phi0: float) -> float:
    bracket = 8.0 * (1.0 - math.cos(phi0 / 4.0)) / phi0 - 2.0
    return math.sqrt(math.pi / 2.0) * (1.0 + bracket * erf(1.0 / (math.sqrt(2.0) * s_param)))


# --- relay position quadrature -------------------------------------------

@lru_cache(maxsize=8)
def _gauss_legendre(n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def _panel_edges(rk, width, top, levels: int = 12):
    """Breakpoints on [0, top] graded geometrically away from ``rk``.

    Panel sizes start at ``width`` (the scale of the near-kink of the
    distance function) and double outwards, so the kink is resolved however
    sharp it is.  Clipping to [0, top] leaves some zero-width panels, which
    carry no weight.
    """
    rk = np.clip(rk, 0.0, top)[:, None]
    width = np.maximum(width, 1e-300)[:, None]
    steps = np.exp2(np.arange(levels)) - 1.0
    left = np.clip(rk - width * steps[::-1], 0.0, top)
    right = np.clip(rk + width * steps[1:], 0.0, top)
    left[:, 0] = 0.0
    right[:, -1] = top
    # fixed breakpoints resolving the radial density itself
    base = np.broadcast_to(np.linspace(0.0, top, 15), (rk.shape[0], 15))
    return np.sort(np.concatenate([left, right, base], axis=1), axis=1)


def relay_quadrature(lambda_in: float, phi0: float, dest_distance: float, n_angle: int = 64,
                     n_radial: int = 16):
    """Nodes and weights for expectations over the typical relay position.

    The relay has density ``lambda_in * rho * exp(-lambda_in*phi0*rho^2/2)``
    on the cone ``|phi| < phi0/2`` pointing at (D, 0).  Radial panels are
    graded towards rho = D cos(phi), where ``||r - d||`` has its near-kink.
    Returns ``(points, weights)`` with ``weights.sum() == 1`` up to rounding.
    """
    half = phi0 / 2.0
    ua, wa = _gauss_legendre(n_angle)
    ang = ua * half
    w_ang = wa  # uniform angle on [0, half], normalised
    c = lambda_in * phi0 / 2.0  # rho^2 ~ Exp(c)
    top = math.sqrt(45.0 / c)
    rk = dest_distance * np.cos(ang)
    kink = np.maximum(dest_distance * np.sin(ang), 0.05 / math.sqrt(c))
    edges = _panel_edges(rk, kink, top)  # (na, npanel+1)
    ur, wr = _gauss_legendre(n_radial)
    lo = edges[:, :-1, None]
    width = (edges[:, 1:] - edges[:, :-1])[:, :, None]
    rho = lo + width * ur  # (na, npanel, nr)
    w_rad = width * wr * 2.0 * c * rho * np.exp(-c * rho * rho)
    weights = w_ang[:, None, None] * w_rad
    cos_a = np.cos(ang)[:, None, None]
    sin_a = np.sin(ang)[:, None, None]
    px = (rho * cos_a).ravel()
    py = (rho * sin_a).ravel()
    w = weights.ravel() / 2.0
    # mirror onto the lower half of the cone
    points = np.concatenate([np.stack([px, py], -1), np.stack([px, -py], -1)])
    return points, np.concatenate([w, w])


def relay_expectation(fn, params: NetworkParams, config: SpecialFunctionConfig = DEFAULT_CONFIG):
    """E_r[fn(r)] for the typical relay; ``fn`` maps an (n, 2) array to (n,)."""
    pts, w = relay_quadrature(params.lambda_in, params.phi0, params.dest_distance,
                              config.angular_points, config.quadrature_points)
    return float(np.dot(w, fn(pts)))


def _mean_relay_dest_distance_numeric(lambda_in, phi0, D, config):
    def dist(pts):
        return np.hypot(pts[:, 0] - D, pts[:, 1])

    fine = relay_quadrature(lambda_in, phi0, D, config.angular_points, config.quadrature_points)
    value = float(np.dot(fine[1], dist(fine[0])))
    coarse = relay_quadrature(lambda_in, phi0, D, config.angular_points // 2,
                              max(4, config.quadrature_points // 2))
    check = float(np.dot(coarse[1], dist(coarse[0])))
    tol = 1e-6 * max(D, (TWO_PI * lambda_in) ** -0.5)
    if abs(value - check) > tol:
        raise QuadratureNonConvergence(
            f"relay-destination distance quadrature did not settle: |{value} - {check}| > {tol}"
        )
    return value


def expected_relay_dest_distance(params: NetworkParams, config: SpecialFunctionConfig = DEFAULT_CONFIG,
                                 *, numeric: bool = False) -> float:
    """E||r - d||; closed form for the full plane, quadrature for a cone.

    ``numeric=True`` forces the quadrature branch even when phi0 = 2 pi.
    """
    D = params.dest_distance
    sigma = params.sigma_in
    if not numeric and math.isclose(params.phi0, TWO_PI, rel_tol=0, abs_tol=1e-12):
        return sigma * nuttall_q20(D / sigma)
    return _mean_relay_dest_distance_numeric(params.lambda_in, params.phi0, D, config)


def relay_dest_distance_bound(params: NetworkParams) -> float:
    """Upper bound D (1 + s gamma(s, phi0)) on E||r - d||."""
    s = derive_scalars(params).s_param
    return params.dest_distance * (1.0 + s * gamma_factor(s, params.phi0))


# --- outage probabilities ------------------------------------------------

def op_dt(params: NetworkParams) -> float:
    validate_params(params)
    sc = derive_scalars(params)
    return -math.expm1(-params.lambda_s * sc.delta * params.dest_distance**2)


@dataclass(frozen=True)
class MixBound:
    value: float
    raw: float
    clamped: bool


def mix_bound(params: NetworkParams, p_r: float | None = None,
              mean_rd: float | None = None) -> MixBound:
    """Union upper bound on the mixed outage with its clamping flag.

    ``mean_rd`` lets callers reuse a precomputed E||r - d||.
    """
    validate_params(params)
    require_zero_rho(params)
    if p_r is None:
        p_r = params.p_r
    if not 0.0 <= p_r <= 1.0:
        raise ValueError(f"p_r must lie in [0, 1] (got {p_r})")
    alpha = params.alpha
    D = params.dest_distance
    sc = derive_scalars(params, p_r)
    lam_delta = params.lambda_s * sc.big_delta
    nu = sc.nu
    dt_part = -math.expm1(-nu)
    if p_r == 0.0:
        raw = dt_part
    else:
        if mean_rd is None:
            mean_rd = expected_relay_dest_distance(params)
        phi_lin = params.phi0 * params.lambda_in
        mean_exp_r = phi_lin / (phi_lin + 2.0 * lam_delta)
        df_part = 2.0 - mean_exp_r - math.exp(-nu) * (
            1.0 + nu * (1.0 + (2.0 - alpha) / (alpha * D) * mean_rd)
        )
        raw = (1.0 - p_r) * dt_part + p_r * df_part
    raw = float(raw)
    value = min(max(raw, 0.0), 1.0)
    return MixBound(value, raw, value != raw)


def op_mix_upper_bound(params: NetworkParams, p_r: float | None = None) -> float:
    bound = mix_bound(params, p_r)
    if bound.clamped:
        warnings.warn(f"union bound {bound.raw:.6g} clamped to [0, 1]", RegimeWarning, stacklevel=2)
    return bound.value


# --- sigma thresholds ----------------------------------------------------

@dataclass(frozen=True)
class ThresholdRoot:
    root: float
    closed_bound: float


def _check_hypothesis(params: NetworkParams):
    nu0 = derive_scalars(params, 0.0).nu
    if not nu0 < HIGH_RELIABILITY_LIMIT:
        raise HypothesisViolated(
            f"lambda_s*delta*D^2 = {nu0:.6g} is not below (3 - sqrt 5)/2 = {HIGH_RELIABILITY_LIMIT:.6f}"
        )


def _mean_rd_at(params: NetworkParams, sigma: float) -> float:
    if sigma == 0.0:
        return params.dest_distance
    return expected_relay_dest_distance(params.replace(sigma_in=sigma))


def _concavity_residual(params, sigma):
    a, D, phi0 = params.alpha, params.dest_distance, params.phi0
    return (4.0 * math.pi * a * sigma**2 / (phi0 * D**2)
            + (a - 2.0) * _mean_rd_at(params, sigma) / D - a)


def _gain_ratio_formula(params, sigma, mean_rd=None):
    a, D, phi0 = params.alpha, params.dest_distance, params.phi0
    if mean_rd is None:
        mean_rd = _mean_rd_at(params, sigma)
    return float(1.0 + 2.0 / a) * float(4.0 * math.pi * sigma**2 / (phi0 * D**2) + (1.0 - 2.0 / a) * mean_rd / D)


def _activation_residual(params, sigma):
    return _gain_ratio_formula(params, sigma) - 1.0


def _scan_grid(params):
    hi = 2.0 * params.dest_distance * math.sqrt(params.phi0 / TWO_PI)
    return [hi * j / ROOT_SCAN_CELLS for j in range(1, ROOT_SCAN_CELLS + 1)]


def _smallest_root(residual, params) -> float:
    """First sign change of ``residual`` on the scan grid, refined by bracketing."""
    prev = 0.0
    for sigma in _scan_grid(params):
        if residual(params, sigma) > 0.0:
            return brentq(lambda s: residual(params, s), prev, sigma, xtol=1e-14, rtol=1e-10)
        prev = sigma
    raise RootNotBracketed("no sign change of the threshold equation on (0, 2D sqrt(phi0/2pi)]")


def _below_first_root(residual, params, sigma) -> bool:
    """True iff ``sigma`` does not exceed the smallest root found by the scan."""
    if residual(params, sigma) > 0.0:
        return False
    return all(residual(params, s) <= 0.0 for s in _scan_grid(params) if s < sigma)


def _closed_threshold(params, const, phi_term):
    D, phi0 = params.dest_distance, params.phi0
    return float(D * math.sqrt(phi0 / TWO_PI) * (math.sqrt(const + phi_term**2) - phi_term))


def sigma_c(params: NetworkParams) -> ThresholdRoot:
    """Largest sigma_in keeping the bound concave in p_r (plus a closed lower bound)."""
    validate_params(params)
    _check_hypothesis(params)
    a = params.alpha
    root = _smallest_root(_concavity_residual, params)
    phi_c = 0.25 * (1.0 - 2.0 / a) * gamma_factor(1.0 / math.sqrt(2.0), params.phi0)
    return ThresholdRoot(root, _closed_threshold(params, 1.0 / a, phi_c))


def sigma_t(params: NetworkParams) -> ThresholdRoot:
    """Largest sigma_in for which activating every relay minimises the bound."""
    validate_params(params)
    _check_hypothesis(params)
    a = params.alpha
    root = _smallest_root(_activation_residual, params)
    phi_t = 0.25 * (1.0 - 2.0 / a) * gamma_factor(0.5, params.phi0)
    return ThresholdRoot(root, _closed_threshold(params, 2.0 / (a * (a + 2.0)), phi_t))


@dataclass(frozen=True)
class ActivationAnalysis:
    sigma_c: float
    sigma_t: float
    sigma_t_closed: float
    decided_p_r: int
    gain_ratio: float
    phi0_used: float


def op_gain_ratio(params: NetworkParams) -> float:
    """OP of the on/off scheme relative to DT (1 when relays stay off)."""
    validate_params(params)
    _check_hypothesis(params)
    root = sigma_t(params).root
    sigma = params.sigma_in
    if sigma > root:
        return 1.0
    ratio = _gain_ratio_formula(params, sigma)
    return min(max(ratio, np.nextafter(0.0, 1.0)), 1.0)


def activation_decision(params: NetworkParams) -> ActivationAnalysis:
    validate_params(params)
    _check_hypothesis(params)
    st = sigma_t(params)
    sc = sigma_c(params)
    on = params.sigma_in <= st.root
    if on:
        ratio = min(max(_gain_ratio_formula(params, params.sigma_in), np.nextafter(0.0, 1.0)), 1.0)
    else:
        ratio = 1.0
    return ActivationAnalysis(
        sigma_c=sc.root,
        sigma_t=st.root,
        sigma_t_closed=st.closed_bound,
        decided_p_r=int(on),
        gain_ratio=ratio,
        phi0_used=params.phi0,
    )


# --- optimizers ----------------------------------------------------------

@dataclass(frozen=True)
class Phi0Optimum:
    phi0_star: float
    ratio_at_star: float


def _ratio_for_phi0(params: NetworkParams, phi0: float) -> float:
    p = params.replace(phi0=phi0)
    sigma = p.sigma_in
    if not _below_first_root(_activation_residual, p, sigma):
        return 1.0
    return min(_gain_ratio_formula(p, sigma), 1.0)


def _golden_min(fn, lo, hi, iters=40, tol=1e-6):
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - inv_phi * (hi - lo)
    x2 = lo + inv_phi * (hi - lo)
    f1, f2 = fn(x1), fn(x2)
    for _ in range(iters):
        if hi - lo < tol:
            break
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv_phi * (hi - lo)
            f1 = fn(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv_phi * (hi - lo)
            f2 = fn(x2)
    return (x1, f1) if f1 <= f2 else (x2, f2)


def optimize_phi0(params: NetworkParams, grid_resolution: int = 64) -> Phi0Optimum:
    """Cone aperture minimising the on/off OP gain ratio.

    Coarse grid over (0, 2 pi] followed by golden-section refinement inside
    the neighbourhood of the best cell.  Falls back to (2 pi, 1) when no
    aperture makes activation worthwhile.
    """
    validate_params(params)
    _check_hypothesis(params)
    step = TWO_PI / grid_resolution
    grid = [step * j for j in range(1, grid_resolution + 1)]
    values = [_ratio_for_phi0(params, phi) for phi in grid]
    best = int(np.argmin(values))
    if values[best] >= 1.0:
        return Phi0Optimum(TWO_PI, 1.0)
    lo = grid[best - 1] if best > 0 else step * 1e-3
    hi = grid[best + 1] if best + 1 < len(grid) else TWO_PI
    phi_star, ratio_star = _golden_min(lambda p: _ratio_for_phi0(params, p), lo, hi)
    candidates = [(values[best], grid[best]), (ratio_star, phi_star), (values[-1], TWO_PI)]
    ratio, phi = min(candidates)
    return Phi0Optimum(phi, ratio)


RATE_CAP = 64.0


def _scheme_op(params: NetworkParams, rate: float, scheme: str) -> float:
    p = params.replace(rate=rate)
    if scheme == "dt":
        return op_dt(p)
    if scheme == "mix":
        mean_rd = expected_relay_dest_distance(p)
        return min(mix_bound(p, 0.0).value, mix_bound(p, 1.0, mean_rd=mean_rd).value)
    raise ValueError(f"unknown scheme {scheme!r}; expected 'mix' or 'dt'")


def max_rate_for_op(params: NetworkParams, op_target: float, scheme: str = "mix",
                    tol: float = 1e-4, max_rate: float = RATE_CAP) -> float:
    """Largest rate whose outage (DT closed form or best on/off bound) meets ``op_target``."""
    if not 0.0 < op_target < 1.0:
        raise ValueError(f"op_target must lie in (0, 1) (got {op_target})")
    validate_params(params)
    lo = 0.0
    if _scheme_op(params, 1e-12, scheme) > op_target:
        raise TargetUnreachable(f"outage exceeds {op_target} even as the rate tends to 0")
    hi = 1.0
    while _scheme_op(params, hi, scheme) <= op_target:
        lo = hi
        hi *= 2.0
        if hi > max_rate:
            raise MaxIterationsExceeded(
                f"outage stays below {op_target} up to the rate cap of {max_rate} bits/use"
            )
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _scheme_op(params, mid, scheme) <= op_target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def dt_rate_for_op(params: NetworkParams, op_target: float) -> float:
    """Closed-form inversion of the DT outage for the rate."""
    from coopnet.netmodel import contention_constant

    C = contention_constant(params.alpha)
    x = -math.log1p(-op_target) / (params.lambda_s * C * params.dest_distance**2)
    return math.log2(1.0 + x ** (params.alpha / 2.0))
