"""Laplace transforms of the aggregate interference and the exact mixed OP.

Notation: ``omega1`` acts on the interference at the destination ``d`` and
``omega2`` on the interference at the relay ``r``.  For one interfering
cluster at ``x`` with relay offset ``k`` define

    q_c(x) = omega / (omega + ||x - c||^alpha),
    1 - A(x) = q_d(x) + q_r(x) - q_d(x) q_r(x),

so that ``A(x)`` is the fading-averaged transform contribution of a single
transmitter at ``x``.  With ``f = int q_d q_r dx`` and
``h(k) = int (1 - A(x)) (1 - A(x + k)) dx`` the joint transform is

    log L = -lambda_s [p_r t + (1 - p_r) (C (w1^(2/a) + w2^(2/a)) - f)],
    t = 2 [C (w1^(2/a) + w2^(2/a)) - f] - E_k h(k).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from coopnet.errors import IntegrationBudgetExceeded
from coopnet.geometry import sample_relay_offset
from coopnet.netmodel import (
    TWO_PI,
    NetworkParams,
    contention_constant,
    require_zero_rho,
    sir_threshold,
    validate_params,
)

# |u/D - 1| below this switches the two-transform quotient to its limit
EQUAL_DISTANCE_TOL = 1e-6
# absolute truncation error allowed in the f integral tail
F_TAIL_TOL = 1e-12


@dataclass(frozen=True)
class LtQuery:
    omega1: float
    omega2: float
    relay_pos: tuple[float, float]
    dest_pos: tuple[float, float]

    def __post_init__(self):
        for name in ("omega1", "omega2"):
            value = getattr(self, name)
            if isinstance(value, complex) or not value >= 0.0:
                raise ValueError(f"{name} must be real and >= 0 (got {value})")


@dataclass(frozen=True)
class JointLtResult:
    value: float
    rel_error: float
    t: float
    t_std_err: float
    samples: int


@dataclass(frozen=True)
class ExactOutage:
    value: float
    std_err: float
    n: int


def lt_interference_closed(omega, params: NetworkParams, p_r: float | None = None):
    """E exp(-omega I) at a single point; exact for any relay-offset law."""
    require_zero_rho(params)
    if p_r is None:
        p_r = params.p_r
    omega = np.asarray(omega, dtype=float)
    if np.any(omega < 0):
        raise ValueError("omega must be >= 0")
    a = params.alpha
    value = np.exp(-params.lambda_s * contention_constant(a) * omega ** (2.0 / a) * (1.0 + 2.0 * p_r / a))
    return float(value) if value.ndim == 0 else value


# --- f: deterministic 2-D integral ----------------------------------------

def _q(points, center, omega, alpha):
    dist2 = np.sum((points - center) ** 2, axis=-1)
    return omega / (omega + dist2 ** (alpha / 2.0))


def f_integral(omega1, omega2, dest, relay, alpha: float, n_panels: int = 32, n_radial: int = 16):
    """``int q_d(x) q_r(x) dx``, vectorised over a batch of queries.

    Polar grid centred on the narrower peak: Gauss-Legendre panels in
    log-radius and a periodic trapezoid rule in angle.  The outer radius is
    where the ``omega1 omega2 rho^(2 - 2 alpha)`` tail drops below
    ``F_TAIL_TOL``.
    """
    w1 = np.atleast_1d(np.asarray(omega1, dtype=float))
    w2 = np.atleast_1d(np.asarray(omega2, dtype=float))
    dest = np.broadcast_to(np.asarray(dest, dtype=float), w1.shape + (2,))
    relay = np.broadcast_to(np.asarray(relay, dtype=float), w1.shape + (2,))
    s1 = w1 ** (1.0 / alpha)
    s2 = w2 ** (1.0 / alpha)
    out = np.zeros(w1.shape)
    live = (w1 > 0) & (w2 > 0)
    if not np.any(live):
        return out if np.ndim(omega1) else float(out[0])
    w1, w2, s1, s2 = w1[live], w2[live], s1[live], s2[live]
    dest, relay = dest[live], relay[live]
    narrow_is_d = s1 <= s2
    center = np.where(narrow_is_d[:, None], dest, relay)
    s_small = np.minimum(s1, s2)
    s_big = np.maximum(s1, s2)
    sep = np.hypot(*(dest - relay).T)
    # angular nodes must resolve the wide peak seen from the narrow one
    n_angle = int(min(1024, max(64, 8 * math.ceil(8.0 * np.max(sep / s_big)))))
    r_in = s_small * 1e-6
    r_out = np.maximum(1e3 * np.maximum(s_big, sep),
                       (TWO_PI * w1 * w2 / ((2 * alpha - 2) * F_TAIL_TOL)) ** (1.0 / (2 * alpha - 2)))
    x, w = np.polynomial.legendre.leggauss(n_radial)
    edges = np.linspace(np.log(r_in), np.log(r_out), n_panels + 1, axis=-1)  # (n, P+1)
    lo = edges[:, :-1, None]
    width = (edges[:, 1:] - edges[:, :-1])[:, :, None]
    u = lo + width * (x + 1.0) / 2.0
    wu = (width * w / 2.0).reshape(len(w1), -1)
    rho = np.exp(u).reshape(len(w1), -1)  # (n, R)
    th = np.arange(n_angle) * (TWO_PI / n_angle)
    pts = center[:, None, None, :] + rho[:, :, None, None] * np.stack([np.cos(th), np.sin(th)], -1)
    val = _q(pts, dest[:, None, None, :], w1[:, None, None], alpha) * _q(
        pts, relay[:, None, None, :], w2[:, None, None], alpha
    )
    ring = val.sum(axis=-1) * (TWO_PI / n_angle)
    out[live] = np.sum(ring * wu * rho * rho, axis=-1)
    return out if np.ndim(omega1) else float(out[0])


# --- h: Monte Carlo over (x, k) -------------------------------------------

def _one_minus_a(points, dest, relay, w1, w2, alpha):
    q1 = _q(points, dest, w1, alpha) if w1 is not None else 0.0
    q2 = _q(points, relay, w2, alpha) if w2 is not None else 0.0
    return q1 + q2 - q1 * q2


def _h_values(w1, w2, dest, relay, k, comp, u_rad, u_ang, alpha):
    """Unbiased single-sample estimates of h(k) by mixture importance sampling.

    Arrays share a leading sample shape; ``w1``/``w2`` may be ``None`` for a
    zero frequency.  The proposal is an equal mixture of heavy-tailed bumps
    (density ~ (1 + rho^2/s^2)^-2) at d, r, d - k and r - k scaled by
    ``omega^(1/alpha)``; ``comp`` picks the bump for each sample.
    """
    centres, scales = [], []
    if w1 is not None:
        s1 = w1 ** (1.0 / alpha)
        centres += [dest, dest - k]
        scales += [s1, s1]
    if w2 is not None:
        s2 = w2 ** (1.0 / alpha)
        centres += [relay, relay - k]
        scales += [s2, s2]
    m = len(centres)
    shape = np.broadcast_shapes(np.shape(comp), np.shape(u_rad), np.shape(k)[:-1])
    centres = np.stack([np.broadcast_to(c, shape + (2,)) for c in centres], axis=0)
    scales = np.stack([np.broadcast_to(s, shape) for s in scales], axis=0)
    comp = np.broadcast_to(np.asarray(comp) % m, shape)
    pick_c = np.take_along_axis(centres, comp[None, ..., None], axis=0)[0]
    pick_s = np.take_along_axis(scales, comp[None, ...], axis=0)[0]
    rad = pick_s * np.sqrt(1.0 / u_rad - 1.0)
    ang = TWO_PI * u_ang
    x = pick_c + np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)
    dens = np.zeros(rad.shape)
    for c, s in zip(centres, scales):
        r2 = np.sum((x - c) ** 2, axis=-1) / (s * s)
        dens += (1.0 / (np.pi * s * s)) * (1.0 + r2) ** -2
    dens /= m
    vals = _one_minus_a(x, dest, relay, w1, w2, alpha) * _one_minus_a(x + k, dest, relay, w1, w2, alpha)
    return vals / dens


def _offset_from_uniforms(u_rad, u_ang, params: NetworkParams):
    # interfering relay offsets are isotropic once the direction theta is averaged out
    rad = np.sqrt(-2.0 * np.log(u_rad) / (params.lambda_in * params.phi0))
    ang = TWO_PI * u_ang
    return np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)


def _draw_h_uniforms(rng, shape):
    return {
        "k_rad": 1.0 - rng.random(shape),
        "k_ang": rng.random(shape),
        "x_rad": 1.0 - rng.random(shape),
        "x_ang": rng.random(shape),
    }


def _comp_index(shape):
    # deterministic stratification over mixture components
    return np.broadcast_to(np.arange(shape[-1]), shape)


def joint_lt_numeric(query: LtQuery, params: NetworkParams, p_r: float | None = None, *,
                     seed: int = 0, target_rel_error: float = 1e-3, batch: int = 1 << 18,
                     max_samples: int = 1 << 24) -> JointLtResult:
    """Joint transform E exp(-omega1 I_d - omega2 I_r) of the exact interference.

    ``f`` comes from deterministic quadrature; ``E_k h(k)`` is sampled in
    batches until the relative standard error of ``t`` falls below
    ``target_rel_error``.  ``rel_error`` is the propagated relative error of
    the returned value.
    """
    validate_params(params)
    require_zero_rho(params)
    if p_r is None:
        p_r = params.p_r
    a = params.alpha
    w1, w2 = float(query.omega1), float(query.omega2)
    if w1 == 0.0 and w2 == 0.0:
        return JointLtResult(1.0, 0.0, 0.0, 0.0, 0)
    dest = np.asarray(query.dest_pos, dtype=float)
    relay = np.asarray(query.relay_pos, dtype=float)
    C = contention_constant(a)
    single = C * (w1 ** (2.0 / a) + w2 ** (2.0 / a)) - f_integral(w1, w2, dest, relay, a)
    if p_r == 0.0:
        return JointLtResult(math.exp(-params.lambda_s * single), 0.0, float(2.0 * single), 0.0, 0)

    rng = np.random.default_rng(seed)
    total = total_sq = 0.0
    n = 0
    t = t_err = math.nan
    while n < max_samples:
        m = min(batch, max_samples - n)
        u = _draw_h_uniforms(rng, (m,))
        k = _offset_from_uniforms(u["k_rad"], u["k_ang"], params)
        vals = _h_values(w1 or None, w2 or None, dest, relay, k, np.arange(m), u["x_rad"], u["x_ang"], a)
        total += vals.sum()
        total_sq += np.dot(vals, vals)
        n += m
        mean_h = total / n
        var_h = max(total_sq / n - mean_h * mean_h, 0.0)
        t = 2.0 * single - mean_h
        t_err = math.sqrt(var_h / n)
        if t_err <= target_rel_error * abs(t):
            break
    log_l = -params.lambda_s * (p_r * t + (1.0 - p_r) * single)
    rel = params.lambda_s * p_r * t_err
    if t_err > target_rel_error * abs(t):
        raise IntegrationBudgetExceeded(
            f"relative error {t_err / abs(t):.3g} on t after {n} samples", t_err / abs(t)
        )
    return JointLtResult(math.exp(log_l), float(rel), float(t), float(t_err), n)


# --- exact OP --------------------------------------------------------------

def _joint_lt_batch(w1, w2, dest, relay, uniforms, params, p_r):
    """Joint transforms for a batch of (w1, w2, relay) with m h-samples each."""
    a = params.alpha
    C = contention_constant(a)
    single = C * (w1 ** (2.0 / a) + w2 ** (2.0 / a)) - f_integral(w1, w2, dest, relay, a)
    if p_r == 0.0:
        return np.exp(-params.lambda_s * single)
    k = _offset_from_uniforms(uniforms["k_rad"], uniforms["k_ang"], params)  # (n, m, 2)
    comp = _comp_index(k.shape[:-1])
    h = _h_values(w1[:, None], w2[:, None], dest, relay[:, None, :], k, comp,
                  uniforms["x_rad"], uniforms["x_ang"], a).mean(axis=1)
    t = 2.0 * single - h
    return np.exp(-params.lambda_s * (p_r * t + (1.0 - p_r) * single))


def _success_given_relay(relay, params, p_r, uniforms):
    """P(no outage | r) for DF, one Monte Carlo draw of h per relay position."""
    a = params.alpha
    D = params.dest_distance
    T = sir_threshold(params.rate)
    dest = np.array(params.dest)
    u = np.hypot(*(relay - dest).T) ** a  # ||r - d||^alpha
    v = D**a
    w_relay = T * np.sum(relay * relay, axis=-1) ** (a / 2.0)
    lt_u = _joint_lt_batch(T * u, w_relay, dest, relay, uniforms, params, p_r)
    lt_v = _joint_lt_batch(T * np.full_like(u, v), w_relay, dest, relay, uniforms, params, p_r)
    with np.errstate(divide="ignore", invalid="ignore"):
        success = (v * lt_u - u * lt_v) / (v - u)
    near = np.abs(u / v - 1.0) < EQUAL_DISTANCE_TOL
    if np.any(near):
        # limit g(TV) - TV g'(TV) with a common-random-number central difference
        step = 1e-4
        sub = {key: val[near] for key, val in uniforms.items()}
        rel, wr = relay[near], w_relay[near]
        ones = np.full(rel.shape[0], T * v)
        g_hi = _joint_lt_batch(ones * (1 + step), wr, dest, rel, sub, params, p_r)
        g_lo = _joint_lt_batch(ones * (1 - step), wr, dest, rel, sub, params, p_r)
        deriv = (g_hi - g_lo) / (2.0 * step)  # = TV g'(TV)
        success[near] = lt_v[near] - deriv
    return success


def op_mix_exact(params: NetworkParams, p_r: float | None = None, r_expectation_samples: int = 10_000,
                 *, h_samples: int = 64, seed: int = 0, batch: int = 256) -> ExactOutage:
    """Exact mixed-scheme OP from the joint interference transforms.

    The relay expectation is a Monte Carlo average over the typical relay
    (cone around theta = 0); each relay position uses ``h_samples`` draws
    for ``E_k h(k)``, shared between its two transforms.  ``std_err`` is the
    sample standard error of the relay average and so includes the h noise.
    """
    validate_params(params)
    require_zero_rho(params)
    if p_r is None:
        p_r = params.p_r
    if not 0.0 <= p_r <= 1.0:
        raise ValueError(f"p_r must lie in [0, 1] (got {p_r})")
    a = params.alpha
    T = sir_threshold(params.rate)
    v = params.dest_distance**a
    dt = 1.0 - lt_interference_closed(T * v, params, p_r)
    if p_r == 0.0:
        return ExactOutage(dt, 0.0, 0)
    n = int(r_expectation_samples)
    if n < 2:
        raise ValueError("r_expectation_samples must be >= 2")
    rng = np.random.default_rng(seed)
    relays = np.asarray(sample_relay_offset(params, 0.0, rng, size=n)).reshape(n, 2)
    fails = np.empty(n)
    for start in range(0, n, batch):
        sl = slice(start, min(start + batch, n))
        uniforms = _draw_h_uniforms(rng, (sl.stop - sl.start, h_samples))
        fails[sl] = 1.0 - _success_given_relay(relays[sl], params, p_r, uniforms)
    df_mean = fails.mean()
    df_err = fails.std(ddof=1) / math.sqrt(n)
    value = (1.0 - p_r) * dt + p_r * df_mean
    return ExactOutage(float(value), float(p_r * df_err), n)
