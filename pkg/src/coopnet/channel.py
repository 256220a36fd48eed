"""Path loss, Rayleigh fading, interference sums, DF rate and outage events."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from coopnet.errors import CoincidentPoints
from coopnet.geometry import MarkedRealization
from coopnet.netmodel import NetworkParams, require_zero_rho, sir_threshold


class Role(str, Enum):
    RELAY = "relay"
    DEST = "dest"


class Scheme(str, Enum):
    DF = "DF"
    DT = "DT"


def path_loss(x, y, alpha: float):
    """``||x - y||^-alpha``; works on arrays of points along the last axis."""
    diff = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    dist2 = np.sum(diff * diff, axis=-1)
    if np.any(dist2 == 0.0):
        raise CoincidentPoints("path loss undefined for coincident points")
    out = dist2 ** (-alpha / 2.0)
    return float(out) if np.ndim(out) == 0 else out


def sample_fading(rng: np.random.Generator, size=None):
    """Circular complex Gaussian coefficient(s) with E|h|^2 = 1."""
    scale = math.sqrt(0.5)
    re = rng.normal(0.0, scale, size)
    im = rng.normal(0.0, scale, size)
    return re + 1j * im


@dataclass(frozen=True)
class FadingDraw:
    """Fading coefficients for the typical cluster and every interferer.

    Per-interferer arrays follow the order of ``MarkedRealization.positions``:
    ``h_xr``/``h_kr`` reach the typical relay from the interfering source and
    its relay, ``h_xd``/``h_kd`` reach the typical destination.
    """

    h_sr: complex
    h_sd: complex
    h_rd: complex
    h_xr: np.ndarray
    h_xd: np.ndarray
    h_kr: np.ndarray
    h_kd: np.ndarray

    @classmethod
    def sample(cls, n_interferers: int, rng: np.random.Generator) -> "FadingDraw":
        typical = sample_fading(rng, 3)
        per = sample_fading(rng, (4, n_interferers))
        return cls(complex(typical[0]), complex(typical[1]), complex(typical[2]),
                   per[0], per[1], per[2], per[3])

    def pair(self, role):
        role = Role(role)
        return (self.h_xr, self.h_kr) if role is Role.RELAY else (self.h_xd, self.h_kd)


@dataclass(frozen=True)
class InterferenceSample:
    at_relay: float
    at_dest: float
    mode: str


def _check_distinct(dist2):
    if np.any(dist2 == 0.0):
        raise CoincidentPoints("evaluation point coincides with a transmitter")


def interference_exact(realization: MarkedRealization, fading: FadingDraw, eval_point,
                       role, rho: complex, alpha: float) -> float:
    """Aggregate interference power with separate source/relay path losses."""
    if len(realization) == 0:
        return 0.0
    p = np.asarray(eval_point, dtype=float)
    h1, h2 = fading.pair(role)
    d_src = np.sum((realization.positions - p) ** 2, axis=1)
    d_rel = np.sum((realization.relay_positions - p) ** 2, axis=1)
    _check_distinct(d_src)
    eps = realization.epsilon
    l1 = d_src ** (-alpha / 2.0)
    # inactive relays do not transmit, so their position is irrelevant
    l2 = np.where(eps, np.where(d_rel > 0, d_rel, 1.0) ** (-alpha / 2.0), 0.0)
    if np.any(eps & (d_rel == 0.0)):
        raise CoincidentPoints("evaluation point coincides with an active relay")
    cross = 2.0 * np.real(h1 * np.conj(h2) * rho) * np.sqrt(l1 * l2)
    terms = np.abs(h1) ** 2 * l1 + eps * (np.abs(h2) ** 2 * l2 + cross)
    return float(np.sum(terms))


def interference_farfield(realization: MarkedRealization, fading: FadingDraw, eval_point,
                          role, rho: complex, alpha: float, tau: float = 0.0) -> float:
    """Interference with each cluster collapsed to the point ``x + tau * k``."""
    if len(realization) == 0:
        return 0.0
    p = np.asarray(eval_point, dtype=float)
    h1, h2 = fading.pair(role)
    anchor = realization.positions + tau * realization.relay_offsets
    dist2 = np.sum((anchor - p) ** 2, axis=1)
    _check_distinct(dist2)
    eps = realization.epsilon
    gain = np.abs(h1) ** 2 + eps * (np.abs(h2) ** 2 + 2.0 * np.real(h1 * np.conj(h2) * rho))
    return float(np.sum(gain * dist2 ** (-alpha / 2.0)))


def interference(realization, fading, params: NetworkParams, mode: str = "exact") -> InterferenceSample:
    """Both interference powers of the typical cluster for one realization."""
    r = realization.typical_relay
    d = params.dest
    if mode == "exact":
        i_r = interference_exact(realization, fading, r, Role.RELAY, params.rho, params.alpha)
        i_d = interference_exact(realization, fading, d, Role.DEST, params.rho, params.alpha)
    elif mode == "farfield":
        i_r = interference_farfield(realization, fading, r, Role.RELAY, params.rho, params.alpha, params.tau)
        i_d = interference_farfield(realization, fading, d, Role.DEST, params.rho, params.alpha, params.tau)
    else:
        raise ValueError(f"unknown interference mode {mode!r}")
    return InterferenceSample(i_r, i_d, mode)


def _capacity(sir: float) -> float:
    return math.log2(1.0 + sir) if math.isfinite(sir) else math.inf


def _sir(signal: float, noise: float) -> float:
    if noise < 0:
        raise ValueError("interference power must be non-negative")
    return math.inf if noise == 0 else signal / noise


def _link_gains(fading: FadingDraw, r, params: NetworkParams):
    alpha = params.alpha
    d = params.dest
    l_sr = path_loss((0.0, 0.0), r, alpha)
    l_sd = path_loss((0.0, 0.0), d, alpha)
    l_rd = path_loss(r, d, alpha)
    return (abs(fading.h_sr) ** 2 * l_sr,
            abs(fading.h_sd) ** 2 * l_sd,
            abs(fading.h_rd) ** 2 * l_rd)


def df_rate(fading: FadingDraw, r, params: NetworkParams, i_r: float, i_d: float) -> float:
    """Decode-and-forward rate with uncorrelated source/relay codebooks."""
    require_zero_rho(params)
    g_sr, g_sd, g_rd = _link_gains(fading, r, params)
    return min(_capacity(_sir(g_sr, i_r)), _capacity(_sir(g_sd + g_rd, i_d)))


@dataclass(frozen=True)
class OutageEvents:
    A: bool
    B: bool
    A_DT: bool
    outage: bool


def outage_event(fading: FadingDraw, r, params: NetworkParams, i_r: float, i_d: float,
                 scheme="DF") -> OutageEvents:
    """Relay (A), cooperative destination (B) and direct (A_DT) outage flags."""
    scheme = Scheme(scheme)
    T = sir_threshold(params.rate)
    if scheme is Scheme.DT:
        g_sd = abs(fading.h_sd) ** 2 * path_loss((0.0, 0.0), params.dest, params.alpha)
        a_dt = g_sd < T * i_d
        return OutageEvents(False, False, a_dt, a_dt)
    require_zero_rho(params)
    g_sr, g_sd, g_rd = _link_gains(fading, r, params)
    a = g_sr < T * i_r
    b = g_sd + g_rd < T * i_d
    a_dt = g_sd < T * i_d
    return OutageEvents(a, b, a_dt, a or b)
