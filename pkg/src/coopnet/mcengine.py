"""Monte Carlo outage estimation over realizations of the marked source PPP.

Realizations are simulated in fixed-size blocks.  Every block draws from its
own streams, derived from ``(seed, block index, part)``, so results do not
depend on how blocks are spread over worker processes.  Parts:

* 0, 1: sources in the core disk and in the outer annulus of the window;
* 2: the typical cluster (relay position, activation uniform, link gains);
* 3, 4: own-link gains of core/annulus interferers (threshold schemes only).

Splitting the window into a fixed core plus annulus keeps the core draws
unchanged when only the outer radius changes.  Fading enters through power
gains only (rho = 0), which are unit exponentials.  Activation marks are
``u < p`` with one uniform per cluster, so all p_r values and thresholds in a
single call share common random numbers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from coopnet.channel import FadingDraw
from coopnet.closedform import relay_expectation
from coopnet.geometry import (
    MarkedRealization,
    SimulationWindow,
    default_window,
    relay_offsets_from_uniforms,
    uniform_in_disk,
)
from coopnet.netmodel import (
    TWO_PI,
    NetworkParams,
    require_zero_rho,
    sir_threshold,
    validate_params,
)

BLOCK_SIZE = 2048
# core disk radius in multiples of the link length
CORE_RADIUS = 20.0
SCHEMES = ("mixed", "dt", "df_only")
THRESHOLD_SCHEMES = ("sr_threshold", "rd_threshold")
INTERFERER_RULES = ("field", "bernoulli")


@dataclass(frozen=True)
class McConfig:
    realizations: int = 100_000
    seed: int = 0
    interference_mode: str = "exact"
    window_override: SimulationWindow | None = None
    workers: int = 1

    def __post_init__(self):
        if int(self.realizations) < 1:
            raise ValueError(f"realizations must be >= 1 (got {self.realizations})")
        if self.interference_mode not in ("exact", "farfield"):
            raise ValueError(f"interference_mode must be 'exact' or 'farfield' (got {self.interference_mode!r})")
        if int(self.workers) < 1:
            raise ValueError(f"workers must be >= 1 (got {self.workers})")


@dataclass(frozen=True)
class OutageEstimate:
    p_hat: float
    std_err: float
    n: int
    breakdown: dict = field(default_factory=dict)

    @classmethod
    def from_counts(cls, outages: int, n: int, breakdown: dict) -> "OutageEstimate":
        p = outages / n
        return cls(p, math.sqrt(p * (1.0 - p) / n), n, breakdown)


# --- block draws -----------------------------------------------------------

@dataclass
class _Block:
    n: int
    idx: np.ndarray  # realization index of each interferer
    x: np.ndarray
    k: np.ndarray
    theta: np.ndarray
    u_act: np.ndarray
    gains: np.ndarray  # (4, M): source->relay, relay->relay, source->dest, relay->dest
    own: np.ndarray | None  # (2, M): own source->relay, own relay->dest
    relay: np.ndarray  # (n, 2) typical relay
    u_act0: np.ndarray
    link: np.ndarray  # (3, n): sr, sd, rd


def _stream(seed: int, block: int, part: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(block, part)))


def _core_radius(params, window):
    return min(window.radius, CORE_RADIUS * params.dest_distance)


def _draw_sources(params, window, rng, n, inner, outer):
    lam = params.lambda_s
    counts = rng.poisson(lam * math.pi * (outer**2 - inner**2), n)
    m = int(counts.sum())
    x = uniform_in_disk(rng.random(m), rng.random(m), window.center, outer, inner)
    u_act = rng.random(m)
    theta = TWO_PI * rng.random(m)
    k = relay_offsets_from_uniforms(1.0 - rng.random(m), rng.random(m), theta,
                                    params.lambda_in, params.phi0)
    gains = rng.standard_exponential((4, m))
    idx = np.repeat(np.arange(n), counts)
    return idx, x.reshape(m, 2), k.reshape(m, 2), theta, u_act, gains


def _draw_block(params: NetworkParams, seed: int, window: SimulationWindow, block: int, n: int,
                with_own: bool) -> _Block:
    core = _core_radius(params, window)
    pieces = [_draw_sources(params, window, _stream(seed, block, 0), n, 0.0, core)]
    if window.radius > core:
        pieces.append(_draw_sources(params, window, _stream(seed, block, 1), n, core, window.radius))
    idx, x, k, theta, u_act = (np.concatenate(p) for p in list(zip(*pieces))[:5])
    gains = np.concatenate([p[5] for p in pieces], axis=1)
    own = None
    if with_own:
        own = np.concatenate([_stream(seed, block, 3 + j).standard_exponential((2, len(p[0])))
                              for j, p in enumerate(pieces)], axis=1)
    rng = _stream(seed, block, 2)
    relay = relay_offsets_from_uniforms(1.0 - rng.random(n), rng.random(n), 0.0,
                                        params.lambda_in, params.phi0).reshape(n, 2)
    u_act0 = rng.random(n)
    link = rng.standard_exponential((3, n))
    return _Block(n, idx, x, k, theta, u_act, gains, own, relay, u_act0, link)


def _path_loss(a, b, alpha):
    return np.sum((a - b) ** 2, axis=-1) ** (-alpha / 2.0)


class _Interference:
    """Per-interferer source and relay terms at the typical relay and destination."""

    def __init__(self, blk: _Block, params: NetworkParams, mode: str):
        a = params.alpha
        r = blk.relay[blk.idx]
        d = np.array(params.dest)
        g = blk.gains
        self.blk = blk
        if mode == "exact":
            rel = blk.x + blk.k
            self.src_r = g[0] * _path_loss(blk.x, r, a)
            self.rel_r = g[1] * _path_loss(rel, r, a)
            self.src_d = g[2] * _path_loss(blk.x, d, a)
            self.rel_d = g[3] * _path_loss(rel, d, a)
        else:
            anchor = blk.x + params.tau * blk.k
            l_r = _path_loss(anchor, r, a)
            l_d = _path_loss(anchor, d, a)
            self.src_r, self.rel_r = g[0] * l_r, g[1] * l_r
            self.src_d, self.rel_d = g[2] * l_d, g[3] * l_d
        n = blk.n
        self.base_r = np.bincount(blk.idx, self.src_r, n)
        self.base_d = np.bincount(blk.idx, self.src_d, n)

    def at(self, active):
        """(I_r, I_d) per realization with the given interferer activation mask."""
        blk = self.blk
        n = blk.n
        return (self.base_r + np.bincount(blk.idx, self.rel_r * active, n),
                self.base_d + np.bincount(blk.idx, self.rel_d * active, n))


def _typical_gains(blk: _Block, params: NetworkParams):
    a = params.alpha
    d = np.array(params.dest)
    l_sr = np.sum(blk.relay**2, axis=1) ** (-a / 2.0)
    l_rd = _path_loss(blk.relay, d, a)
    return blk.link[0] * l_sr, blk.link[1] * params.dest_distance**-a, blk.link[2] * l_rd


# A rule is ("p", p_r) or (scheme, threshold, interferer_rule, p_act).
def _activations(rule, blk: _Block, params: NetworkParams, g_sr, g_rd):
    if rule[0] == "p":
        p = rule[1]
        return blk.u_act < p, blk.u_act0 < p
    scheme, thr, who, p_act = rule
    typical = (g_sr if scheme == "sr_threshold" else g_rd) > thr
    if who == "bernoulli":
        return blk.u_act < p_act, typical
    a = params.alpha
    if scheme == "sr_threshold":
        own = blk.own[0] * np.sum(blk.k**2, axis=1) ** (-a / 2.0)
    else:
        to_dest = params.dest_distance * np.stack([np.cos(blk.theta), np.sin(blk.theta)], axis=1)
        own = blk.own[1] * _path_loss(blk.k, to_dest, a)
    return own > thr, typical


def _block_counts(params: NetworkParams, seed: int, window: SimulationWindow, mode: str, scheme: str,
                  rules: tuple, block: int, n: int) -> np.ndarray:
    """Counts (outage, A, B, A_DT, typical active) for each rule in one block."""
    with_own = any(r[0] != "p" and r[2] == "field" for r in rules)
    blk = _draw_block(params, seed, window, block, n, with_own)
    interference = _Interference(blk, params, mode)
    g_sr, g_sd, g_rd = _typical_gains(blk, params)
    T = sir_threshold(params.rate)
    out = np.zeros((len(rules), 5), dtype=np.int64)
    for j, rule in enumerate(rules):
        active, typical = _activations(rule, blk, params, g_sr, g_rd)
        i_r, i_d = interference.at(active)
        ev_a = g_sr < T * i_r
        ev_b = g_sd + g_rd < T * i_d
        ev_dt = g_sd < T * i_d
        if scheme == "dt":
            outage = ev_dt
        elif scheme == "df_only":
            outage = ev_a | ev_b
        else:
            outage = np.where(typical, ev_a | ev_b, ev_dt)
        out[j] = (outage.sum(), ev_a.sum(), ev_b.sum(), ev_dt.sum(), typical.sum())
    return out


def _blocks(n_total: int):
    return [(b, min(BLOCK_SIZE, n_total - b * BLOCK_SIZE)) for b in range(math.ceil(n_total / BLOCK_SIZE))]


def _window(params: NetworkParams, mc: McConfig) -> SimulationWindow:
    return mc.window_override if mc.window_override is not None else default_window(params)


def _run(params: NetworkParams, mc: McConfig, scheme: str, rules: tuple) -> list[OutageEstimate]:
    window = _window(params, mc)
    blocks = _blocks(int(mc.realizations))
    args = (params, int(mc.seed), window, mc.interference_mode, scheme, rules)
    if mc.workers == 1 or len(blocks) == 1:
        parts = [_block_counts(*args, b, n) for b, n in blocks]
    else:
        with ProcessPoolExecutor(max_workers=int(mc.workers)) as pool:
            futures = [pool.submit(_block_counts, *args, b, n) for b, n in blocks]
            parts = [f.result() for f in futures]
    totals = np.sum(parts, axis=0)
    n = int(mc.realizations)
    return [
        OutageEstimate.from_counts(int(row[0]), n, {"A": int(row[1]), "B": int(row[2]),
                                                    "A_DT": int(row[3]), "active": int(row[4])})
        for row in totals
    ]


def _check(params: NetworkParams, scheme: str):
    validate_params(params)
    require_zero_rho(params)
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES} (got {scheme!r})")


# --- public API ------------------------------------------------------------

def estimate_op_curve(params: NetworkParams, p_r_grid, mc: McConfig = McConfig(),
                      scheme: str = "mixed") -> list[OutageEstimate]:
    """Outage estimates on a p_r grid from one shared set of realizations."""
    _check(params, scheme)
    grid = [float(p) for p in p_r_grid]
    if any(not 0.0 <= p <= 1.0 for p in grid):
        raise ValueError("p_r grid values must lie in [0, 1]")
    return _run(params, mc, scheme, tuple(("p", p) for p in grid))


def estimate_op(params: NetworkParams, p_r: float | None = None, mc: McConfig = McConfig(),
                scheme: str = "mixed") -> OutageEstimate:
    """Outage probability of the typical cluster.

    ``mixed`` uses DT when the typical relay is inactive and DF otherwise,
    ``dt`` always uses DT and ``df_only`` always uses DF; interferers
    activate their relays with probability ``p_r`` in every case.
    """
    if p_r is None:
        p_r = params.p_r
    return estimate_op_curve(params, [p_r], mc, scheme)[0]


def activation_probability(params: NetworkParams, scheme: str, threshold: float) -> float:
    """Marginal probability that a relay passes the threshold rule."""
    a = params.alpha
    if scheme == "sr_threshold":
        return relay_expectation(lambda r: np.exp(-threshold * np.sum(r * r, axis=1) ** (a / 2.0)), params)
    if scheme == "rd_threshold":
        d = np.array(params.dest)
        return relay_expectation(lambda r: np.exp(-threshold * np.sum((r - d) ** 2, axis=1) ** (a / 2.0)), params)
    raise ValueError(f"scheme must be one of {THRESHOLD_SCHEMES} (got {scheme!r})")


def _threshold_rule(params, scheme, threshold, interferer_rule):
    if scheme not in THRESHOLD_SCHEMES:
        raise ValueError(f"scheme must be one of {THRESHOLD_SCHEMES} (got {scheme!r})")
    if interferer_rule not in INTERFERER_RULES:
        raise ValueError(f"interferer_rule must be one of {INTERFERER_RULES} (got {interferer_rule!r})")
    if not threshold >= 0.0:
        raise ValueError(f"threshold must be >= 0 (got {threshold})")
    p_act = activation_probability(params, scheme, threshold) if interferer_rule == "bernoulli" else None
    return (scheme, float(threshold), interferer_rule, p_act)


def threshold_scheme_op(params: NetworkParams, scheme: str, threshold: float, mc: McConfig = McConfig(),
                        interferer_rule: str = "field") -> OutageEstimate:
    """Outage when relays activate on a channel-gain threshold.

    The typical relay is active iff its source-relay (``sr_threshold``) or
    relay-destination (``rd_threshold``) power gain exceeds ``threshold``.
    Interfering relays apply the same rule to their own links (``field``) or
    activate independently with the rule's marginal probability
    (``bernoulli``).  ``breakdown['active']`` counts typical activations.
    """
    validate_params(params)
    require_zero_rho(params)
    rule = _threshold_rule(params, scheme, threshold, interferer_rule)
    return _run(params, mc, "mixed", (rule,))[0]


@dataclass(frozen=True)
class ThresholdOptimum:
    threshold_star: float
    estimate: OutageEstimate
    evaluations: int


def threshold_scale(params: NetworkParams) -> float:
    """Typical source-relay path loss sigma_in^-alpha; anchors the threshold search."""
    return params.sigma_in ** -params.alpha


def optimize_threshold(params: NetworkParams, scheme: str, mc: McConfig = McConfig(),
                       search_budget: int = 16, interferer_rule: str = "field") -> ThresholdOptimum:
    """Golden-section search on log-threshold over [1e-6, 1e2] x threshold_scale.

    Every evaluation reuses the same seed, so comparisons between thresholds
    use common random numbers.  The bracket ends are evaluated too.
    """
    if search_budget < 8:
        raise ValueError(f"search_budget must be >= 8 (got {search_budget})")
    scale = threshold_scale(params)
    cache: dict[float, OutageEstimate] = {}

    def evaluate(log_thr):
        if log_thr not in cache:
            cache[log_thr] = threshold_scheme_op(params, scheme, math.exp(log_thr), mc, interferer_rule)
        return cache[log_thr].p_hat

    lo, hi = math.log(1e-6 * scale), math.log(1e2 * scale)
    evaluate(lo)
    evaluate(hi)
    inv = (math.sqrt(5.0) - 1.0) / 2.0
    x1, x2 = hi - inv * (hi - lo), lo + inv * (hi - lo)
    f1, f2 = evaluate(x1), evaluate(x2)
    while len(cache) < search_budget:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - inv * (hi - lo)
            f1 = evaluate(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + inv * (hi - lo)
            f2 = evaluate(x2)
    best = min(cache, key=lambda key: (cache[key].p_hat, key))
    return ThresholdOptimum(math.exp(best), cache[best], len(cache))


# --- raw samples and cross-checks -------------------------------------------

def sample_interference(params: NetworkParams, mc: McConfig = McConfig(), p_r: float | None = None,
                        relay=None):
    """Per-realization interference (I_r, I_d) at the typical relay and destination.

    ``relay`` pins the typical relay to a fixed position instead of drawing it.
    """
    validate_params(params)
    require_zero_rho(params)
    if p_r is None:
        p_r = params.p_r
    window = _window(params, mc)
    i_r, i_d = [], []
    for b, n in _blocks(int(mc.realizations)):
        blk = _draw_block(params, int(mc.seed), window, b, n, False)
        if relay is not None:
            blk.relay = np.broadcast_to(np.asarray(relay, dtype=float), (n, 2))
        ir, idd = _Interference(blk, params, mc.interference_mode).at(blk.u_act < p_r)
        i_r.append(ir)
        i_d.append(idd)
    return np.concatenate(i_r), np.concatenate(i_d)


def materialize_realization(params: NetworkParams, mc: McConfig, index: int,
                            p_r: float | None = None) -> tuple[MarkedRealization, FadingDraw]:
    """Rebuild realization ``index`` of a run as model objects.

    Fading coefficients are the square roots of the engine's power gains,
    which is all that matters when rho = 0.
    """
    if p_r is None:
        p_r = params.p_r
    window = _window(params, mc)
    block, j = divmod(int(index), BLOCK_SIZE)
    n = _blocks(int(mc.realizations))[block][1]
    blk = _draw_block(params, int(mc.seed), window, block, n, False)
    sel = blk.idx == j
    realization = MarkedRealization(
        positions=blk.x[sel],
        epsilon=blk.u_act[sel] < p_r,
        relay_offsets=blk.k[sel],
        theta=blk.theta[sel],
        typical_relay=blk.relay[j],
        typical_epsilon=bool(blk.u_act0[j] < p_r),
        window=window,
    )
    g = np.sqrt(blk.gains[:, sel])
    h = np.sqrt(blk.link[:, j])
    fading = FadingDraw(complex(h[0]), complex(h[1]), complex(h[2]), g[0] + 0j, g[2] + 0j, g[1] + 0j, g[3] + 0j)
    return realization, fading
