"""Data generators for the published figures.

Each generator returns ``(header, rows)``; rendering is left to the caller.
Curve parameters that only appear in figure legends (the alpha values and
the sigma_in/D grids) are reconstructed defaults and can be overridden.
"""

from __future__ import annotations

import math

import numpy as np

from coopnet import closedform, mcengine
from coopnet.mcengine import McConfig
from coopnet.netmodel import NetworkParams

BASE = {"lambda_s": 1e-4, "dest_distance": 10.0, "rate": 0.5, "alpha": 4.0}
FIG3_SIGMA_FACTORS = (0.5, 2.0)
DEFAULT_ALPHAS = (2.5, 3.0, 4.0)
DEFAULT_SIGMA_RATIOS = (0.01, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5)
FIG7_SIGMA_RATIOS = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5)


def base_params(**overrides) -> NetworkParams:
    values = dict(BASE, lambda_in=1.0 / (2.0 * math.pi))
    values.update(overrides)
    return NetworkParams(**values)


def fig3(params: NetworkParams, mc: McConfig, sigma_factors=FIG3_SIGMA_FACTORS, n_grid: int = 21):
    """Bound and simulated OP against p_r at sigma_in = factor * sigma_t."""
    grid = np.linspace(0.0, 1.0, n_grid)
    root = closedform.sigma_t(params).root
    rows = []
    for factor in sigma_factors:
        p = params.replace(sigma_in=factor * root)
        mean_rd = closedform.expected_relay_dest_distance(p)
        sims = mcengine.estimate_op_curve(p, grid, mc)
        for p_r, est in zip(grid, sims):
            bound = closedform.mix_bound(p, float(p_r), mean_rd=mean_rd).value
            rows.append([p.sigma_in, float(p_r), bound, est.p_hat, est.std_err])
    return ["sigma_in", "p_r", "op_bound", "op_mc", "op_mc_stderr"], rows


def fig4(params: NetworkParams, alphas=DEFAULT_ALPHAS, sigma_ratios=DEFAULT_SIGMA_RATIOS,
         grid_resolution: int = 64):
    """Optimal cone aperture against sigma_in / D."""
    rows = []
    for alpha in alphas:
        for ratio in sigma_ratios:
            p = params.replace(alpha=float(alpha), sigma_in=ratio * params.dest_distance)
            opt = closedform.optimize_phi0(p, grid_resolution)
            rows.append([float(alpha), float(ratio), opt.phi0_star, opt.ratio_at_star])
    return ["alpha", "sigma_ratio", "phi0_star", "ratio_at_star"], rows


def fig5(params: NetworkParams, op_target: float = 0.03, alphas=DEFAULT_ALPHAS,
         sigma_ratios=DEFAULT_SIGMA_RATIOS):
    """Maximum rate of the on/off scheme relative to DT under an OP constraint."""
    rows = []
    for alpha in alphas:
        for ratio in sigma_ratios:
            p = params.replace(alpha=float(alpha), sigma_in=ratio * params.dest_distance)
            r_mix = closedform.max_rate_for_op(p, op_target, "mix")
            r_dt = closedform.max_rate_for_op(p, op_target, "dt")
            rows.append([float(alpha), float(ratio), r_mix, r_dt, r_mix / r_dt])
    return ["alpha", "sigma_ratio", "rate_mix", "rate_dt", "rate_ratio"], rows


def fig6(params: NetworkParams, alphas=DEFAULT_ALPHAS, sigma_ratios=DEFAULT_SIGMA_RATIOS):
    """OP gain ratio against sigma_in / D, with the on/off boundaries per alpha."""
    rows = []
    for alpha in alphas:
        pa = params.replace(alpha=float(alpha))
        st = closedform.sigma_t(pa)
        for ratio in sigma_ratios:
            p = pa.replace(sigma_in=ratio * params.dest_distance)
            rows.append([float(alpha), float(ratio), closedform.op_gain_ratio(p),
                         st.root / params.dest_distance, st.closed_bound / params.dest_distance])
    return ["alpha", "sigma_ratio", "gain_ratio", "sigma_t_ratio", "sigma_t_closed_ratio"], rows


def fig7(params: NetworkParams, mc: McConfig, sigma_ratios=FIG7_SIGMA_RATIOS, search_budget: int = 16,
         interferer_rule: str = "field"):
    """Independent on/off activation against optimised channel-threshold activation."""
    rows = []
    for ratio in sigma_ratios:
        p = params.replace(sigma_in=ratio * params.dest_distance)
        ends = mcengine.estimate_op_curve(p, [0.0, 1.0], mc)
        best = min(ends, key=lambda e: e.p_hat)
        row = [p.sigma_in, ratio, best.p_hat, best.std_err]
        for scheme in mcengine.THRESHOLD_SCHEMES:
            opt = mcengine.optimize_threshold(p, scheme, mc, search_budget, interferer_rule)
            row += [opt.threshold_star, opt.estimate.p_hat, opt.estimate.std_err]
        rows.append(row)
    header = ["sigma_in", "sigma_ratio", "op_independent", "op_independent_stderr",
              "threshold_sr", "op_sr", "op_sr_stderr", "threshold_rd", "op_rd", "op_rd_stderr"]
    return header, rows
