"""Command-line front end: single computations, sweeps and figure data.

Every run writes a CSV (to ``--out`` or stdout) and, with ``--out``, a flat
``key = value`` manifest next to it.  Feeding the manifest back through
``--config`` repeats the run exactly.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import dataclass, field, fields, replace

from coopnet import __version__, closedform, figures, laplace, mcengine
from coopnet.errors import ConfigParseError, ModelError, ParameterError, UnknownFigure, ValidationError
from coopnet.mcengine import McConfig
from coopnet.netmodel import (
    PARAM_FIELDS,
    NetworkParams,
    derive_scalars,
    load_config,
    params_from_mapping,
    parse_number,
    validate_params,
)

TOOL_NAME = "coopnet"
COMMANDS = ("dt-op", "bound", "exact-op", "mc", "sigma-c", "sigma-t", "decide", "gain", "opt-phi",
            "max-rate", "figure")
FIGURES = ("fig3", "fig4", "fig5", "fig6", "fig7")
SWEEPABLE = PARAM_FIELDS + ("sigma_in",)

# option name -> (type, default); these travel through config files and manifests
OPTIONS = {
    "figure": (str, None),
    "scheme": (str, None),
    "op_target": (float, 0.03),
    "r_samples": (int, 10_000),
    "h_samples": (int, 64),
    "grid_resolution": (int, 64),
    "search_budget": (int, 16),
    "interferer_rule": (str, "field"),
    "alphas": (str, None),
    "sigma_ratios": (str, None),
    "threshold": (float, None),
}
MC_OPTIONS = {"realizations": int, "seed": int, "interference_mode": str, "workers": int}


@dataclass
class ExperimentSpec:
    command: str
    params: NetworkParams
    sweep: tuple[str, list] | None = None
    mc: McConfig | None = None
    output_path: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValidationError([ParameterError("command", f"unknown command {self.command!r}")])
        if self.sweep is not None and self.sweep[0] not in SWEEPABLE:
            raise ValidationError([ParameterError("sweep", f"cannot sweep unknown field {self.sweep[0]!r}")])
        if self.command == "figure" and self.options.get("figure") not in FIGURES:
            raise UnknownFigure(self.options.get("figure"))


def _float_list(text):
    return [float(parse_number(v)) for v in str(text).split(",") if v.strip()]


def figure_recipes(name: str) -> ExperimentSpec:
    """Spec reproducing one figure with its published (or reconstructed) settings."""
    if name not in FIGURES:
        raise UnknownFigure(name)
    params = figures.base_params()
    options = {key: default for key, (_, default) in OPTIONS.items()}
    options["figure"] = name
    mc = McConfig(realizations=100_000) if name in ("fig3", "fig7") else None
    if name == "fig5":
        options["op_target"] = 0.03
    return ExperimentSpec("figure", params, None, mc, None, options)


# --- computations ----------------------------------------------------------

def _single(command, params, mc, opts):
    """Output columns and one row for a non-figure command."""
    if command == "dt-op":
        return ["op"], [closedform.op_dt(params)]
    if command == "bound":
        b = closedform.mix_bound(params)
        return ["op_bound", "clamped"], [b.value, int(b.clamped)]
    if command == "exact-op":
        ex = laplace.op_mix_exact(params, params.p_r, opts["r_samples"], h_samples=opts["h_samples"],
                                  seed=mc.seed)
        return ["op_exact", "op_exact_stderr"], [ex.value, ex.std_err]
    if command == "mc":
        scheme = opts["scheme"] or "mixed"
        if scheme in mcengine.THRESHOLD_SCHEMES:
            est = mcengine.threshold_scheme_op(params, scheme, opts["threshold"] or 0.0, mc,
                                               opts["interferer_rule"])
        else:
            est = mcengine.estimate_op(params, params.p_r, mc, scheme)
        b = est.breakdown
        return (["op_mc", "op_mc_stderr", "n", "count_A", "count_B", "count_A_DT"],
                [est.p_hat, est.std_err, est.n, b["A"], b["B"], b["A_DT"]])
    if command == "sigma-c":
        r = closedform.sigma_c(params)
        return ["sigma_c", "sigma_c_closed"], [r.root, r.closed_bound]
    if command == "sigma-t":
        r = closedform.sigma_t(params)
        return ["sigma_t", "sigma_t_closed"], [r.root, r.closed_bound]
    if command == "decide":
        a = closedform.activation_decision(params)
        return (["sigma_c", "sigma_t", "sigma_t_closed", "decided_p_r", "gain_ratio"],
                [a.sigma_c, a.sigma_t, a.sigma_t_closed, a.decided_p_r, a.gain_ratio])
    if command == "gain":
        return ["gain_ratio"], [closedform.op_gain_ratio(params)]
    if command == "opt-phi":
        o = closedform.optimize_phi0(params, opts["grid_resolution"])
        return ["phi0_star", "ratio_at_star"], [o.phi0_star, o.ratio_at_star]
    if command == "max-rate":
        scheme = opts["scheme"] or "mix"
        return ["rate"], [closedform.max_rate_for_op(params, opts["op_target"], scheme)]
    raise ValidationError([ParameterError("command", f"unknown command {command!r}")])


def _figure(spec: ExperimentSpec):
    o = spec.options
    name = o["figure"]
    p = spec.params
    kw = {}
    if o.get("alphas"):
        kw["alphas"] = _float_list(o["alphas"])
    if o.get("sigma_ratios"):
        kw["sigma_ratios"] = _float_list(o["sigma_ratios"])
    if name == "fig3":
        return figures.fig3(p, spec.mc)
    if name == "fig4":
        return figures.fig4(p, grid_resolution=o["grid_resolution"], **kw)
    if name == "fig5":
        return figures.fig5(p, o["op_target"], **kw)
    if name == "fig6":
        return figures.fig6(p, **kw)
    kw.pop("alphas", None)
    return figures.fig7(p, spec.mc, search_budget=o["search_budget"], interferer_rule=o["interferer_rule"], **kw)


def _table(spec: ExperimentSpec):
    if spec.command == "figure":
        return _figure(spec)
    mc = spec.mc or McConfig()
    if spec.sweep is None:
        validate_params(spec.params)
        header, row = _single(spec.command, spec.params, mc, spec.options)
        return header, [row]
    name, values = spec.sweep
    rows, header = [], None
    for value in values:
        p = spec.params.replace(**{name: value})
        validate_params(p)
        cols, row = _single(spec.command, p, mc, spec.options)
        header = [name] + cols
        rows.append([value] + row)
    return header, rows


def _fmt(value):
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, complex):
        return repr(value)
    return repr(float(value))


def format_csv(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def manifest_text(spec: ExperimentSpec) -> str:
    lines = [f"command = {spec.command}"]
    for f in fields(NetworkParams):
        lines.append(f"{f.name} = {_fmt(getattr(spec.params, f.name))}")
    if spec.sweep is not None:
        lines.append(f"sweep = {spec.sweep[0]}=" + ",".join(_fmt(v) for v in spec.sweep[1]))
    if spec.mc is not None:
        for key in MC_OPTIONS:
            lines.append(f"{key} = {getattr(spec.mc, key)}")
    for key, value in spec.options.items():
        if value is not None:
            lines.append(f"{key} = {value}")
    try:
        sc = derive_scalars(spec.params)
        for f in fields(sc):
            lines.append(f"derived.{f.name} = {_fmt(getattr(sc, f.name))}")
    except (ArithmeticError, ValueError):
        pass
    lines.append(f"tool.name = {TOOL_NAME}")
    lines.append(f"tool.version = {__version__}")
    return "\n".join(lines) + "\n"


def run(spec: ExperimentSpec, stdout=None) -> int:
    """Execute a spec, writing CSV (and manifest when ``output_path`` is set)."""
    stdout = stdout or sys.stdout
    header, rows = _table(spec)
    text = format_csv(header, rows)
    if spec.output_path:
        with open(spec.output_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        with open(spec.output_path + ".manifest", "w", encoding="utf-8") as fh:
            fh.write(manifest_text(spec))
    else:
        stdout.write(text)
    return 0


# --- argument handling -------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog=TOOL_NAME, description="Outage analysis of cooperative relaying networks.")
    ap.add_argument("command", nargs="?", choices=COMMANDS, help="computation to run")
    ap.add_argument("figure", nargs="?", help="figure name for the 'figure' command")
    ap.add_argument("--version", action="version", version=f"{TOOL_NAME} {__version__}")
    ap.add_argument("--config", help="key = value file; command-line flags take precedence")
    ap.add_argument("--out", help="CSV path (a .manifest is written next to it)")
    ap.add_argument("--sweep", help="field=v1,v2,... evaluated row by row")
    ap.add_argument("--param", action="append", default=[], metavar="KEY=VALUE",
                    help="set any parameter or option (repeatable)")
    for name in SWEEPABLE:
        ap.add_argument(f"--{name}", f"--{name.replace('_', '-')}", dest=name)
    for name in OPTIONS:
        if name == "figure":
            continue
        ap.add_argument(f"--{name}", f"--{name.replace('_', '-')}", dest=name)
    ap.add_argument("--realizations", "-n")
    ap.add_argument("--seed")
    ap.add_argument("--interference-mode", "--interference_mode", "--mode", dest="interference_mode")
    ap.add_argument("--workers")
    return ap


def _merge(args) -> dict:
    merged = {}
    if args.config:
        try:
            merged.update(load_config(args.config))
        except OSError as exc:
            raise ConfigParseError(f"cannot read config {args.config!r}: {exc}") from exc
    for item in args.param:
        if "=" not in item:
            raise ConfigParseError(f"--param expects KEY=VALUE (got {item!r})")
        key, value = item.split("=", 1)
        merged[key.strip()] = value.strip()
    for key in SWEEPABLE + tuple(OPTIONS) + tuple(MC_OPTIONS) + ("sweep",):
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if args.command:
        merged["command"] = args.command
    if args.figure:
        merged["figure"] = args.figure
    # lambda_in and sigma_in are aliases; the one given on the command line wins
    if getattr(args, "lambda_in", None) is not None:
        merged.pop("sigma_in", None)
    elif getattr(args, "sigma_in", None) is not None:
        merged.pop("lambda_in", None)
    return merged


def _parse_sweep(text):
    if "=" not in text:
        raise ConfigParseError(f"--sweep expects field=v1,v2,... (got {text!r})")
    name, values = text.split("=", 1)
    name = name.strip()
    if name not in SWEEPABLE:
        raise ValidationError([ParameterError("sweep", f"cannot sweep unknown field {name!r}")])
    parsed = [parse_number(v) for v in values.split(",") if v.strip()]
    if not parsed:
        raise ConfigParseError("--sweep needs at least one value")
    return name, [v if name == "rho" else float(v) for v in parsed]


def spec_from_mapping(merged: dict, output_path=None) -> ExperimentSpec:
    command = merged.get("command")
    if command is None:
        raise ConfigParseError("no command given")
    if command not in COMMANDS:
        raise ConfigParseError(f"unknown command {command!r}")
    sweep = _parse_sweep(merged["sweep"]) if merged.get("sweep") else None
    if sweep is not None and sweep[0] not in merged:
        # a swept field need not also be given on its own
        merged = dict(merged, **{sweep[0]: sweep[1][0]})
    if command == "figure":
        name = merged.get("figure")
        if name is None:
            raise ConfigParseError("the figure command needs a figure name")
        spec = figure_recipes(name)
        params = params_from_mapping(merged, base=spec.params)
        mc = spec.mc
        options = dict(spec.options)
    else:
        params = params_from_mapping(merged)
        mc = None
        options = {key: default for key, (_, default) in OPTIONS.items()}
    for key, (kind, _) in OPTIONS.items():
        if key in merged:
            raw = merged[key]
            options[key] = kind(parse_number(raw)) if kind in (int, float) else str(raw)
    mc_values = {key: kind(parse_number(merged[key])) if kind is int else str(merged[key])
                 for key, kind in MC_OPTIONS.items() if key in merged}
    if command in ("mc", "exact-op") or (mc is not None) or mc_values:
        mc = replace(mc or McConfig(), **mc_values)
    return ExperimentSpec(command, params, sweep, mc, output_path, options)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        merged = _merge(args)
        spec = spec_from_mapping(merged, args.out)
        return run(spec)
    except ValidationError as exc:
        for v in exc.violations:
            print(f"{TOOL_NAME}: invalid {v}", file=sys.stderr)
        return 2
    except (ModelError, ValueError, KeyError) as exc:
        print(f"{TOOL_NAME}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
