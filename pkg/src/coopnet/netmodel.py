"""Scenario parameters and the derived scalars every other module consumes.

Geometry convention: the typical source sits at the origin and its
destination at ``d = (dest_distance, 0)``.  Lengths share one arbitrary unit
and densities are expressed in its inverse square.
"""

from __future__ import annotations

import ast
import math
import operator
import warnings
from dataclasses import dataclass, fields, replace

from scipy.special import gamma as gamma_fn

from coopnet.errors import (
    AlphaOutOfRange,
    ApertureOutOfRange,
    ConfigParseError,
    CorrelationMagnitudeExceedsOne,
    NonPositiveParameter,
    ProbabilityOutOfRange,
    UnsupportedCorrelation,
    ValidationError,
)

TWO_PI = 2.0 * math.pi

# lambda_s above lambda_in / DENSITY_RATIO_WARN triggers a warning
DENSITY_RATIO_WARN = 10.0


class DensityAssumptionWarning(UserWarning):
    """Source density is not small compared with the potential-relay density."""


@dataclass(frozen=True)
class NetworkParams:
    lambda_s: float
    lambda_in: float
    alpha: float
    rate: float
    dest_distance: float
    phi0: float = TWO_PI
    p_r: float = 0.0
    rho: complex = 0.0
    tau: float = 0.0

    @classmethod
    def from_sigma_in(cls, sigma_in: float, **kwargs) -> "NetworkParams":
        """Build params from the nearest-neighbour spread instead of lambda_in."""
        return cls(lambda_in=1.0 / (TWO_PI * sigma_in**2), **kwargs)

    @property
    def sigma_in(self) -> float:
        return (TWO_PI * self.lambda_in) ** -0.5

    @property
    def dest(self) -> tuple[float, float]:
        return (self.dest_distance, 0.0)

    def replace(self, **changes) -> "NetworkParams":
        """Copy with some fields changed; ``sigma_in`` is accepted as an alias."""
        if "sigma_in" in changes:
            sigma = changes.pop("sigma_in")
            changes["lambda_in"] = 1.0 / (TWO_PI * sigma**2)
        return replace(self, **changes)


PARAM_FIELDS = tuple(f.name for f in fields(NetworkParams))


@dataclass(frozen=True)
class DerivedScalars:
    threshold_T: float
    constant_C: float
    delta: float
    big_delta: float
    nu: float
    sigma_in: float
    s_param: float

    def big_delta_at(self, p_r: float, alpha: float) -> float:
        return self.delta * (1.0 + 2.0 * p_r / alpha)


def contention_constant(alpha: float) -> float:
    """C = (2 pi / alpha) Gamma(2/alpha) Gamma(1 - 2/alpha)."""
    return TWO_PI / alpha * gamma_fn(2.0 / alpha) * gamma_fn(1.0 - 2.0 / alpha)


def sir_threshold(rate: float) -> float:
    return math.expm1(rate * math.log(2.0))


def derive_scalars(params: NetworkParams, p_r: float | None = None) -> DerivedScalars:
    """Closed-form scalars of the scenario.

    ``big_delta`` and ``nu`` are evaluated at ``p_r`` (defaults to
    ``params.p_r``).
    """
    if p_r is None:
        p_r = params.p_r
    alpha = params.alpha
    T = sir_threshold(params.rate)
    C = contention_constant(alpha)
    delta = C * T ** (2.0 / alpha)
    big_delta = delta * (1.0 + 2.0 * p_r / alpha)
    nu = params.lambda_s * big_delta * params.dest_distance**2
    s = (params.lambda_in * params.phi0 * params.dest_distance**2) ** -0.5
    return DerivedScalars(
        threshold_T=T,
        constant_C=C,
        delta=delta,
        big_delta=big_delta,
        nu=nu,
        sigma_in=params.sigma_in,
        s_param=s,
    )


def find_violations(params: NetworkParams) -> list:
    """Every violated constraint, in field order (empty when valid)."""
    out = []
    if not params.alpha > 2.0:
        out.append(AlphaOutOfRange("alpha", f"must be > 2 (got {params.alpha})"))
    for name in ("lambda_s", "lambda_in", "dest_distance", "rate"):
        value = getattr(params, name)
        if not value > 0.0:
            out.append(NonPositiveParameter(name, f"must be > 0 (got {value})"))
    if not 0.0 < params.phi0 <= TWO_PI * (1.0 + 1e-12):
        out.append(ApertureOutOfRange("phi0", f"must lie in (0, 2pi] (got {params.phi0})"))
    if not 0.0 <= params.p_r <= 1.0:
        out.append(ProbabilityOutOfRange("p_r", f"must lie in [0, 1] (got {params.p_r})"))
    if not 0.0 <= params.tau <= 1.0:
        out.append(ProbabilityOutOfRange("tau", f"must lie in [0, 1] (got {params.tau})"))
    if abs(complex(params.rho)) > 1.0:
        out.append(CorrelationMagnitudeExceedsOne("rho", f"|rho| must be <= 1 (got {params.rho})"))
    return out


def validate_params(params: NetworkParams) -> NetworkParams:
    """Return ``params`` unchanged or raise :class:`ValidationError`.

    A :class:`DensityAssumptionWarning` is emitted (not raised) when the
    sparse-source assumption lambda_s << lambda_in looks doubtful.
    """
    violations = find_violations(params)
    if violations:
        raise ValidationError(violations)
    if params.lambda_s > params.lambda_in / DENSITY_RATIO_WARN:
        warnings.warn(
            f"lambda_s={params.lambda_s:g} exceeds lambda_in/{DENSITY_RATIO_WARN:g}; "
            "relay-sharing between sources is no longer negligible",
            DensityAssumptionWarning,
            stacklevel=2,
        )
    return params


def require_zero_rho(params: NetworkParams) -> None:
    if complex(params.rho) != 0:
        raise UnsupportedCorrelation(
            f"only rho = 0 is supported by rate/outage analysis (got {params.rho})"
        )


# --- key = value configuration files -------------------------------------

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}


def _eval_number(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float, complex)):
        return node.value
    if isinstance(node, ast.Name) and node.id == "pi":
        return math.pi
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        value = _eval_number(node.operand)
        return -value if isinstance(node.op, ast.USub) else value
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_number(node.left), _eval_number(node.right))
    raise ValueError("unsupported expression")


def parse_number(text: str):
    """Parse a float, complex literal or simple arithmetic such as ``2*pi``."""
    text = text.strip()
    try:
        return float(text)
    except ValueError:
        pass
    try:
        value = _eval_number(ast.parse(text, mode="eval").body)
    except (SyntaxError, ValueError, ZeroDivisionError) as exc:
        raise ConfigParseError(f"cannot parse number {text!r}") from exc
    return value


def parse_config(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigParseError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigParseError(f"line {lineno}: empty key")
        out[key] = value.strip()
    return out


def load_config(path) -> dict[str, str]:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def params_from_mapping(mapping: dict, base: NetworkParams | None = None) -> NetworkParams:
    """Build params from string/number values; unknown keys are ignored.

    ``sigma_in`` may be given instead of ``lambda_in``.
    """
    values = {}
    for key in PARAM_FIELDS + ("sigma_in",):
        if key not in mapping:
            continue
        raw = mapping[key]
        value = parse_number(raw) if isinstance(raw, str) else raw
        if key != "rho":
            if isinstance(value, complex):
                raise ConfigParseError(f"{key} must be real (got {raw!r})")
            value = float(value)
        values[key] = value
    if "sigma_in" in values:
        if "lambda_in" in values:
            raise ConfigParseError("give either sigma_in or lambda_in, not both")
        sigma = values.pop("sigma_in")
        if not sigma > 0:
            raise ConfigParseError(f"sigma_in must be > 0 (got {sigma})")
        values["lambda_in"] = 1.0 / (TWO_PI * sigma**2)
    if base is not None:
        return replace(base, **values)
    missing = [k for k in ("lambda_s", "lambda_in", "alpha", "rate", "dest_distance") if k not in values]
    if missing:
        raise ConfigParseError(f"missing required parameters: {', '.join(missing)}")
    return NetworkParams(**values)
