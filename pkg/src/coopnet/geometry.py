"""Point-process sampling: source PPP in a disk window and the relay marks.

Every function takes an explicit ``numpy.random.Generator`` so results are
reproducible from the caller's stream.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from coopnet.netmodel import TWO_PI, NetworkParams, derive_scalars

# Floor of the default window radius, in multiples of the link length.
WINDOW_FLOOR = 40.0
# The far tail beyond the default window may add at most this fraction of
# lambda_s*delta*D^2 (the first-order DT outage) to the outage probability.
TAIL_FRACTION = 1e-2
# Default windows never hold more than this many sources on average.
MAX_EXPECTED_POINTS = 20_000.0


class WindowCapWarning(UserWarning):
    """The tail-accuracy window was shrunk to keep the point count manageable."""


@dataclass(frozen=True)
class SimulationWindow:
    center: tuple[float, float]
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"window radius must be > 0 (got {self.radius})")

    def contains(self, point, margin: float = 0.0) -> bool:
        dx = point[0] - self.center[0]
        dy = point[1] - self.center[1]
        return math.hypot(dx, dy) <= self.radius - margin

    def area(self) -> float:
        return math.pi * self.radius**2


@dataclass(frozen=True)
class ClusterMark:
    epsilon: int
    relay_offset: tuple[float, float]
    dest_direction: float


@dataclass(frozen=True)
class MarkedRealization:
    """One realization of the marked source process plus the typical cluster.

    Interferer data is stored column-wise: ``positions`` and ``relay_offsets``
    are ``(n, 2)`` arrays, ``epsilon`` is boolean and ``theta`` holds the
    destination directions.  The typical cluster (source at the origin) is
    never part of the interferer arrays.
    """

    positions: np.ndarray
    epsilon: np.ndarray
    relay_offsets: np.ndarray
    theta: np.ndarray
    typical_relay: np.ndarray
    typical_epsilon: bool
    window: SimulationWindow

    def __len__(self):
        return len(self.positions)

    @property
    def interferers(self) -> list[tuple[tuple[float, float], ClusterMark]]:
        return [
            (
                (float(x), float(y)),
                ClusterMark(int(e), (float(kx), float(ky)), float(t)),
            )
            for (x, y), e, (kx, ky), t in zip(
                self.positions, self.epsilon, self.relay_offsets, self.theta
            )
        ]

    @property
    def relay_positions(self) -> np.ndarray:
        return self.positions + self.relay_offsets


def uniform_in_disk(u_radius, u_angle, center, radius, inner_radius=0.0):
    """Map uniforms on [0,1) to points uniform on a disk or annulus."""
    r2 = inner_radius**2 + (radius**2 - inner_radius**2) * np.asarray(u_radius)
    rad = np.sqrt(r2)
    ang = TWO_PI * np.asarray(u_angle)
    return np.stack([center[0] + rad * np.cos(ang), center[1] + rad * np.sin(ang)], axis=-1)


def relay_offsets_from_uniforms(u_radius, u_angle, theta, lambda_in, phi0):
    """Nearest neighbour in a cone of aperture ``phi0`` around ``theta``.

    The radius has survival exp(-lambda_in * phi0 * r^2 / 2); the angle is
    uniform on (theta - phi0/2, theta + phi0/2).  ``u_radius`` must lie in
    (0, 1].
    """
    rad = np.sqrt(-2.0 * np.log(u_radius) / (lambda_in * phi0))
    ang = np.asarray(theta) + phi0 * (np.asarray(u_angle) - 0.5)
    return np.stack([rad * np.cos(ang), rad * np.sin(ang)], axis=-1)


def _open_uniform(rng, size=None):
    # (0, 1]: keeps log() finite
    return 1.0 - rng.random(size)


def sample_ppp(lam: float, window: SimulationWindow, rng: np.random.Generator) -> np.ndarray:
    """Homogeneous PPP of intensity ``lam`` restricted to a disk window."""
    if not lam > 0:
        raise ValueError(f"density must be > 0 (got {lam})")
    n = rng.poisson(lam * window.area())
    return uniform_in_disk(rng.random(n), rng.random(n), window.center, window.radius)


def sample_relay_offset(params: NetworkParams, theta, rng: np.random.Generator, size=None):
    """Relay position relative to its source, for destination direction ``theta``."""
    u_rad = _open_uniform(rng, size)
    u_ang = rng.random(size)
    return relay_offsets_from_uniforms(u_rad, u_ang, theta, params.lambda_in, params.phi0)


def mark_realization(points, params: NetworkParams, rng: np.random.Generator,
                     window: SimulationWindow | None = None) -> MarkedRealization:
    """Attach independent (epsilon, k, theta) marks and draw the typical cluster."""
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(points)
    epsilon = rng.random(n) < params.p_r
    theta = TWO_PI * rng.random(n)
    offsets = sample_relay_offset(params, theta, rng, size=n)
    typical_relay = sample_relay_offset(params, 0.0, rng)
    typical_eps = bool(rng.random() < params.p_r)
    if window is None:
        window = default_window(params)
    return MarkedRealization(
        positions=points,
        epsilon=epsilon,
        relay_offsets=offsets.reshape(n, 2),
        theta=theta,
        typical_relay=np.asarray(typical_relay, dtype=float),
        typical_epsilon=typical_eps,
        window=window,
    )


def tail_radius(params: NetworkParams) -> float:
    """Radius beyond which the far tail barely moves the outage probability.

    Sources beyond ``rho`` add mean interference 2 pi lambda_s rho^(2-alpha) / (alpha-2)
    at the destination, raising the DT outage by about T D^alpha times that.
    The radius solves that increment = TAIL_FRACTION * lambda_s * delta * D^2
    (worked in logs since it explodes as alpha approaches 2).
    """
    alpha = params.alpha
    sc = derive_scalars(params)
    D = params.dest_distance
    log_num = math.log(TWO_PI * sc.threshold_T) + alpha * math.log(D)
    log_den = math.log((alpha - 2.0) * TAIL_FRACTION * sc.delta * D * D)
    return math.exp(min((log_num - log_den) / (alpha - 2.0), 700.0))


def default_window(params: NetworkParams) -> SimulationWindow:
    """Disk centred between source and destination, capped in expected size."""
    D = params.dest_distance
    radius = max(WINDOW_FLOOR * D, tail_radius(params))
    cap = math.sqrt(MAX_EXPECTED_POINTS / (math.pi * params.lambda_s))
    if radius > cap:
        warnings.warn(
            f"window radius {radius:.3g} needs more than {MAX_EXPECTED_POINTS:g} sources; "
            f"using {max(cap, WINDOW_FLOOR * D):.3g} instead",
            WindowCapWarning,
            stacklevel=2,
        )
        radius = max(cap, WINDOW_FLOOR * D)
    return SimulationWindow(center=(D / 2.0, 0.0), radius=radius)
