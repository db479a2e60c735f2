"""Sparse geometric mmWave channel for uniform square planar arrays.

Steering vectors are flattened n_v-major: element ``n_v * sqrt(N) + n_h`` holds
the antenna at horizontal index ``n_h`` and vertical index ``n_v``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

D_OVER_LAMBDA = 0.5


def _isqrt_exact(n: int) -> int:
    if n < 1:
        raise InvalidArgumentError(f"antenna count must be positive, got {n}")
    root = math.isqrt(n)
    if root * root != n:
        raise InvalidArgumentError(f"antenna count {n} is not a perfect square")
    return root


@dataclass(frozen=True)
class SystemConfig:
    """Scalar parameters of a single-user hybrid MIMO link.

    Angle spreads are in radians. ``p_t`` is dimensionless (normalized power).
    """

    n_t: int = 64
    n_r: int = 16
    n_s: int = 4
    n_rf_t: int = 7
    n_rf_r: int = 7
    p_t: float = 1.0
    sigma_n_sq: float = 1.0
    n_cl: int = 5
    n_ray: int = 10
    sigma_phi: float = math.radians(10.0)
    sigma_theta: float = math.radians(10.0)
    d_over_lambda: float = D_OVER_LAMBDA

    def __post_init__(self):
        self.validate()

    @property
    def n_paths(self) -> int:
        return self.n_cl * self.n_ray

    def validate(self) -> None:
        for name in ("n_t", "n_r", "n_s", "n_rf_t", "n_rf_r", "n_cl", "n_ray"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise InvalidArgumentError(f"{name} must be a positive integer, got {value!r}")
        _isqrt_exact(self.n_t)
        _isqrt_exact(self.n_r)
        # equality with 2*n_s is allowed for the boundary experiment
        for side, n_rf, n_ant in (("t", self.n_rf_t, self.n_t), ("r", self.n_rf_r, self.n_r)):
            if not self.n_s <= n_rf <= 2 * self.n_s:
                raise InvalidArgumentError(
                    f"n_rf_{side}={n_rf} must satisfy n_s <= n_rf <= 2*n_s (n_s={self.n_s})")
            if n_rf >= n_ant:
                raise InvalidArgumentError(f"n_rf_{side}={n_rf} must be smaller than {n_ant} antennas")
        if not self.p_t > 0:
            raise InvalidArgumentError("p_t must be positive")
        if not self.sigma_n_sq > 0:
            raise InvalidArgumentError("sigma_n_sq must be positive")
        if self.sigma_phi < 0 or self.sigma_theta < 0:
            raise InvalidArgumentError("angle spreads must be nonnegative")
        if self.d_over_lambda != D_OVER_LAMBDA:
            raise InvalidArgumentError("element spacing is fixed to half a wavelength")

    def with_rf_chains(self, n_rf: int) -> "SystemConfig":
        return replace(self, n_rf_t=n_rf, n_rf_r=n_rf)


FULL_CONFIG = SystemConfig(n_t=256, n_r=64, n_s=6, n_rf_t=9, n_rf_r=9)
DESK_CONFIG = SystemConfig()


@dataclass(frozen=True)
class PathAngles:
    """Per-path departure/arrival angles plus the cluster means they were drawn around."""

    phi_t: np.ndarray
    theta_t: np.ndarray
    phi_r: np.ndarray
    theta_r: np.ndarray
    cluster_phi_t: np.ndarray | None = None
    cluster_theta_t: np.ndarray | None = None
    cluster_phi_r: np.ndarray | None = None
    cluster_theta_r: np.ndarray | None = None


@dataclass(frozen=True)
class ChannelRealization:
    a_r: np.ndarray
    a_t: np.ndarray
    h_d: np.ndarray
    h: np.ndarray
    angles: PathAngles
    gains: np.ndarray
    redraws: int = field(default=0)

    @property
    def n_paths(self) -> int:
        return self.h_d.shape[0]


def steering_vector(phi: float, theta: float, n: int, d_over_lambda: float = D_OVER_LAMBDA) -> np.ndarray:
    """Unit-norm USPA response toward azimuth ``phi`` and elevation ``theta``."""
    return steering_matrix(np.atleast_1d(phi), np.atleast_1d(theta), n, d_over_lambda)[:, 0]


def steering_matrix(phi, theta, n: int, d_over_lambda: float = D_OVER_LAMBDA) -> np.ndarray:
    """Stack steering vectors column-wise, one column per (phi, theta) pair."""
    side = _isqrt_exact(n)
    phi = np.asarray(phi, dtype=float).ravel()
    theta = np.asarray(theta, dtype=float).ravel()
    if phi.shape != theta.shape:
        raise InvalidArgumentError("phi and theta must have the same length")
    idx = np.arange(side)
    n_v, n_h = np.meshgrid(idx, idx, indexing="ij")
    n_h = n_h.ravel()[:, None]
    n_v = n_v.ravel()[:, None]
    phase = 2 * np.pi * d_over_lambda * (
        n_h * (np.cos(phi) * np.sin(theta))[None, :] + n_v * np.cos(theta)[None, :])
    return np.exp(1j * phase) / np.sqrt(n)


def assemble_channel(cfg: SystemConfig, angles: PathAngles, gains, redraws: int = 0) -> ChannelRealization:
    """Build the factor form and dense channel from explicit path parameters."""
    gains = np.asarray(gains, dtype=complex).ravel()
    if gains.shape[0] != angles.phi_t.shape[0]:
        raise InvalidArgumentError("one gain per path is required")
    n_paths = gains.shape[0]
    a_t = steering_matrix(angles.phi_t, angles.theta_t, cfg.n_t, cfg.d_over_lambda)
    a_r = steering_matrix(angles.phi_r, angles.theta_r, cfg.n_r, cfg.d_over_lambda)
    h_d = np.diag(np.sqrt(cfg.n_t * cfg.n_r / n_paths) * gains)
    h = (a_r * np.diag(h_d)[None, :]) @ a_t.conj().T
    return ChannelRealization(a_r=a_r, a_t=a_t, h_d=h_d, h=h, angles=angles, gains=gains, redraws=redraws)


def _draw(rng: np.random.Generator, cfg: SystemConfig):
    n_cl, n_ray = cfg.n_cl, cfg.n_ray

    def family(spread):
        means = rng.uniform(0.0, np.pi, size=n_cl)
        rays = rng.laplace(np.repeat(means, n_ray), spread / np.sqrt(2.0))
        return means, rays

    m_phi_t, phi_t = family(cfg.sigma_phi)
    m_theta_t, theta_t = family(cfg.sigma_theta)
    m_phi_r, phi_r = family(cfg.sigma_phi)
    m_theta_r, theta_r = family(cfg.sigma_theta)
    gains = (rng.standard_normal(cfg.n_paths) + 1j * rng.standard_normal(cfg.n_paths)) / np.sqrt(2.0)
    angles = PathAngles(phi_t, theta_t, phi_r, theta_r, m_phi_t, m_theta_t, m_phi_r, m_theta_r)
    return angles, gains


def sample_channel(rng: np.random.Generator, cfg: SystemConfig, max_redraws: int = 100) -> ChannelRealization:
    """Draw one clustered channel realization.

    Cluster means are Uniform(0, pi); rays are Laplace around their cluster
    mean with standard deviation equal to the configured spread (angles are not
    wrapped). Gains are CN(0, 1). If the dense channel cannot carry ``n_s``
    streams the draw is repeated from the same generator; the number of
    repeats is stored in ``redraws``.
    """
    for attempt in range(max_redraws + 1):
        angles, gains = _draw(rng, cfg)
        ch = assemble_channel(cfg, angles, gains, redraws=attempt)
        s = np.linalg.svd(ch.h, compute_uv=False)
        if s[0] > 0 and np.count_nonzero(s > 1e-12 * s[0]) >= cfg.n_s:
            if attempt:
                logger.info("channel redrawn %d time(s) to reach rank >= %d", attempt, cfg.n_s)
            return ch
    raise InvalidArgumentError(f"no channel with rank >= {cfg.n_s} after {max_redraws} redraws")
