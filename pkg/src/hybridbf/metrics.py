"""Link metrics: spectral efficiency, mutual information, SNR, equivalent channels, beam patterns."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .channel import steering_matrix
from .errors import InvalidArgumentError, NumericalFailureError
from .svd import pinv

logger = logging.getLogger(__name__)

DEFAULT_ELEVATIONS = np.pi / 6 + (np.pi / 12) * np.arange(9)
DEFAULT_AZIMUTH_POINTS = 64


def _total(x) -> np.ndarray:
    """Accept a HybridPrecoder-like object or a plain matrix."""
    if hasattr(x, "f_rf"):
        return x.f_rf @ x.f_bb
    return np.asarray(x, dtype=complex)


def _logdet_hpd(m: np.ndarray) -> float:
    """log2 det of a Hermitian positive definite matrix via Cholesky."""
    m = 0.5 * (m + m.conj().T)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        sign, logdet = np.linalg.slogdet(m)
        if sign.real <= 0:
            raise NumericalFailureError("log-det argument is not positive definite")
        return float(logdet / np.log(2))
    return float(2.0 * np.sum(np.log(np.abs(np.diag(chol)))) / np.log(2))


def spectral_efficiency(h, f, w, p_t: float, sigma_n_sq: float) -> float:
    """Achievable rate in bits/s/Hz with Gaussian signalling and noise colored by the combiner."""
    h = np.asarray(h, dtype=complex)
    f, w = _total(f), _total(w)
    n_s = f.shape[1]
    s = w.conj().T @ h @ f
    gram = w.conj().T @ w
    r_n = sigma_n_sq * 0.5 * (gram + gram.conj().T)
    c = p_t / n_s
    try:
        chol = np.linalg.cholesky(r_n)
        cond_ok = np.min(np.abs(np.diag(chol))) ** 2 > 1e-12 * np.max(np.abs(np.diag(chol))) ** 2
    except np.linalg.LinAlgError:
        cond_ok = False
    if cond_ok:
        # det(I + c R^-1 S S^H) = det(I + c L^-1 S S^H L^-H) with R = L L^H
        x = np.linalg.solve(chol, s)
        value = _logdet_hpd(np.eye(s.shape[0]) + c * (x @ x.conj().T))
    else:
        logger.warning("combiner noise covariance is near-singular; using its pseudo-inverse")
        sign, logdet = np.linalg.slogdet(np.eye(s.shape[0]) + c * pinv(r_n) @ s @ s.conj().T)
        if abs(np.angle(sign)) > 1e-9 or sign == 0:
            raise NumericalFailureError("spectral efficiency has a non-real log-det")
        value = float(logdet / np.log(2))
    if not np.isfinite(value):
        raise NumericalFailureError("spectral efficiency is not finite")
    if -1e-12 < value < 0:
        value = 0.0
    return value


def mutual_information(h, f_total, p_t: float, sigma_n_sq: float) -> float:
    """log2 det(I_Nr + P_t/(N_s sigma^2) H F F^H H^H)."""
    h = np.asarray(h, dtype=complex)
    f = _total(f_total)
    n_s = f.shape[1]
    hf = h @ f
    value = _logdet_hpd(np.eye(h.shape[0]) + (p_t / (n_s * sigma_n_sq)) * (hf @ hf.conj().T))
    if not np.isfinite(value):
        raise NumericalFailureError("mutual information is not finite")
    return value


def realized_snr(h, f, w, p_t: float, sigma_n_sq: float) -> float:
    """Received signal power over combined noise power, both traced over the streams."""
    f, w = _total(f), _total(w)
    n_s = f.shape[1]
    w_norm = np.linalg.norm(w) ** 2
    if w_norm == 0:
        raise InvalidArgumentError("combiner is zero")
    signal = np.linalg.norm(w.conj().T @ np.asarray(h) @ f) ** 2
    return float(p_t / (n_s * sigma_n_sq) * signal / w_norm)


def equivalent_channel(h, f_total, w_total) -> np.ndarray:
    """The part of ``h`` seen through the precoder and combiner: ``W W^H H F F^H``."""
    f, w = _total(f_total), _total(w_total)
    return w @ (w.conj().T @ np.asarray(h) @ f) @ f.conj().T


def channel_gap(h, f_opt, w_opt, f, w) -> np.ndarray:
    return equivalent_channel(h, f_opt, w_opt) - equivalent_channel(h, f, w)


@dataclass(frozen=True)
class BeamPatternGrid:
    """``values[i, j, k, l] = |S(phi_r[i], theta_r[j], phi_t[k], theta_t[l])|``."""

    phi_r: np.ndarray
    theta_r: np.ndarray
    phi_t: np.ndarray
    theta_t: np.ndarray
    values: np.ndarray

    def to_dict(self) -> dict:
        return {
            "phi_r": self.phi_r.tolist(),
            "theta_r": self.theta_r.tolist(),
            "phi_t": self.phi_t.tolist(),
            "theta_t": self.theta_t.tolist(),
            "values": self.values.tolist(),
        }


def default_azimuths(n_points: int = DEFAULT_AZIMUTH_POINTS) -> np.ndarray:
    """``n_points`` midpoints of a uniform partition of (0, pi)."""
    return (np.arange(n_points) + 0.5) * np.pi / n_points


def beam_pattern(h_eq, phi_r=None, theta_r=None, phi_t=None, theta_t=None) -> BeamPatternGrid:
    h_eq = np.asarray(h_eq, dtype=complex)
    phi_r = default_azimuths() if phi_r is None else np.asarray(phi_r, dtype=float)
    phi_t = default_azimuths() if phi_t is None else np.asarray(phi_t, dtype=float)
    theta_r = DEFAULT_ELEVATIONS if theta_r is None else np.asarray(theta_r, dtype=float)
    theta_t = DEFAULT_ELEVATIONS if theta_t is None else np.asarray(theta_t, dtype=float)
    pr, tr = np.meshgrid(phi_r, theta_r, indexing="ij")
    pt, tt = np.meshgrid(phi_t, theta_t, indexing="ij")
    a_r = steering_matrix(pr.ravel(), tr.ravel(), h_eq.shape[0])
    a_t = steering_matrix(pt.ravel(), tt.ravel(), h_eq.shape[1])
    s = np.abs(a_r.conj().T @ h_eq @ a_t)
    values = s.reshape(phi_r.size, theta_r.size, phi_t.size, theta_t.size)
    return BeamPatternGrid(phi_r, theta_r, phi_t, theta_t, values)


def nmse_unitary(block) -> float:
    """Scale-invariant distance of ``block @ block^H`` from a multiple of the identity.

    The identity has the size of ``block @ block^H``, i.e. the number of rows
    of ``block``. The result lies in [0, 2].
    """
    b = np.asarray(block, dtype=complex)
    m = b @ b.conj().T
    m_norm = np.linalg.norm(m)
    if m_norm == 0:
        raise InvalidArgumentError("NMSE is undefined for a zero block")
    eye = np.eye(m.shape[0]) / np.sqrt(m.shape[0])
    return float(np.linalg.norm(m / m_norm - eye) ** 2 / np.linalg.norm(eye) ** 2)


@dataclass(frozen=True)
class LinkReport:
    spectral_efficiency: float
    mutual_information: float
    realized_snr: float
    objective: float
    gap_energy: float


def link_report(h, f, w, f_opt, w_opt, p_t: float, sigma_n_sq: float) -> LinkReport:
    """Evaluate one precoder/combiner pair against the fully-digital reference."""
    f_tot, w_tot = _total(f), _total(w)
    return LinkReport(
        spectral_efficiency=spectral_efficiency(h, f_tot, w_tot, p_t, sigma_n_sq),
        mutual_information=mutual_information(h, f_tot, p_t, sigma_n_sq),
        realized_snr=realized_snr(h, f_tot, w_tot, p_t, sigma_n_sq),
        objective=float(np.linalg.norm(f_opt - f_tot) ** 2),
        gap_energy=float(np.linalg.norm(channel_gap(h, f_opt, w_opt, f_tot, w_tot)) ** 2),
    )
