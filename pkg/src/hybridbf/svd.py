"""Thin SVD with rank truncation, and the factored SVD of a geometric channel.

The geometric channel ``H = A_r diag(g) A_t^H`` is decomposed without ever
factorizing the dense ``N_r x N_t`` matrix: each steering factor is whitened
by its own thin SVD, leaving a small ``R x T`` core whose SVD lifts back to
the SVD of ``H``. Cost is O((N_t + N_r) L^2) for ``L`` paths.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateRankError, InvalidArgumentError

REL_TOL = 1e-12


@dataclass(frozen=True)
class SvdTriple:
    """``m ≈ u @ diag(sigma) @ v^H`` with ``k`` retained singular values."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def k(self) -> int:
        return self.sigma.shape[0]

    def reconstruct(self) -> np.ndarray:
        return (self.u * self.sigma[None, :]) @ self.v.conj().T


@dataclass(frozen=True)
class GcSvdResult(SvdTriple):
    """SVD of a geometric channel plus the path-domain coefficients of its singular vectors.

    ``u == a_r @ left_coeffs`` and ``v == a_t @ right_coeffs``; the latter
    drives the simultaneous selection of the PE-SMD initializer.
    """

    left_coeffs: np.ndarray | None = None
    right_coeffs: np.ndarray | None = None


@dataclass(frozen=True)
class WhitenedFactor:
    a_tilde: np.ndarray
    q_tilde: np.ndarray
    sigma_diag: np.ndarray

    @property
    def rank(self) -> int:
        return self.sigma_diag.shape[0]


def _fix_phases(u: np.ndarray, v: np.ndarray, *extra: np.ndarray):
    """Rotate each column pair so the largest-magnitude entry of ``u`` is real, >= 0."""
    if u.shape[1] == 0:
        return (u, v, *extra)
    rows = np.argmax(np.abs(u), axis=0)
    pivot = u[rows, np.arange(u.shape[1])]
    mag = np.abs(pivot)
    rot = np.where(mag > 0, pivot.conj() / np.where(mag > 0, mag, 1.0), 1.0)
    return (u * rot[None, :], v * rot[None, :], *(x * rot[None, :] for x in extra))


def _truncated_svd(m: np.ndarray, rel_tol: float):
    u, s, vh = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0:
        return u[:, :0], s[:0], vh[:0].conj().T
    k = int(np.count_nonzero(s > rel_tol * s[0]))
    return u[:, :k], s[:k], vh[:k].conj().T


def thin_svd(m, rel_tol: float = REL_TOL) -> SvdTriple:
    """Economy SVD keeping singular values above ``rel_tol * sigma_max``."""
    m = np.asarray(m)
    if m.ndim != 2:
        raise InvalidArgumentError("thin_svd expects a 2-D matrix")
    if not np.all(np.isfinite(m)):
        raise InvalidArgumentError("matrix contains non-finite entries")
    u, s, v = _truncated_svd(m.astype(complex, copy=False), rel_tol)
    u, v = _fix_phases(u, v)
    return SvdTriple(u=u, sigma=s, v=v)


def pinv(m, rel_tol: float = REL_TOL) -> np.ndarray:
    """Moore-Penrose pseudo-inverse through the truncated thin SVD."""
    m = np.asarray(m, dtype=complex)
    if m.size == 0:
        return np.zeros((m.shape[1], m.shape[0]), dtype=complex)
    if not np.all(np.isfinite(m)):
        raise InvalidArgumentError("matrix contains non-finite entries")
    u, s, v = _truncated_svd(m, rel_tol)
    return (v / s[None, :]) @ u.conj().T


def whiten_factor(a, rel_tol: float = REL_TOL) -> WhitenedFactor:
    """Find ``q_tilde`` such that ``a @ q_tilde`` has orthonormal columns.

    With ``a = U_a diag(s) Q^H`` we return ``q_tilde = Q diag(1/s)`` and
    ``sigma_diag = s**2`` (the squared singular values of ``a``).
    """
    a = np.asarray(a, dtype=complex)
    if not np.all(np.isfinite(a)):
        raise InvalidArgumentError("factor contains non-finite entries")
    u, s, q = _truncated_svd(a, rel_tol)
    if s.size == 0:
        raise DegenerateRankError("cannot whiten a zero matrix")
    # a @ q_tilde equals u exactly; u is used directly since forming the
    # product loses orthogonality when steering columns are nearly collinear
    return WhitenedFactor(a_tilde=u, q_tilde=q / s[None, :], sigma_diag=s**2)


def gc_svd(ch, rel_tol: float = REL_TOL) -> GcSvdResult:
    """SVD of ``ch.h`` computed from its factors ``a_r``, ``h_d``, ``a_t``."""
    rx = whiten_factor(ch.a_r, rel_tol)
    tx = whiten_factor(ch.a_t, rel_tol)
    gains = np.diag(ch.h_d)
    # core = Sigma_R Q~^H H_d P~ Sigma_T, an R x T matrix
    core = (rx.sigma_diag[:, None] * rx.q_tilde.conj().T) @ (gains[:, None] * tx.q_tilde) * tx.sigma_diag[None, :]
    u_c, s, v_c = _truncated_svd(core, rel_tol)
    if s.size == 0:
        raise DegenerateRankError("channel core has no nonzero singular values")
    left = rx.q_tilde @ u_c
    right = tx.q_tilde @ v_c
    u = rx.a_tilde @ u_c
    v = tx.a_tilde @ v_c
    u, v, left, right = _fix_phases(u, v, left, right)
    return GcSvdResult(u=u, sigma=s, v=v, left_coeffs=left, right_coeffs=right)
