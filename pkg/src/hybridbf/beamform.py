"""Hybrid precoder and combiner design.

All analog matrices are built from phases only, so their entries have modulus
exactly ``1/sqrt(N)``. Digital matrices come from least squares through the
truncated pseudo-inverse in :mod:`hybridbf.svd`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleStreamsError, InvalidArgumentError
from .metrics import nmse_unitary
from .svd import SvdTriple, pinv

TRANSMITTER = "transmitter"
RECEIVER = "receiver"

METHODS = ("aree", "pe_omp", "pe_smd", "omp")
INITS = ("random", "pe_omp", "pe_smd")


@dataclass(frozen=True)
class HybridPrecoder:
    f_rf: np.ndarray
    f_bb: np.ndarray
    side: str = TRANSMITTER
    power_normalized: bool = False

    @property
    def n_antennas(self) -> int:
        return self.f_rf.shape[0]

    @property
    def n_rf(self) -> int:
        return self.f_rf.shape[1]

    @property
    def total(self) -> np.ndarray:
        return self.f_rf @ self.f_bb

    def check(self, modulus_tol: float = 1e-14, power_tol: float = 1e-10) -> None:
        """Raise if the constant-modulus or transmit-power contract is broken."""
        target = 1.0 / np.sqrt(self.n_antennas)
        dev = np.max(np.abs(np.abs(self.f_rf) - target)) if self.f_rf.size else 0.0
        if dev > modulus_tol:
            raise InvalidArgumentError(f"analog entries deviate from 1/sqrt(N) by {dev:.3e}")
        if self.side == TRANSMITTER and self.power_normalized:
            n_s = self.f_bb.shape[1]
            err = abs(np.linalg.norm(self.total) ** 2 - n_s)
            if err > power_tol:
                raise InvalidArgumentError(f"transmit power off by {err:.3e}")


@dataclass(frozen=True)
class StoppingRule:
    inner_tol: float = 1e-4
    max_inner: int = 20
    outer_tol: float = 1e-4
    max_outer: int = 10


@dataclass(frozen=True)
class PartitionSpec:
    """Number of RF chains in the first block (``n = n_s`` by default)."""

    n: int

    def validate(self, n_rf: int, n_s: int) -> None:
        if not (max(n_rf - n_s, 1) <= self.n <= min(n_s, n_rf)):
            raise InvalidArgumentError(
                f"partition n={self.n} outside [{max(n_rf - n_s, 1)}, {min(n_s, n_rf)}] "
                f"for n_rf={n_rf}, n_s={n_s}")


@dataclass
class SolveTrace:
    outer_objectives: list = field(default_factory=list)
    inner_counts: list = field(default_factory=list)
    nmse_bb1: list = field(default_factory=list)
    nmse_bb2: list = field(default_factory=list)
    converged: bool = False
    initial_objective: float = float("nan")
    # factor applied to the digital matrix by the final power normalization
    power_scale: float = 1.0

    @property
    def total_outer(self) -> int:
        return len(self.outer_objectives)

    @property
    def total_inner(self) -> tuple[int, int]:
        return (sum(c[0] for c in self.inner_counts), sum(c[1] for c in self.inner_counts))


def optimal_precoder(svd: SvdTriple, n_s: int) -> np.ndarray:
    """First ``n_s`` right singular vectors (use ``svd.u`` via :func:`optimal_combiner`)."""
    if svd.k < n_s:
        raise InfeasibleStreamsError(f"channel rank {svd.k} < {n_s} streams")
    return svd.v[:, :n_s]


def optimal_combiner(svd: SvdTriple, n_s: int) -> np.ndarray:
    if svd.k < n_s:
        raise InfeasibleStreamsError(f"channel rank {svd.k} < {n_s} streams")
    return svd.u[:, :n_s]


def phase_extract(m, modulus: float) -> np.ndarray:
    """Keep only the phase of each entry and set its magnitude to ``modulus``; arg(0) is 0."""
    m = np.asarray(m, dtype=complex)
    phase = np.where(m == 0, 0.0, np.angle(m))
    return modulus * np.exp(1j * phase)


def ls_digital(f_rf, target) -> np.ndarray:
    """Least-squares digital matrix ``pinv(f_rf) @ target``."""
    return pinv(f_rf) @ np.asarray(target, dtype=complex)


def power_normalize(f_rf: np.ndarray, f_bb: np.ndarray, n_s: int) -> tuple[np.ndarray, float]:
    norm = np.linalg.norm(f_rf @ f_bb)
    if norm == 0:
        raise InvalidArgumentError("cannot power-normalize a zero precoder")
    scale = np.sqrt(n_s) / norm
    return f_bb * scale, scale


def _objective(target, f_rf, f_bb) -> float:
    return float(np.linalg.norm(target - f_rf @ f_bb) ** 2)


def _solve_block(target, f_rf, modulus, stop: StoppingRule):
    """Alternate exact LS on the digital block and phase extraction on the analog block.

    Phase extraction is only a surrogate minimizer, so the best LS iterate
    seen is returned; the first LS step never increases the objective, which
    keeps the outer sequence monotone.
    """
    best = None
    prev = None
    count = 0
    for count in range(1, stop.max_inner + 1):
        f_bb = ls_digital(f_rf, target)
        obj = _objective(target, f_rf, f_bb)
        if best is None or obj < best[2]:
            best = (f_rf, f_bb, obj)
        if obj <= 1e-30 or (prev is not None and abs(prev - obj) <= stop.inner_tol * prev):
            break
        prev = obj
        gram_pinv = pinv(f_bb @ f_bb.conj().T)
        f_rf = phase_extract(target @ f_bb.conj().T @ gram_pinv, modulus)
    return best[0], best[1], count


def aree_solve(f_opt, init: HybridPrecoder, partition: PartitionSpec | None = None,
               stop: StoppingRule | None = None, *, normalize_power: bool | None = None):
    """Alternating residual error elimination.

    The analog/digital pair is split into a first block of ``partition.n``
    RF chains and a second block holding the rest. Each block in turn fits
    the residual left by the other; the outer loop runs until the total
    approximation error ``||f_opt - F_RF F_BB||_F^2`` stops improving.

    Returns the (power-normalized, for transmitters) :class:`HybridPrecoder`
    and a :class:`SolveTrace`.
    """
    f_opt = np.asarray(f_opt, dtype=complex)
    stop = stop or StoppingRule()
    n_ant, n_s = f_opt.shape
    n_rf = init.n_rf
    if init.n_antennas != n_ant or init.f_bb.shape != (n_rf, n_s):
        raise InvalidArgumentError(
            f"init shapes {init.f_rf.shape}, {init.f_bb.shape} do not match f_opt {f_opt.shape}")
    partition = partition or PartitionSpec(min(n_s, n_rf))
    partition.validate(n_rf, n_s)
    if normalize_power is None:
        normalize_power = init.side == TRANSMITTER
    modulus = 1.0 / np.sqrt(n_ant)
    n = partition.n

    trace = SolveTrace(initial_objective=_objective(f_opt, init.f_rf, init.f_bb))
    f_rf1, f_rf2 = init.f_rf[:, :n], init.f_rf[:, n:]
    f_bb2 = init.f_bb[n:]
    has_second = n < n_rf
    e2 = f_opt
    for t in range(stop.max_outer):
        f_rf1, f_bb1, it1 = _solve_block(e2, f_rf1, modulus, stop)
        e1 = f_opt - f_rf1 @ f_bb1
        if has_second:
            f_rf2, f_bb2, it2 = _solve_block(e1, f_rf2, modulus, stop)
            e2 = f_opt - f_rf2 @ f_bb2
            obj = _objective(e1, f_rf2, f_bb2)
        else:
            it2 = 0
            obj = float(np.linalg.norm(e1) ** 2)
        trace.outer_objectives.append(obj)
        trace.inner_counts.append((it1, it2))
        trace.nmse_bb1.append(nmse_unitary(f_bb1) if np.any(f_bb1) else float("nan"))
        trace.nmse_bb2.append(nmse_unitary(f_bb2) if has_second and np.any(f_bb2) else float("nan"))
        if t > 0:
            prev = trace.outer_objectives[-2]
            if obj <= 1e-30 or abs(prev - obj) <= stop.outer_tol * prev:
                trace.converged = True
                break

    f_rf = np.hstack([f_rf1, f_rf2]) if has_second else f_rf1
    f_bb = np.vstack([f_bb1, f_bb2]) if has_second else f_bb1
    if normalize_power:
        f_bb, trace.power_scale = power_normalize(f_rf, f_bb, n_s)
    return HybridPrecoder(f_rf, f_bb, init.side, bool(normalize_power)), trace


def _greedy_select(f_opt, a, rounds: int) -> list[int]:
    """Orthogonal matching pursuit over the columns of ``a``; ties go to the smallest index."""
    selected: list[int] = []
    res = f_opt
    for _ in range(rounds):
        psi = a.conj().T @ res
        k = int(np.argmax(np.linalg.norm(psi, axis=1)))
        selected.append(k)
        a_max = a[:, selected]
        res = f_opt - a_max @ (pinv(a_max) @ f_opt)
    return selected


def _finish(f_opt, f_rf, side, normalize):
    f_bb = ls_digital(f_rf, f_opt)
    if normalize:
        f_bb, _ = power_normalize(f_rf, f_bb, f_opt.shape[1])
    return HybridPrecoder(f_rf, f_bb, side, normalize)


def _check_rounds(a, n_rf, n_s, needed):
    if n_rf < n_s:
        raise InvalidArgumentError(f"n_rf={n_rf} must be at least n_s={n_s}")
    if a.shape[1] < needed:
        raise InvalidArgumentError(f"steering matrix has {a.shape[1]} columns, {needed} needed")


def pe_omp_init(f_opt, a, n_rf: int, *, side: str = TRANSMITTER) -> HybridPrecoder:
    """Greedy steering selection for ``n_rf - n_s`` chains, phase-extracted residual for the rest.

    The analog matrix is ``[PE(F_res), PE(A_sel)]`` so the residual block
    occupies the first ``n_s`` columns.
    """
    f_opt = np.asarray(f_opt, dtype=complex)
    n_ant, n_s = f_opt.shape
    _check_rounds(a, n_rf, n_s, n_rf - n_s)
    selected = _greedy_select(f_opt, a, n_rf - n_s)
    a_max = a[:, selected]
    res = f_opt - a_max @ ls_digital(a_max, f_opt) if selected else f_opt
    f_rf = phase_extract(np.hstack([res, a_max]), 1.0 / np.sqrt(n_ant))
    return _finish(f_opt, f_rf, side, side == TRANSMITTER)


def pe_smd_init(f_opt, a, path_coeffs, n_rf: int, *, side: str = TRANSMITTER) -> HybridPrecoder:
    """Like :func:`pe_omp_init`, but picks all steering columns at once.

    Columns are ranked by the row norms of ``path_coeffs[:, :n_s]`` (the
    path-domain coefficients of the optimal precoder, from :func:`gc_svd`),
    and the residual uses a plain conjugate-transpose projection.
    """
    f_opt = np.asarray(f_opt, dtype=complex)
    n_ant, n_s = f_opt.shape
    path_coeffs = np.asarray(path_coeffs)
    if path_coeffs.shape[0] != a.shape[1]:
        raise InvalidArgumentError("path_coeffs must have one row per steering column")
    _check_rounds(a, n_rf, n_s, n_rf - n_s)
    strength = np.linalg.norm(path_coeffs[:, :n_s], axis=1)
    selected = np.argsort(-strength, kind="stable")[: n_rf - n_s]
    a_sel = a[:, selected]
    res = f_opt - a_sel @ (a_sel.conj().T @ f_opt)
    f_rf = phase_extract(np.hstack([res, a_sel]), 1.0 / np.sqrt(n_ant))
    return _finish(f_opt, f_rf, side, side == TRANSMITTER)


def omp_baseline(f_opt, a, n_rf: int, *, side: str = TRANSMITTER) -> HybridPrecoder:
    """Classic spatially sparse OMP: all ``n_rf`` analog columns are selected steering vectors."""
    f_opt = np.asarray(f_opt, dtype=complex)
    n_ant, n_s = f_opt.shape
    _check_rounds(a, n_rf, n_s, n_rf)
    selected = _greedy_select(f_opt, a, n_rf)
    f_rf = phase_extract(a[:, selected], 1.0 / np.sqrt(n_ant))
    return _finish(f_opt, f_rf, side, side == TRANSMITTER)


def random_init(rng: np.random.Generator, n_ant: int, n_rf: int, n_s: int,
                *, side: str = TRANSMITTER) -> HybridPrecoder:
    """Uniform random phases and a CN(0, 1) digital matrix scaled to ``n_s`` total power."""
    f_rf = np.exp(1j * rng.uniform(0.0, 2 * np.pi, size=(n_ant, n_rf))) / np.sqrt(n_ant)
    f_bb = (rng.standard_normal((n_rf, n_s)) + 1j * rng.standard_normal((n_rf, n_s))) / np.sqrt(2.0)
    f_bb, _ = power_normalize(f_rf, f_bb, n_s)
    return HybridPrecoder(f_rf, f_bb, side, True)


def _design(target, a, coeffs, n_rf, side, method, init, partition, stop, rng):
    n_ant, n_s = target.shape
    if method == "pe_omp":
        return pe_omp_init(target, a, n_rf, side=side), None
    if method == "pe_smd":
        if coeffs is None:
            raise InvalidArgumentError("pe_smd needs the path coefficients returned by gc_svd")
        return pe_smd_init(target, a, coeffs, n_rf, side=side), None
    if method == "omp":
        return omp_baseline(target, a, n_rf, side=side), None
    if method != "aree":
        raise InvalidArgumentError(f"unknown method {method!r}")
    if isinstance(init, HybridPrecoder):
        start = init
    elif init == "random":
        if rng is None:
            raise InvalidArgumentError("random initialization needs a generator")
        start = random_init(rng, n_ant, n_rf, n_s, side=side)
    elif init in ("pe_omp", "pe_smd"):
        start, _ = _design(target, a, coeffs, n_rf, side, init, None, None, None, None)
    else:
        raise InvalidArgumentError(f"unknown initializer {init!r}")
    return aree_solve(target, start, partition, stop)


def design_precoder(svd, ch, cfg, method: str, *, init="pe_smd", partition=None,
                    stop=None, rng=None):
    """Run ``method`` against ``F_opt`` at the transmitter. Returns ``(precoder, trace_or_None)``."""
    f_opt = optimal_precoder(svd, cfg.n_s)
    coeffs = getattr(svd, "right_coeffs", None)
    return _design(f_opt, ch.a_t, coeffs, cfg.n_rf_t, TRANSMITTER, method, init, partition, stop, rng)


def design_combiner(svd, ch, cfg, method: str, *, init="pe_smd", partition=None,
                    stop=None, rng=None):
    """Same as :func:`design_precoder` for ``W_opt`` and ``A_r``; no power normalization."""
    w_opt = optimal_combiner(svd, cfg.n_s)
    coeffs = getattr(svd, "left_coeffs", None)
    return _design(w_opt, ch.a_r, coeffs, cfg.n_rf_r, RECEIVER, method, init, partition, stop, rng)
