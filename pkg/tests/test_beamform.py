import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hybridbf.beamform import (HybridPrecoder, PartitionSpec, StoppingRule, aree_solve, design_combiner,
                               design_precoder, ls_digital, omp_baseline, optimal_combiner, optimal_precoder,
                               pe_omp_init, pe_smd_init, phase_extract, power_normalize, random_init,
                               RECEIVER, TRANSMITTER)
from hybridbf.channel import DESK_CONFIG, FULL_CONFIG, PathAngles, SystemConfig, assemble_channel, sample_channel
from hybridbf.errors import InfeasibleStreamsError, InvalidArgumentError
from hybridbf.metrics import spectral_efficiency
from hybridbf.svd import SvdTriple, gc_svd, thin_svd

from conftest import crandn

SINGLE = SystemConfig(n_t=16, n_r=4, n_s=1, n_rf_t=1, n_rf_r=1, n_cl=1, n_ray=1)


def single_path_channel(cfg=SINGLE):
    angles = PathAngles(np.array([0.7]), np.array([1.2]), np.array([2.0]), np.array([0.4]))
    return assemble_channel(cfg, angles, [1.0])


def _setup(seed, cfg=DESK_CONFIG):
    ch = sample_channel(np.random.default_rng(seed), cfg)
    g = gc_svd(ch)
    return ch, g, optimal_precoder(g, cfg.n_s)


# --- phase extraction and least squares

def test_phase_extract_examples():
    assert phase_extract([[2.0]], 0.5)[0, 0] == pytest.approx(0.5)
    assert phase_extract([[0.0]], 0.5)[0, 0] == pytest.approx(0.5)
    assert phase_extract([[-3j]], 1.0)[0, 0] == pytest.approx(-1j)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1), st.floats(1e-3, 10))
def test_phase_extract_modulus(m, n, seed, modulus):
    a = crandn(np.random.default_rng(seed), m, n)
    a[0, 0] = 0
    out = phase_extract(a, modulus)
    assert np.max(np.abs(np.abs(out) - modulus)) <= 1e-15 * max(1.0, modulus)
    nz = a != 0
    np.testing.assert_allclose(np.angle(out[nz]), np.angle(a[nz]), atol=1e-12)


def test_ls_semi_unitary():
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(crandn(rng, 10, 3))
    t = crandn(rng, 10, 2)
    np.testing.assert_allclose(ls_digital(q, t), q.conj().T @ t, atol=1e-13)


def test_ls_exact_fit():
    rng = np.random.default_rng(1)
    f = crandn(rng, 10, 4)
    t = f @ crandn(rng, 4, 3)
    assert np.linalg.norm(t - f @ ls_digital(f, t)) < 1e-10


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ls_matches_normal_equations(seed):
    rng = np.random.default_rng(seed)
    f, t = crandn(rng, 9, 4), crandn(rng, 9, 3)
    oracle = np.linalg.solve(f.conj().T @ f, f.conj().T @ t)
    np.testing.assert_allclose(ls_digital(f, t), oracle, atol=1e-8)


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 5), st.integers(0, 2**32 - 1))
def test_cauchy_schwarz_sandwich(n, seed):
    # square block subproblem: ||E - F_RF F_BB||^2 lies between the scaled phase-extraction objectives
    rng = np.random.default_rng(seed)
    e, f_bb = crandn(rng, 16, n), crandn(rng, n, n)
    f_rf = phase_extract(crandn(rng, 16, n), 0.25)
    mid = np.linalg.norm(e - f_rf @ f_bb) ** 2
    inner = np.linalg.norm(e @ f_bb.conj().T @ np.linalg.pinv(f_bb @ f_bb.conj().T) - f_rf) ** 2
    lo = inner / np.linalg.norm(np.linalg.pinv(f_bb)) ** 2
    hi = inner * np.linalg.norm(f_bb) ** 2
    assert lo - 1e-9 * mid <= mid <= hi + 1e-9 * mid


# --- fully-digital reference

def test_optimal_from_identity():
    t = thin_svd(np.eye(4))
    f = optimal_precoder(t, 2)
    assert np.linalg.norm(f @ f.conj().T - np.diag([1, 1, 0, 0])) < 1e-14


def test_optimal_rank_deficient():
    t = SvdTriple(np.eye(3)[:, :1], np.array([1.0]), np.eye(3)[:, :1])
    with pytest.raises(InfeasibleStreamsError):
        optimal_precoder(t, 2)
    with pytest.raises(InfeasibleStreamsError):
        optimal_combiner(t, 2)


def test_optimal_single_path():
    ch = single_path_channel()
    f = optimal_precoder(gc_svd(ch), 1)
    assert abs(np.vdot(f[:, 0], ch.a_t[:, 0])) == pytest.approx(1.0)


def test_optimal_semi_unitary(desk_svd):
    f = optimal_precoder(desk_svd, DESK_CONFIG.n_s)
    assert np.linalg.norm(f.conj().T @ f - np.eye(DESK_CONFIG.n_s)) < 1e-10


# --- containers

def test_precoder_check_catches_violations():
    f_rf = np.full((4, 2), 0.5 + 0j)
    f_bb = np.eye(2)
    HybridPrecoder(f_rf, f_bb).check()
    with pytest.raises(InvalidArgumentError):
        HybridPrecoder(f_rf * 1.01, f_bb).check()
    with pytest.raises(InvalidArgumentError):
        HybridPrecoder(f_rf, 2 * f_bb, TRANSMITTER, True).check()


@pytest.mark.parametrize("n_rf,n,ok", [(7, 4, True), (7, 3, True), (7, 2, False), (7, 5, False),
                                       (4, 4, True), (4, 1, True), (4, 0, False), (8, 4, True)])
def test_partition_bounds(n_rf, n, ok):
    if ok:
        PartitionSpec(n).validate(n_rf, 4)
    else:
        with pytest.raises(InvalidArgumentError):
            PartitionSpec(n).validate(n_rf, 4)


def test_power_normalize_zero():
    with pytest.raises(InvalidArgumentError):
        power_normalize(np.zeros((4, 2)), np.zeros((2, 1)), 1)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(4, 8))
def test_random_init_contract(seed, n_rf):
    p = random_init(np.random.default_rng(seed), 64, n_rf, 4)
    p.check()
    assert p.f_bb.shape == (n_rf, 4)


# --- AREE

@pytest.mark.parametrize("seed", range(5))
def test_aree_invariants(seed):
    ch, g, f_opt = _setup(seed)
    init = random_init(np.random.default_rng(seed + 100), 64, 7, 4)
    p, tr = aree_solve(f_opt, init)
    p.check()
    assert p.power_normalized and tr.power_scale > 0
    assert np.all(np.diff(tr.outer_objectives) <= 1e-12)
    assert tr.outer_objectives[0] <= tr.initial_objective + 1e-12
    assert len(tr.inner_counts) == tr.total_outer == len(tr.nmse_bb1) == len(tr.nmse_bb2)
    assert all(1 <= a <= 20 and 1 <= b <= 20 for a, b in tr.inner_counts)
    assert tr.total_outer <= 10


def test_aree_degenerate_single_block():
    ch, g, f_opt = _setup(0)
    init = random_init(np.random.default_rng(1), 64, 4, 4)
    p, tr = aree_solve(f_opt, init)
    assert p.f_rf.shape == (64, 4) and p.f_bb.shape == (4, 4)
    assert abs(np.linalg.norm(p.total) ** 2 - 4) < 1e-10
    assert all(b == 0 for _, b in tr.inner_counts)
    assert np.all(np.isnan(tr.nmse_bb2))


def test_aree_first_ls_step_never_hurts():
    ch, g, f_opt = _setup(3)
    rng = np.random.default_rng(0)
    f_rf = phase_extract(crandn(rng, 64, 7), 1 / 8)
    f_bb = crandn(rng, 7, 4)
    before = np.linalg.norm(f_opt - f_rf @ f_bb) ** 2
    after = np.linalg.norm(f_opt - f_rf @ ls_digital(f_rf, f_opt)) ** 2
    assert after <= before
    _, tr = aree_solve(f_opt, HybridPrecoder(f_rf, f_bb), stop=StoppingRule(max_outer=1))
    assert tr.outer_objectives[0] <= before


def test_aree_rejects_bad_inputs():
    ch, g, f_opt = _setup(0)
    init = random_init(np.random.default_rng(1), 64, 7, 4)
    with pytest.raises(InvalidArgumentError):
        aree_solve(f_opt[:32], init)
    with pytest.raises(InvalidArgumentError):
        aree_solve(f_opt, init, PartitionSpec(2))


def test_aree_receiver_not_normalized():
    ch, g, _ = _setup(2)
    w_opt = optimal_combiner(g, 4)
    init = random_init(np.random.default_rng(3), 16, 7, 4, side=RECEIVER)
    w, tr = aree_solve(w_opt, init)
    assert not w.power_normalized and tr.power_scale == 1.0
    w.check()


def test_normalization_bound_small_sample():
    for seed in range(10):
        ch, g, f_opt = _setup(seed)
        init = pe_smd_init(f_opt, ch.a_t, g.right_coeffs, 7)
        p, tr = aree_solve(f_opt, init)
        f_bb_raw = p.f_bb / tr.power_scale
        e1 = f_opt - p.f_rf[:, :4] @ f_bb_raw[:4]
        delta = np.linalg.norm(e1 - p.f_rf[:, 4:] @ f_bb_raw[4:])
        assert np.linalg.norm(e1 - p.f_rf[:, 4:] @ p.f_bb[4:]) <= 2 * delta + 1e-9


def test_full_scale_inner_counts():
    ch, g, f_opt = _setup(0, FULL_CONFIG)
    init = pe_smd_init(f_opt, ch.a_t, g.right_coeffs, FULL_CONFIG.n_rf_t)
    _, tr = aree_solve(f_opt, init)
    assert all(a <= 20 and b <= 20 for a, b in tr.inner_counts)


# --- initializers and baseline

def _greedy_oracle(f_opt, a, rounds):
    """Plain transcription of the greedy recursion with lstsq in place of pinv."""
    chosen, res = [], f_opt.copy()
    for _ in range(rounds):
        scores = [np.linalg.norm(a[:, j].conj() @ res) for j in range(a.shape[1])]
        best = max(range(len(scores)), key=lambda j: (scores[j], -j))
        chosen.append(best)
        sub = a[:, chosen]
        res = f_opt - sub @ np.linalg.lstsq(sub, f_opt, rcond=None)[0]
    return chosen


def _selected(f_rf, a, skip):
    cols = phase_extract(a, 1 / np.sqrt(a.shape[0]))
    return [int(np.argmin(np.linalg.norm(cols - f_rf[:, [k]], axis=0))) for k in range(skip, f_rf.shape[1])]


@pytest.mark.parametrize("seed", range(10))
def test_pe_omp_matches_oracle(seed):
    ch, g, f_opt = _setup(seed)
    p = pe_omp_init(f_opt, ch.a_t, 7)
    p.check()
    assert _selected(p.f_rf, ch.a_t, 4) == _greedy_oracle(f_opt, ch.a_t, 3)
    o = omp_baseline(f_opt, ch.a_t, 7)
    o.check()
    picks = _selected(o.f_rf, ch.a_t, 0)
    assert picks[:3] == _greedy_oracle(f_opt, ch.a_t, 3)
    assert picks == _greedy_oracle(f_opt, ch.a_t, 7)


def test_degenerate_initializers_agree():
    ch, g, f_opt = _setup(4)
    a = pe_omp_init(f_opt, ch.a_t, 4)
    b = pe_smd_init(f_opt, ch.a_t, g.right_coeffs, 4)
    np.testing.assert_allclose(a.f_rf, phase_extract(f_opt, 1 / 8))
    np.testing.assert_allclose(a.f_rf, b.f_rf)
    np.testing.assert_allclose(a.f_bb, b.f_bb)


def test_single_path_selection():
    cfg = SystemConfig(n_t=16, n_r=4, n_s=1, n_rf_t=2, n_rf_r=2, n_cl=1, n_ray=1)
    ch = single_path_channel(cfg)
    g = gc_svd(ch)
    f_opt = optimal_precoder(g, 1)
    p = pe_omp_init(f_opt, ch.a_t, 2)
    np.testing.assert_allclose(p.f_rf[:, 1], ch.a_t[:, 0], atol=1e-14)
    o = omp_baseline(f_opt, ch.a_t, 1)
    np.testing.assert_allclose(o.f_rf[:, 0], ch.a_t[:, 0], atol=1e-14)


def test_orthonormal_dictionary_smd_equals_omp():
    # with orthonormal columns the conjugate transpose is the pseudo-inverse
    rng = np.random.default_rng(5)
    a = np.fft.fft(np.eye(16)) / 4
    f_opt, _ = np.linalg.qr(a[:, [1, 5, 9]] @ crandn(rng, 3, 2) + 1e-3 * crandn(rng, 16, 2))
    coeffs = a.conj().T @ f_opt
    p1 = pe_omp_init(f_opt, a, 3)
    p2 = pe_smd_init(f_opt, a, coeffs, 3)
    np.testing.assert_allclose(p1.f_rf, p2.f_rf, atol=1e-12)


def test_initializer_argument_errors():
    ch, g, f_opt = _setup(0)
    with pytest.raises(InvalidArgumentError):
        pe_omp_init(f_opt, ch.a_t, 3)
    with pytest.raises(InvalidArgumentError):
        omp_baseline(f_opt, ch.a_t[:, :5], 7)
    with pytest.raises(InvalidArgumentError):
        pe_smd_init(f_opt, ch.a_t, g.right_coeffs[:10], 7)


def test_design_dispatch(desk_channel, desk_svd):
    for method in ("aree", "pe_omp", "pe_smd", "omp"):
        f, tr = design_precoder(desk_svd, desk_channel, DESK_CONFIG, method, rng=np.random.default_rng(0))
        w, _ = design_combiner(desk_svd, desk_channel, DESK_CONFIG, method, rng=np.random.default_rng(1))
        f.check()
        w.check()
        assert (tr is not None) == (method == "aree")
        assert w.side == RECEIVER and not w.power_normalized
    with pytest.raises(InvalidArgumentError):
        design_precoder(desk_svd, desk_channel, DESK_CONFIG, "magic")
    with pytest.raises(InvalidArgumentError):
        design_precoder(desk_svd, desk_channel, DESK_CONFIG, "aree", init="random")
    with pytest.raises(InvalidArgumentError):
        design_precoder(desk_svd, desk_channel, DESK_CONFIG, "aree", init="bogus")


def test_single_path_combiner():
    ch = single_path_channel()
    w, _ = design_combiner(gc_svd(ch), ch, SINGLE, "omp")
    np.testing.assert_allclose(w.f_rf[:, 0], phase_extract(ch.a_r[:, 0], 0.5), atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
def test_combiner_beats_random_phases(seed):
    ch, g, _ = _setup(seed)
    w_opt = optimal_combiner(g, 4)
    for method in ("aree", "pe_omp"):
        w, _ = design_combiner(g, ch, DESK_CONFIG, method)
        assert np.allclose(np.abs(w.f_rf), 0.25, atol=1e-14)
        w_rf = phase_extract(crandn(np.random.default_rng(seed), 16, 7), 0.25)
        baseline = np.linalg.norm(w_opt - w_rf @ ls_digital(w_rf, w_opt))
        assert np.linalg.norm(w_opt - w.total) < baseline


@pytest.mark.slow
def test_initializer_spectral_efficiency_ordering():
    cfg = DESK_CONFIG
    se = {"omp": [], "pe_omp": [], "pe_smd": []}
    for seed in range(1000):
        ch, g, _ = _setup(seed)
        for m in se:
            f, _ = design_precoder(g, ch, cfg, m)
            w, _ = design_combiner(g, ch, cfg, m)
            se[m].append(spectral_efficiency(ch.h, f, w, cfg.p_t, cfg.sigma_n_sq))
    mean = {m: np.mean(v) for m, v in se.items()}
    assert mean["omp"] <= mean["pe_omp"]
    assert mean["pe_smd"] >= mean["pe_omp"] - 0.5
