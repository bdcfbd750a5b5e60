import math

import numpy as np
import pytest

from rvbprep.geometry import build_cluster, constraint_graph
from rvbprep.hilbert import enumerate_basis, StateVector
from rvbprep.model import (FULL_RYDBERG, HamiltonianOperator, HamiltonianSpec,
                           ModelError, SweepSchedule, apply_hamiltonian,
                           diagonal_interaction, full_rydberg_spec,
                           schedule_eval, tail_pairs)


def brute_force_dense(basis, cluster, omega, delta, r_c, cutoff, v):
    """Matrix elements assembled directly from config bitstrings (oracle)."""
    dim = basis.dim
    h = np.zeros((dim, dim))
    dist = cluster.pair_distances
    configs = [int(c) for c in basis.configs]
    lookup = {c: i for i, c in enumerate(configs)}
    n = basis.n_atoms
    for a, c in enumerate(configs):
        diag = -delta * bin(c).count("1")
        for i in range(n):
            for j in range(i + 1, n):
                if (c >> i) & 1 and (c >> j) & 1:
                    r = dist[i, j]
                    if r_c + 1e-9 < r <= cutoff + 1e-9:
                        diag += v / r**6
        h[a, a] = diag
        for i in range(n):
            other = c ^ (1 << i)
            b = lookup.get(other)
            if b is not None:
                h[a, b] += 0.5 * omega
    return h


@pytest.fixture(scope="module")
def wide12(cluster12):
    return enumerate_basis(constraint_graph(cluster12, 1.0))


def test_pxp_dense_matches_oracle(cluster12, basis12):
    op = HamiltonianOperator(HamiltonianSpec(), basis12)
    got = op.dense(0.7, -1.3)
    want = brute_force_dense(basis12, cluster12, 0.7, -1.3, 2.0, 0.0, 0.0)
    assert np.allclose(got, want, atol=1e-13)


def test_full_model_dense_matches_oracle(cluster12, wide12):
    spec = full_rydberg_spec()
    op = HamiltonianOperator(spec, wide12, cluster=cluster12)
    got = op.dense(1.0, 2.0)
    want = brute_force_dense(wide12, cluster12, 1.0, 2.0, 1.0,
                             math.sqrt(13.0), 2.4**6)
    assert np.allclose(got, want, atol=1e-10)


def test_apply_matches_dense(cluster12, basis12):
    op = HamiltonianOperator(HamiltonianSpec(), basis12)
    rng = np.random.default_rng(11)
    v = rng.standard_normal(basis12.dim) + 1j * rng.standard_normal(basis12.dim)
    dense = op.dense(0.9, 0.4)
    assert np.allclose(op.apply(v, 0.9, 0.4), dense @ v, atol=1e-12)
    lo = op.aslinearoperator(0.9, 0.4)
    assert np.allclose(lo @ v, dense @ v, atol=1e-12)


def test_dense_is_symmetric(cluster12, wide12):
    op = HamiltonianOperator(full_rydberg_spec(), wide12, cluster=cluster12)
    h = op.dense(1.0, 0.3)
    assert np.allclose(h, h.T)


def test_pxp_has_no_tails(basis12):
    op = HamiltonianOperator(HamiltonianSpec(), basis12)
    assert np.all(op.tail_diag == 0.0)


def test_tail_pairs_distance_window(cluster24):
    dist = cluster24.pair_distances
    pairs = tail_pairs(cluster24, 1.0, math.sqrt(13.0))
    assert pairs
    seen = set()
    for i, j, coeff in pairs:
        r = dist[i, j]
        assert 1.0 + 1e-9 < r <= math.sqrt(13.0) + 1e-9
        assert abs(coeff - 1.0 / r**6) < 1e-14
        seen.add((i, j))
    # everything in the window is included exactly once
    n = cluster24.n_atoms
    want = {(i, j) for i in range(n) for j in range(i + 1, n)
            if 1.0 + 1e-9 < dist[i, j] <= math.sqrt(13.0) + 1e-9}
    assert seen == want


def test_diagonal_interaction_counts_pairs(cluster12, wide12):
    diag = diagonal_interaction(wide12, cluster12, 1.0, math.sqrt(13.0))
    pairs = tail_pairs(cluster12, 1.0, math.sqrt(13.0))
    k = wide12.dim // 3
    c = int(wide12.configs[k])
    want = sum(coeff for i, j, coeff in pairs
               if (c >> i) & 1 and (c >> j) & 1)
    assert abs(diag[k] - want) < 1e-14


def test_spec_validation(basis12, cluster12):
    with pytest.raises(ModelError):
        HamiltonianSpec(variant="Ising")
    with pytest.raises(ModelError):
        HamiltonianOperator(full_rydberg_spec(), basis12, cluster=cluster12)
    with pytest.raises(ModelError):
        HamiltonianOperator(full_rydberg_spec(constraint_radius=2.0), basis12)


def test_apply_hamiltonian_wrapper(basis12):
    op = HamiltonianOperator(HamiltonianSpec(), basis12)
    rng = np.random.default_rng(2)
    psi = StateVector(basis12, rng.standard_normal(basis12.dim) + 0j)
    out = apply_hamiltonian(op, psi, 0.5, 1.0)
    assert np.allclose(out.amplitudes, op.apply(psi.amplitudes, 0.5, 1.0))


# --- schedules -----------------------------------------------------------

def test_default_protocol_endpoints():
    s = SweepSchedule.default_protocol(40.0)
    assert s.omega(0.0) == 0.0
    assert s.omega(40.0) == 0.0
    assert abs(s.omega(20.0) - 1.0) < 1e-12
    assert abs(s.delta(0.0) - (-5.0)) < 1e-12
    assert abs(s.delta(40.0) - 1.5) < 1e-12


def test_two_stage_protocol_keeps_drive_on():
    s = SweepSchedule.two_stage_protocol(30.0)
    assert abs(s.omega(30.0) - 1.0) < 1e-12
    assert abs(s.delta(30.0) - 3.5) < 1e-12
    assert s.t3 == 0.0


def test_stage_durations_must_sum():
    with pytest.raises(ModelError):
        SweepSchedule(10.0, 2.0, 2.0, 2.0)
    with pytest.raises(ModelError):
        SweepSchedule(-1.0, 0.0, 0.0, -1.0)


def test_schedule_rejects_out_of_range_time():
    s = SweepSchedule.default_protocol(10.0)
    with pytest.raises(ModelError):
        s.omega(-0.5)
    with pytest.raises(ModelError):
        s.delta(10.5)


def test_smoothing_keeps_profiles_continuous():
    s = SweepSchedule.default_protocol(20.0)
    ts = np.linspace(0.0, 20.0, 4001)
    om = np.array([s.omega(t) for t in ts])
    de = np.array([s.delta(t) for t in ts])
    dt = ts[1] - ts[0]
    # derivatives stay bounded by the underlying ramp slopes
    assert np.max(np.abs(np.diff(om))) / dt < 1.0
    assert np.max(np.abs(np.diff(de))) / dt < 1.0
    assert np.all(om >= -1e-12) and np.all(om <= 1.0 + 1e-12)
    # smoothing rounds the corner at the end of the switch-on ramp
    assert 0.9 < s.omega(s.t1) < 1.0


def test_smoothing_preserves_linear_regions():
    s = SweepSchedule.default_protocol(20.0, smoothing_window=0.5)
    # deep inside stage 2 the ramp is linear, so averaging changes nothing
    t = 10.0
    raw = s._delta(t)
    assert abs(s.delta(t) - raw) < 1e-12


def test_time_at_detuning_ratio():
    s = SweepSchedule.default_protocol(40.0)
    for ratio in (-1.0, 0.0, 1.0):
        t = s.time_at_detuning_ratio(ratio)
        assert s.t1 <= t <= s.t1 + s.t2
        assert abs(s.delta(t) - ratio * s.omega(t)) < 1e-9
    with pytest.raises(ModelError):
        s.time_at_detuning_ratio(3.0)   # above the final detuning


def test_schedule_eval_and_to_dict():
    s = SweepSchedule.default_protocol(10.0)
    om, de = schedule_eval(s, 5.0)
    assert om == s.omega(5.0) and de == s.delta(5.0)
    d = s.to_dict()
    back = SweepSchedule(**d)
    assert back.omega(3.3) == s.omega(3.3)
    assert back.delta(7.7) == s.delta(7.7)
