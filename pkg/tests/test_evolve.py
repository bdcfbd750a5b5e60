import numpy as np
import pytest
import scipy.linalg

from rvbprep.evolve import (EvolveError, cf4_step, evolve_sweep,
                            integrator_crosscheck, lanczos_expm_step, overlap,
                            load_state, rk4_evolve, save_state,
                            trajectory_to_csv)
from rvbprep.geometry import build_cluster, constraint_graph
from rvbprep.hilbert import (StateVector, enumerate_basis,
                             enumerate_maximal_covers, rvb_state)
from rvbprep.model import HamiltonianOperator, HamiltonianSpec, SweepSchedule


@pytest.fixture(scope="module")
def op12(basis12):
    return HamiltonianOperator(HamiltonianSpec(), basis12)


def vacuum(basis):
    amps = np.zeros(basis.dim, dtype=np.complex128)
    amps[basis.index_of(0)] = 1.0
    return StateVector(basis, amps)


def test_lanczos_step_matches_dense_expm(op12, basis12):
    h = op12.dense(0.8, -0.6)
    rng = np.random.default_rng(13)
    v = rng.standard_normal(basis12.dim) + 1j * rng.standard_normal(basis12.dim)
    v /= np.linalg.norm(v)
    for dt in (0.05, 0.4):
        want = scipy.linalg.expm(-1j * dt * h) @ v
        got, err = lanczos_expm_step(lambda x: op12.apply(x, 0.8, -0.6),
                                     v, dt, tol=1e-12, krylov_dim=40)
        assert err <= 1e-12
        assert np.max(np.abs(got - want)) < 1e-9
        assert abs(np.linalg.norm(got) - 1.0) < 1e-11


def test_lanczos_happy_breakdown(op12, basis12):
    # an eigenvector spans a one-dimensional Krylov space
    w, vecs = np.linalg.eigh(op12.dense(1.0, 0.0))
    v = vecs[:, 0].astype(np.complex128)
    got, err = lanczos_expm_step(lambda x: op12.apply(x, 1.0, 0.0), v, 0.3)
    assert err == 0.0
    assert np.allclose(got, np.exp(-1j * 0.3 * w[0]) * v, atol=1e-10)


def test_cf4_is_fourth_order(op12, basis12):
    s = SweepSchedule.default_protocol(10.0)
    rng = np.random.default_rng(17)
    v = rng.standard_normal(basis12.dim) + 0j
    v /= np.linalg.norm(v)
    t0 = 3.0
    errs = []
    for dt in (0.2, 0.1):
        exact = v.copy()
        n_fine = 200
        for k in range(n_fine):
            exact, _ = cf4_step(op12, s, exact, t0 + k * dt / n_fine,
                                dt / n_fine, tol=1e-13)
        coarse, _ = cf4_step(op12, s, v, t0, dt, tol=1e-13)
        errs.append(np.linalg.norm(coarse - exact))
    order = np.log2(errs[0] / errs[1])
    assert order > 3.5


def test_evolve_sweep_conserves_norm_and_energy_when_frozen(op12, basis12):
    # constant (Omega, Delta) after smoothing: use a long flat stage-2 window
    s = SweepSchedule(4.0, 0.0, 4.0, 0.0, delta0=0.7, delta1=0.7,
                      smoothing_window=0.0)
    rng = np.random.default_rng(19)
    v = rng.standard_normal(basis12.dim) + 0j
    psi0 = StateVector(basis12, v / np.linalg.norm(v))
    h = op12.dense(1.0, 0.7)
    e0 = float(np.vdot(psi0.amplitudes, h @ psi0.amplitudes).real)
    traj = evolve_sweep(op12, s, psi0=psi0, n_samples=5)
    assert traj.norm_drift < 1e-10
    ef = float(np.vdot(traj.final_state.amplitudes,
                       h @ traj.final_state.amplitudes).real)
    assert abs(ef - e0) < 1e-8


def test_sweep_crosscheck_small_cluster():
    cl = build_cluster(1, 1)
    basis = enumerate_basis(constraint_graph(cl, 2.0))
    op = HamiltonianOperator(HamiltonianSpec(), basis)
    s = SweepSchedule.default_protocol(5.0)
    res = integrator_crosscheck(op, s, dt_rk=2e-4, local_tol=1e-10)
    assert res["max_deviation"] < 1e-6
    assert res["norm_drift"] < 1e-10
    assert res["krylov_steps"] < res["rk4_steps"]


def test_evolve_records_observables(op12, basis12, covers12):
    rvb = rvb_state(covers12, basis12)
    s = SweepSchedule.default_protocol(6.0)
    traj = evolve_sweep(op12, s, rvb=rvb, n_samples=20,
                        checkpoints=(3.0,))
    assert len(traj.times) == 20
    assert traj.times[0] == 0.0 and traj.times[-1] == 6.0
    assert np.allclose(traj.omegas, [s.omega(t) for t in traj.times])
    assert np.allclose(traj.deltas, [s.delta(t) for t in traj.times])
    # starts in vacuum: zero density, all weight in the 0-excitation sector
    assert traj.density[0] == 0.0
    assert traj.sector_weights[0, 0] == 1.0
    assert np.all(np.isfinite(traj.rvb_overlap))
    assert traj.rvb_overlap[0] == pytest.approx(
        abs(overlap(rvb, vacuum(basis12))))
    assert set(traj.snapshots) == {3.0}
    assert abs(traj.snapshots[3.0].norm - 1.0) < 1e-10


def test_trajectory_csv_roundtrip(tmp_path, op12, basis12):
    s = SweepSchedule.default_protocol(2.0)
    traj = evolve_sweep(op12, s, n_samples=6)
    path = tmp_path / "traj.csv"
    trajectory_to_csv(traj, str(path))
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = np.array([[float(x) for x in line.split(",")]
                         for line in fh])
    assert header[:6] == ["t", "Omega", "Delta", "norm",
                          "rvb_overlap_abs", "density"]
    assert rows.shape == (6, 6 + basis12.n_atoms + 1)
    assert np.allclose(rows[:, 0], traj.times)
    assert np.allclose(rows[:, 5], traj.density)


def test_state_npz_roundtrip(tmp_path, basis12):
    rng = np.random.default_rng(23)
    amps = rng.standard_normal(basis12.dim) + 1j * rng.standard_normal(basis12.dim)
    psi = StateVector(basis12, amps)
    path = str(tmp_path / "state.npz")
    save_state(path, psi)
    back = load_state(path)
    assert back.basis.n_atoms == 12
    assert np.array_equal(back.basis.configs, basis12.configs)
    assert np.allclose(back.amplitudes, amps)


def test_overlap_rejects_mismatched_bases(basis12):
    cl = build_cluster(1, 1)
    small = enumerate_basis(constraint_graph(cl, 2.0))
    a = vacuum(basis12)
    b = vacuum(small)
    with pytest.raises(EvolveError):
        overlap(a, b)


def test_rk4_matches_dense_propagator(op12, basis12):
    s = SweepSchedule(1.0, 0.0, 1.0, 0.0, delta0=0.4, delta1=0.4,
                      smoothing_window=0.0)
    psi0 = vacuum(basis12)
    got = rk4_evolve(op12, s, psi0, dt=2e-4)
    want = scipy.linalg.expm(-1j * op12.dense(1.0, 0.4)) @ psi0.amplitudes
    assert np.max(np.abs(got.amplitudes - want)) < 1e-8
