"""Time evolution along a sweep with short-time Krylov exponentiation.

Each step applies a 4th-order commutator-free Magnus propagator: two
Lanczos-computed exponentials of Gauss-node combinations of the
instantaneous Hamiltonian.  Because H is affine in (Omega, Delta), the
combinations are again Hamiltonians of the same form and the scheme is
exact in that structure.  dt adapts via periodic step-doubling checks
against a local error tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hilbert import StateVector

GAUSS_SHIFT = math.sqrt(3.0) / 6.0     # Gauss-Legendre nodes 1/2 -+ sqrt(3)/6
CF4_A = 0.25 + math.sqrt(3.0) / 6.0
CF4_B = 0.25 - math.sqrt(3.0) / 6.0


class EvolveError(RuntimeError):
    pass


def overlap(psi, phi):
    """<psi|phi> with psi conjugated."""
    if psi.basis.dim != phi.basis.dim or psi.basis.n_atoms != phi.basis.n_atoms:
        raise EvolveError("overlap between states on different bases")
    return complex(np.vdot(psi.amplitudes, phi.amplitudes))


def lanczos_expm_step(apply_h, psi, dt, tol=1e-10, krylov_dim=20,
                      breakdown_tol=1e-13):
    """exp(-i dt H) psi with a residual-controlled Lanczos subspace.

    The basis grows until the coupling of the last Krylov vector into the
    propagated state drops below tol (or a happy breakdown occurs).  Full
    reorthogonalization keeps the tridiagonal projection accurate.
    """
    nrm = np.linalg.norm(psi)
    vecs = [psi / nrm]
    alphas, betas = [], []
    err = 0.0
    u = np.array([np.exp(-1j * dt * 0.0)])
    for j in range(krylov_dim):
        w = apply_h(vecs[-1])
        a = float(np.vdot(vecs[-1], w).real)
        alphas.append(a)
        w = w - a * vecs[-1]
        if j > 0:
            w = w - betas[-1] * vecs[-2]
        for v in vecs:     # full reorthogonalization
            w = w - np.vdot(v, w) * v
        b = float(np.linalg.norm(w))
        k = len(alphas)
        tri = np.diag(alphas)
        for i in range(k - 1):
            tri[i, i + 1] = tri[i + 1, i] = betas[i]
        evals, evecs = np.linalg.eigh(tri)
        u = evecs @ (np.exp(-1j * dt * evals) * evecs[0].conj())
        err = abs(b * dt * u[-1])
        if b < breakdown_tol:
            err = 0.0
            break
        if err <= tol:
            break
        betas.append(b)
        vecs.append(w / b)
    out = np.zeros_like(psi)
    for j in range(len(u)):
        out += u[j] * vecs[j]
    out *= nrm
    return out, err


def cf4_step(op, schedule, psi, t, dt, tol=1e-10, krylov_dim=20):
    """One 4th-order commutator-free Magnus step from t to t + dt."""
    t1 = t + (0.5 - GAUSS_SHIFT) * dt
    t2 = t + (0.5 + GAUSS_SHIFT) * dt
    om1, de1 = schedule.omega(t1), schedule.delta(t1)
    om2, de2 = schedule.omega(t2), schedule.delta(t2)
    # a*H1 + b*H2 = (a+b) * H(om_eff, de_eff) because H is affine in (om, de)
    tau = dt * (CF4_A + CF4_B)   # = dt / 2
    om_a = (CF4_A * om1 + CF4_B * om2) / (CF4_A + CF4_B)
    de_a = (CF4_A * de1 + CF4_B * de2) / (CF4_A + CF4_B)
    om_b = (CF4_B * om1 + CF4_A * om2) / (CF4_A + CF4_B)
    de_b = (CF4_B * de1 + CF4_A * de2) / (CF4_A + CF4_B)
    psi, e1 = lanczos_expm_step(lambda v: op.apply(v, om_a, de_a), psi, tau,
                                tol, krylov_dim)
    psi, e2 = lanczos_expm_step(lambda v: op.apply(v, om_b, de_b), psi, tau,
                                tol, krylov_dim)
    return psi, e1 + e2


@dataclass
class Trajectory:
    times: np.ndarray
    omegas: np.ndarray
    deltas: np.ndarray
    norms: np.ndarray
    rvb_overlap: np.ndarray           # |<RVB|psi>| (nan when no RVB given)
    density: np.ndarray               # mean <n_i> over atoms
    sector_weights: np.ndarray        # (n_samples, N+1)
    snapshots: dict = field(default_factory=dict)   # time -> StateVector
    final_state: StateVector = None
    n_steps: int = 0

    @property
    def norm_drift(self):
        return float(np.max(np.abs(self.norms - 1.0)))


def evolve_sweep(op, schedule, psi0=None, rvb=None, dt_max=0.5, local_tol=1e-9,
                 krylov_dim=20, n_samples=400, checkpoints=(), calib_interval=10):
    """Propagate through the sweep and record observables on a uniform grid.

    psi0 defaults to the vacuum.  ``checkpoints`` are times at which full
    state snapshots are stored (in addition to the final state).  Every
    ``calib_interval`` accepted steps the step size is recalibrated by
    comparing one full step against two half steps.
    """
    basis = op.basis
    if psi0 is None:
        amps = np.zeros(basis.dim, dtype=np.complex128)
        amps[basis.index_of(0)] = 1.0
        psi0 = StateVector(basis, amps)
    psi = psi0.amplitudes.copy()
    T = schedule.total_time

    samples = np.linspace(0.0, T, n_samples)
    events = np.unique(np.concatenate([samples, np.asarray(checkpoints, dtype=float)]))
    if events[0] > 0:
        events = np.concatenate([[0.0], events])

    rvb_amps = rvb.amplitudes if rvb is not None else None
    n_atoms = basis.n_atoms
    rec = {k: [] for k in ("t", "om", "de", "norm", "ov", "dens", "w")}
    snapshots = {}

    def record(t):
        om, de = schedule.omega(t), schedule.delta(t)
        state = StateVector(basis, psi)
        rec["t"].append(t)
        rec["om"].append(om)
        rec["de"].append(de)
        rec["norm"].append(state.norm)
        rec["ov"].append(abs(np.vdot(rvb_amps, psi)) if rvb_amps is not None else np.nan)
        rec["dens"].append(float(np.mean(state.occupation())))
        rec["w"].append(state.sector_weights())

    sample_set = set(np.round(samples, 12))
    t = 0.0
    dt = min(dt_max, 0.02 * T)
    n_steps = 0
    since_calib = calib_interval      # calibrate on the very first step
    ktol = 0.1 * local_tol
    record(0.0)
    for t_event in events[1:]:
        while t < t_event - 1e-12:
            step = min(dt, dt_max, t_event - t)
            full_step = step >= min(dt, dt_max) - 1e-14
            if full_step and since_calib >= calib_interval:
                # step-doubling: accept two half steps, measure against one
                while True:
                    coarse, _ = cf4_step(op, schedule, psi, t, step, ktol, krylov_dim)
                    half, _ = cf4_step(op, schedule, psi, t, 0.5 * step, ktol, krylov_dim)
                    fine, _ = cf4_step(op, schedule, half, t + 0.5 * step,
                                       0.5 * step, ktol, krylov_dim)
                    err = float(np.linalg.norm(coarse - fine))
                    if err <= local_tol or step < 1e-10 * max(T, 1.0):
                        break
                    step *= max(0.3, 0.8 * (local_tol / max(err, 1e-300)) ** 0.2)
                if err > local_tol:
                    raise EvolveError(
                        "step size underflow at t=%.4g (err=%.2e)" % (t, err))
                psi = fine
                grow = 2.0 if err == 0.0 else min(
                    2.0, max(0.3, 0.8 * (local_tol / err) ** 0.2))
                dt = min(step * grow, dt_max)
                since_calib = 0
            else:
                psi, kerr = cf4_step(op, schedule, psi, t, step, ktol, krylov_dim)
                if kerr > local_tol:
                    raise EvolveError(
                        "Krylov residual %.2e beyond tolerance at t=%.4g" % (kerr, t))
                if full_step:
                    since_calib += 1
            t += step
            n_steps += 1
        t = t_event
        if round(t, 12) in sample_set:
            record(t)
        if np.any(np.abs(np.asarray(checkpoints) - t) < 1e-9):
            snapshots[t] = StateVector(basis, psi.copy())

    final = StateVector(basis, psi)
    traj = Trajectory(
        times=np.array(rec["t"]),
        omegas=np.array(rec["om"]),
        deltas=np.array(rec["de"]),
        norms=np.array(rec["norm"]),
        rvb_overlap=np.array(rec["ov"]),
        density=np.array(rec["dens"]),
        sector_weights=np.array(rec["w"]),
        snapshots=snapshots,
        final_state=final,
        n_steps=n_steps,
    )
    if traj.norm_drift > 1e-8:
        raise EvolveError("norm drift %.2e beyond tolerance" % traj.norm_drift)
    return traj


def rk4_evolve(op, schedule, psi0, dt=1e-3):
    """Fixed-step classical 4th-order integrator; cross-check oracle."""
    psi = psi0.amplitudes.astype(np.complex128).copy()
    T = schedule.total_time
    n = int(np.ceil(T / dt))
    h = T / n
    for k in range(n):
        t = k * h

        def f(tt, y):
            om, de = schedule.omega(tt), schedule.delta(tt)
            return -1j * op.apply(y, om, de)

        k1 = f(t, psi)
        k2 = f(t + 0.5 * h, psi + 0.5 * h * k1)
        k3 = f(t + 0.5 * h, psi + 0.5 * h * k2)
        k4 = f(t + h, psi + h * k3)
        psi = psi + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return StateVector(op.basis, psi)


def integrator_crosscheck(op, schedule, psi0=None, dt_rk=1e-3, dt_max=0.5,
                          local_tol=1e-9):
    """Compare the Krylov propagator against the fixed-step oracle."""
    basis = op.basis
    if psi0 is None:
        amps = np.zeros(basis.dim, dtype=np.complex128)
        amps[basis.index_of(0)] = 1.0
        psi0 = StateVector(basis, amps)
    traj = evolve_sweep(op, schedule, psi0=psi0, dt_max=dt_max,
                        local_tol=local_tol, n_samples=2)
    ref = rk4_evolve(op, schedule, psi0, dt=dt_rk)
    dev = float(np.max(np.abs(traj.final_state.amplitudes - ref.amplitudes)))
    return {
        "max_deviation": dev,
        "krylov_steps": traj.n_steps,
        "rk4_steps": int(np.ceil(schedule.total_time / dt_rk)),
        "norm_drift": traj.norm_drift,
    }


def trajectory_to_csv(traj, path):
    n_sect = traj.sector_weights.shape[1]
    header = ["t", "Omega", "Delta", "norm", "rvb_overlap_abs", "density"]
    header += ["w%d" % k for k in range(n_sect)]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for i in range(len(traj.times)):
            row = [traj.times[i], traj.omegas[i], traj.deltas[i], traj.norms[i],
                   traj.rvb_overlap[i], traj.density[i]]
            row += list(traj.sector_weights[i])
            fh.write(",".join("%.17g" % x for x in row) + "\n")


def save_state(path, psi):
    np.savez_compressed(path, configs=psi.basis.configs,
                        n_atoms=psi.basis.n_atoms, radius=psi.basis.radius,
                        amplitudes=psi.amplitudes)


def load_state(path):
    from .hilbert import ConstrainedBasis
    data = np.load(path)
    basis = ConstrainedBasis(n_atoms=int(data["n_atoms"]),
                             configs=data["configs"],
                             radius=float(data["radius"]))
    return StateVector(basis, data["amplitudes"])
