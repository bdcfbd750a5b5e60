"""Ground states and fidelity-susceptibility scans of the blockade model.

The scan fixes Omega = 1 and varies Delta, reporting lambda = Omega/Delta;
the susceptibility F(lambda) = (1 - |<GS(lambda)|GS(lambda+dlambda)>|) / dlambda
peaks at phase boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse.linalg as spla

DEGENERACY_GAP = 1e-8
DENSE_CUTOFF = 600


class SpectrumError(RuntimeError):
    pass


@dataclass
class GroundstateResult:
    energy: float
    state: "StateVector"
    gap: float
    degenerate: bool
    residual: float
    degeneracy: int = 1


@dataclass
class GroundstateScan:
    lambdas: np.ndarray
    energies: np.ndarray
    gaps: np.ndarray
    rvb_overlaps: np.ndarray
    susceptibilities: np.ndarray
    degenerate: np.ndarray
    states: list = field(default_factory=list, repr=False)


def _fix_phase(vec):
    k = int(np.argmax(np.abs(vec)))
    phase = vec[k] / abs(vec[k])
    return vec / phase


def groundstate(op, omega, delta, tol=1e-10, max_iter=20000, v0=None):
    """Lowest eigenpair of H(omega, delta) with the first gap.

    Diagonal Hamiltonians (omega = 0) are solved exactly; small dimensions
    use dense diagonalization; otherwise restarted Lanczos (ARPACK) with an
    explicit residual check.
    """
    from .hilbert import StateVector

    dim = op.dim
    if omega == 0.0:
        diag = op.tail_diag - delta * op.n_diag
        order = np.argsort(diag, kind="stable")
        e0 = float(diag[order[0]])
        mult = int(np.sum(diag <= e0 + DEGENERACY_GAP))
        above = diag[diag > e0 + DEGENERACY_GAP]
        gap = float(np.min(above) - e0) if len(above) else np.inf
        amps = np.zeros(dim, dtype=np.complex128)
        amps[order[0]] = 1.0
        return GroundstateResult(e0, StateVector(op.basis, amps), gap,
                                 mult > 1, 0.0, mult)

    if dim <= DENSE_CUTOFF:
        evals, evecs = np.linalg.eigh(op.dense(omega, delta))
        vec = _fix_phase(evecs[:, 0].astype(np.complex128))
        e0 = float(evals[0])
        gap = float(evals[1] - evals[0]) if dim > 1 else np.inf
    else:
        lin = op.aslinearoperator(omega, delta)
        if v0 is not None:
            v0 = np.asarray(v0).real.astype(np.float64)
        evals, evecs = spla.eigsh(lin, k=2, which="SA", tol=tol,
                                  maxiter=max_iter, v0=v0)
        order = np.argsort(evals)
        e0 = float(evals[order[0]])
        gap = float(evals[order[1]] - e0)
        vec = _fix_phase(evecs[:, order[0]].astype(np.complex128))

    res = float(np.linalg.norm(op.apply(vec, omega, delta) - e0 * vec))
    if res > max(tol, 1e-9) * max(1.0, abs(e0)):
        raise SpectrumError(
            "groundstate residual %.2e did not reach tolerance" % res)
    mult = 2 if gap < DEGENERACY_GAP else 1
    return GroundstateResult(e0, StateVector(op.basis, vec), gap,
                             gap < DEGENERACY_GAP, res, mult)


def fidelity_susceptibility_scan(op, lambdas, dlambda=0.0025, rvb=None,
                                 tol=1e-10, keep_states=False, progress=None):
    """F(lambda) over a sorted lambda grid at fixed Omega = 1.

    Degenerate grid points are flagged and their F left as NaN rather than
    averaged over the manifold.  Consecutive solves are warm-started.
    """
    lambdas = np.asarray(lambdas, dtype=float)
    if np.any(np.diff(lambdas) <= 0):
        raise SpectrumError("lambda grid must be strictly increasing")
    if dlambda <= 0:
        raise SpectrumError("dlambda must be positive")

    n = len(lambdas)
    energies = np.empty(n)
    gaps = np.empty(n)
    overlaps = np.full(n, np.nan)
    sus = np.full(n, np.nan)
    degen = np.zeros(n, dtype=bool)
    states = []
    rvb_amps = rvb.amplitudes if rvb is not None else None

    v0 = None
    for i, lam in enumerate(lambdas):
        gs = groundstate(op, 1.0, 1.0 / lam, tol=tol, v0=v0)
        v0 = gs.state.amplitudes
        gs2 = groundstate(op, 1.0, 1.0 / (lam + dlambda), tol=tol, v0=v0)
        energies[i] = gs.energy
        gaps[i] = gs.gap
        degen[i] = gs.degenerate or gs2.degenerate
        if not degen[i]:
            ov = abs(np.vdot(gs.state.amplitudes, gs2.state.amplitudes))
            sus[i] = (1.0 - min(ov, 1.0)) / dlambda
        if rvb_amps is not None:
            overlaps[i] = abs(np.vdot(rvb_amps, gs.state.amplitudes))
        if keep_states:
            states.append(gs.state)
        if progress is not None:
            progress(i, lam)
    return GroundstateScan(lambdas, energies, gaps, overlaps, sus, degen, states)


def scan_to_csv(scan, path):
    with open(path, "w") as fh:
        fh.write("lambda,energy,gap,rvb_overlap,fidelity_susceptibility\n")
        for i in range(len(scan.lambdas)):
            fh.write(",".join("%.17g" % x for x in (
                scan.lambdas[i], scan.energies[i], scan.gaps[i],
                scan.rvb_overlaps[i], scan.susceptibilities[i])) + "\n")


def interior_peaks(values):
    """Indices of strict interior local maxima of a 1-D array (NaN-safe)."""
    v = np.asarray(values, dtype=float)
    peaks = []
    for i in range(1, len(v) - 1):
        if np.isnan(v[i - 1]) or np.isnan(v[i]) or np.isnan(v[i + 1]):
            continue
        if v[i] > v[i - 1] and v[i] > v[i + 1]:
            peaks.append(i)
    return peaks
