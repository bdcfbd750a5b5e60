"""Hamiltonians over constrained bases and smoothed sweep schedules.

Energies and times are in units of the maximum Rabi frequency, lengths in
units of the minimum inter-atom distance.  The hard-blockade model carries
no diagonal interaction (the constraint lives in the basis); the full model
adds Van-der-Waals tails V/r^6 for pairs beyond the constraint radius up to
a cutoff distance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

SQRT13 = math.sqrt(13.0)
DEFAULT_BLOCKADE_RADIUS = 2.4

PXP = "PXP"
FULL_RYDBERG = "FullRydberg"


class ModelError(ValueError):
    pass


@dataclass
class HamiltonianSpec:
    variant: str = PXP
    constraint_radius: float = 2.0
    blockade_radius: float = DEFAULT_BLOCKADE_RADIUS
    tail_cutoff: float = SQRT13

    def __post_init__(self):
        if self.variant not in (PXP, FULL_RYDBERG):
            raise ModelError("unknown Hamiltonian variant %r" % self.variant)

    @property
    def interaction_strength(self):
        return self.blockade_radius ** 6


def full_rydberg_spec(constraint_radius=1.0, blockade_radius=DEFAULT_BLOCKADE_RADIUS,
                      tail_cutoff=SQRT13):
    return HamiltonianSpec(variant=FULL_RYDBERG, constraint_radius=constraint_radius,
                           blockade_radius=blockade_radius, tail_cutoff=tail_cutoff)


def tail_pairs(cluster, constraint_radius, cutoff):
    """(i, j, V_ij) for pairs with R_c < r <= cutoff, V_ij = R_b^6 / r^6
    left as coefficient of R_b^6 (caller multiplies)."""
    dist = cluster.pair_distances
    pairs = []
    n = cluster.n_atoms
    for i in range(n):
        for j in range(i + 1, n):
            r = dist[i, j]
            if constraint_radius + 1e-9 < r <= cutoff + 1e-9:
                pairs.append((i, j, 1.0 / r**6))
    return pairs


class HamiltonianOperator:
    """H(Omega, Delta) = Omega/2 * X - Delta * n + tails over a fixed basis.

    The single-bit-flip structure X and the diagonal vectors are assembled
    once; apply() is then two vector scalings and one sparse matvec.
    """

    def __init__(self, spec, basis, cluster=None):
        if abs(spec.constraint_radius - basis.radius) > 1e-12:
            raise ModelError(
                "basis constraint radius %.3f does not match spec %.3f"
                % (basis.radius, spec.constraint_radius)
            )
        self.spec = spec
        self.basis = basis
        self.n_diag = basis.popcounts.astype(np.float64)
        self.flip = _flip_matrix(basis)
        if spec.variant == FULL_RYDBERG:
            if cluster is None:
                raise ModelError("full Rydberg model needs the cluster geometry")
            self.tail_diag = diagonal_interaction(
                basis, cluster, spec.constraint_radius, spec.tail_cutoff
            ) * spec.interaction_strength
        else:
            self.tail_diag = np.zeros(basis.dim)

    @property
    def dim(self):
        return self.basis.dim

    def apply(self, psi, omega, delta):
        out = (self.tail_diag - delta * self.n_diag) * psi
        if omega != 0.0:
            out += (0.5 * omega) * (self.flip @ psi)
        return out

    def aslinearoperator(self, omega, delta):
        import scipy.sparse.linalg as spla
        return spla.LinearOperator(
            (self.dim, self.dim),
            matvec=lambda v: self.apply(v, omega, delta),
            dtype=np.complex128,
        )

    def dense(self, omega, delta):
        h = 0.5 * omega * self.flip.toarray()
        h += np.diag(self.tail_diag - delta * self.n_diag)
        return h


def _flip_matrix(basis):
    """Symmetric 0/1 matrix connecting configs that differ by one legal flip."""
    configs = basis.configs
    rows, cols = [], []
    for i in range(basis.n_atoms):
        partner = configs ^ np.uint64(1 << i)
        down = (configs >> np.uint64(i)) & np.uint64(1) == 1
        ok = basis.contains(partner)
        # record only the downward flip; symmetrize below
        sel = down & ok
        rows.append(basis.indices_of(partner[sel]))
        cols.append(np.nonzero(sel)[0])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    data = np.ones(len(rows))
    x = sp.coo_matrix((data, (rows, cols)), shape=(basis.dim, basis.dim))
    x = (x + x.T).tocsr()
    return x


def diagonal_interaction(basis, cluster, constraint_radius, cutoff):
    """Per-config sum over tail pairs of 1/r^6 (coefficient of R_b^6)."""
    configs = basis.configs
    diag = np.zeros(basis.dim)
    for i, j, coeff in tail_pairs(cluster, constraint_radius, cutoff):
        both = ((configs >> np.uint64(i)) & (configs >> np.uint64(j)) & np.uint64(1))
        diag += coeff * both.astype(np.float64)
    return diag


def apply_hamiltonian(op, psi, omega, delta):
    """H psi for a StateVector; see HamiltonianOperator.apply for arrays."""
    from .hilbert import StateVector
    if psi.basis is not op.basis and psi.basis.dim != op.dim:
        raise ModelError("state vector basis does not match operator basis")
    return StateVector(op.basis, op.apply(psi.amplitudes, omega, delta))


# --- sweep schedules -----------------------------------------------------

class _PiecewiseLinear:
    def __init__(self, xs, ys):
        self.xs = np.asarray(xs, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        # exact antiderivative at breakpoints
        seg = np.diff(self.xs) * 0.5 * (self.ys[:-1] + self.ys[1:])
        self.cum = np.concatenate([[0.0], np.cumsum(seg)])

    def __call__(self, x):
        return float(np.interp(x, self.xs, self.ys))

    def integral_to(self, x):
        i = int(np.searchsorted(self.xs, x, side="right") - 1)
        i = min(max(i, 0), len(self.xs) - 2)
        x0, x1 = self.xs[i], self.xs[i + 1]
        y0, y1 = self.ys[i], self.ys[i + 1]
        dx = x - x0
        slope = (y1 - y0) / (x1 - x0)
        return self.cum[i] + y0 * dx + 0.5 * slope * dx * dx

    def smoothed(self, x, half_width):
        if half_width <= 0.0:
            return self(x)
        lo, hi = x - half_width, x + half_width
        return (self.integral_to(hi) - self.integral_to(lo)) / (hi - lo)


@dataclass
class SweepSchedule:
    """Three-stage ramp: switch Omega on, sweep Delta, switch Omega off.

    The piecewise-linear profiles are smoothed by a uniform (moving-average)
    filter whose window shrinks near t = 0 and t = T so that the boundary
    values are exact.
    """

    total_time: float
    t1: float
    t2: float
    t3: float
    delta0: float = -5.0
    delta1: float = 1.5
    smoothing_window: float = None
    _omega: _PiecewiseLinear = field(default=None, repr=False)
    _delta: _PiecewiseLinear = field(default=None, repr=False)

    def __post_init__(self):
        T = self.total_time
        if T <= 0:
            raise ModelError("total time must be positive")
        if abs(self.t1 + self.t2 + self.t3 - T) > 1e-9 * max(T, 1.0):
            raise ModelError("stage durations must sum to the total time")
        if self.smoothing_window is None:
            self.smoothing_window = 0.025 * T
        if self.t3 > 0:
            self._omega = _PiecewiseLinear(
                [0.0, self.t1, self.t1 + self.t2, T], [0.0, 1.0, 1.0, 0.0])
        else:
            self._omega = _PiecewiseLinear(
                [0.0, self.t1, T], [0.0, 1.0, 1.0])
        if self.t3 > 0:
            self._delta = _PiecewiseLinear(
                [0.0, self.t1, self.t1 + self.t2, T],
                [self.delta0, self.delta0, self.delta1, self.delta1])
        else:
            # no hold stage: drop the zero-width final segment, whose
            # undefined slope would poison the smoothing integrals at t = T
            self._delta = _PiecewiseLinear(
                [0.0, self.t1, T], [self.delta0, self.delta0, self.delta1])

    @classmethod
    def default_protocol(cls, total_time, delta0=-5.0, delta1=1.5,
                         smoothing_window=None):
        """T1 = T3 = 0.1 T, T2 = 0.8 T."""
        return cls(total_time, 0.1 * total_time, 0.8 * total_time,
                   0.1 * total_time, delta0, delta1, smoothing_window)

    @classmethod
    def two_stage_protocol(cls, total_time, delta0=-5.0, delta1=3.5,
                           smoothing_window=None):
        """No switch-off stage: Delta keeps ramping until the end (T3 = 0)."""
        return cls(total_time, 0.1 * total_time, 0.9 * total_time, 0.0,
                   delta0, delta1, smoothing_window)

    def _half_width(self, t):
        return min(0.5 * self.smoothing_window, t, self.total_time - t)

    def omega(self, t):
        self._check(t)
        return self._omega.smoothed(t, self._half_width(t))

    def delta(self, t):
        self._check(t)
        return self._delta.smoothed(t, self._half_width(t))

    def _check(self, t):
        if t < -1e-12 or t > self.total_time + 1e-12:
            raise ModelError("time %.6g outside [0, %.6g]" % (t, self.total_time))

    def time_at_detuning_ratio(self, ratio):
        """First time with Delta(t)/Omega(t) = ratio during the main sweep."""
        from scipy.optimize import brentq
        f = lambda t: self.delta(t) - ratio * self.omega(t)
        lo, hi = self.t1, self.t1 + self.t2
        if f(lo) > 0 or f(hi) < 0:
            raise ModelError("detuning ratio %.3f not reached in stage 2" % ratio)
        return brentq(f, lo, hi, xtol=1e-12 * self.total_time)

    def to_dict(self):
        return {
            "total_time": self.total_time,
            "t1": self.t1, "t2": self.t2, "t3": self.t3,
            "delta0": self.delta0, "delta1": self.delta1,
            "smoothing_window": self.smoothing_window,
        }


def schedule_eval(schedule, t):
    """(Omega, Delta) at time t."""
    return schedule.omega(t), schedule.delta(t)
