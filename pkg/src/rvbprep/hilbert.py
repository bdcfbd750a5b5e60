"""Blockade-constrained configuration bases and dimer-cover states.

Configurations are stored as unsigned 64-bit words, bit i = excitation of
atom i, kept sorted ascending so that index recovery is a binary search and
exported artifacts are stable.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"RVBB"
BINARY_VERSION = 1

DEFAULT_BUDGET_GIB = 8.0


class CapacityError(MemoryError):
    pass


class BasisError(ValueError):
    pass


@dataclass
class ConstrainedBasis:
    n_atoms: int
    configs: np.ndarray               # sorted uint64
    radius: float = 0.0               # constraint radius used (0 = none)
    _popcounts: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.configs = np.ascontiguousarray(self.configs, dtype=np.uint64)

    @property
    def dim(self):
        return len(self.configs)

    @property
    def popcounts(self):
        if self._popcounts is None:
            self._popcounts = np.bitwise_count(self.configs).astype(np.int64)
        return self._popcounts

    def index_of(self, config):
        idx = int(np.searchsorted(self.configs, np.uint64(config)))
        if idx >= self.dim or self.configs[idx] != np.uint64(config):
            raise BasisError("configuration %d not in basis" % config)
        return idx

    def indices_of(self, configs):
        configs = np.asarray(configs, dtype=np.uint64)
        idx = np.searchsorted(self.configs, configs)
        if np.any(idx >= self.dim) or np.any(self.configs[idx % self.dim] != configs):
            raise BasisError("some configurations not in basis")
        return idx

    def contains(self, configs):
        configs = np.asarray(configs, dtype=np.uint64)
        idx = np.searchsorted(self.configs, configs)
        idx = np.minimum(idx, self.dim - 1)
        return self.configs[idx] == configs


@dataclass
class StateVector:
    basis: ConstrainedBasis
    amplitudes: np.ndarray

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if len(self.amplitudes) != self.basis.dim:
            raise BasisError("amplitude length does not match basis dimension")

    @property
    def norm(self):
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self):
        return StateVector(self.basis, self.amplitudes / self.norm)

    def occupation(self):
        """Per-atom density <n_i>."""
        w = np.abs(self.amplitudes) ** 2
        dens = np.empty(self.basis.n_atoms)
        for i in range(self.basis.n_atoms):
            bits = (self.configs_shifted(i) & np.uint64(1)).astype(np.float64)
            dens[i] = float(bits @ w)
        return dens

    def configs_shifted(self, i):
        return self.basis.configs >> np.uint64(i)

    def sector_weights(self):
        """Probability per excitation-number sector, index = excitation count."""
        w = np.abs(self.amplitudes) ** 2
        return np.bincount(self.basis.popcounts, weights=w,
                           minlength=self.basis.n_atoms + 1)


@dataclass
class DimerCoverSet:
    n_atoms: int
    covers: np.ndarray                # sorted uint64

    def __post_init__(self):
        self.covers = np.ascontiguousarray(self.covers, dtype=np.uint64)

    @property
    def count(self):
        return len(self.covers)


def enumerate_basis(graph, budget_gib=DEFAULT_BUDGET_GIB):
    """All independent sets of the constraint graph, ascending as integers.

    Incremental construction over atoms: every independent set either omits
    atom k or adds it to an independent set of the earlier atoms compatible
    with atom k's blocked mask.
    """
    n = graph.n_atoms
    if n > 64:
        raise BasisError("more than 64 atoms not supported")
    masks = graph.blocked_masks()
    lower_masks = [np.uint64(masks[k] & ((1 << k) - 1)) for k in range(n)]
    configs = np.zeros(1, dtype=np.uint64)
    budget_words = int(budget_gib * 2**30) // 8
    for k in range(n):
        ok = (configs & lower_masks[k]) == 0
        add = configs[ok] | np.uint64(1 << k)
        if len(configs) + len(add) > budget_words:
            raise CapacityError(
                "constrained basis exceeds memory budget of %.1f GiB" % budget_gib
            )
        configs = np.concatenate([configs, add])
    configs.sort()
    return ConstrainedBasis(n_atoms=n, configs=configs, radius=graph.radius)


def full_basis(n_atoms):
    """The unconstrained 2^N basis."""
    if n_atoms > 26:
        raise CapacityError("full basis beyond 2^26 not supported")
    return ConstrainedBasis(n_atoms=n_atoms,
                            configs=np.arange(1 << n_atoms, dtype=np.uint64))


def enumerate_maximal_covers(cluster):
    """Configurations covering every kagome vertex exactly once.

    Exact-cover backtracking over vertices, branching on the vertex with the
    fewest remaining candidate atoms.  Returns an empty set when the cluster
    admits no perfect matching (odd vertex count).
    """
    nv = cluster.n_vertices
    incidence = cluster.vertex_incidence
    atom_vertices = {}
    for v, atoms in incidence.items():
        for a in atoms:
            atom_vertices.setdefault(a, []).append(v)

    covers = []
    covered = [False] * nv
    forbidden = [0] * cluster.n_atoms   # nesting depth markers

    def candidates(v):
        return [a for a in incidence[v] if not forbidden[a]]

    def search(config, depth):
        open_vs = [v for v in range(nv) if not covered[v]]
        if not open_vs:
            covers.append(config)
            return
        v = min(open_vs, key=lambda u: len(candidates(u)))
        for a in candidates(v):
            vs = atom_vertices[a]
            if any(covered[u] for u in vs):
                continue
            touched = []
            for u in vs:
                covered[u] = True
                for b in incidence[u]:
                    if not forbidden[b]:
                        forbidden[b] = depth
                        touched.append(b)
            search(config | (1 << a), depth + 1)
            for u in vs:
                covered[u] = False
            for b in touched:
                forbidden[b] = 0

    search(0, 1)
    covers = np.array(sorted(covers), dtype=np.uint64)
    return DimerCoverSet(n_atoms=cluster.n_atoms, covers=covers)


def rvb_state(covers, basis):
    """Equal-weight superposition of all maximal dimer coverings."""
    if covers.count == 0:
        raise BasisError("cover set is empty; no RVB state exists")
    idx = basis.indices_of(covers.covers)   # raises if a cover is missing
    amps = np.zeros(basis.dim, dtype=np.complex128)
    amps[idx] = 1.0 / np.sqrt(covers.count)
    return StateVector(basis, amps)


def project_to_subspace(psi, target):
    """Project onto a sub-basis and renormalize.

    Returns (projected_state, weight) with weight the squared norm of the
    retained component before renormalization.
    """
    source = psi.basis
    pos = np.searchsorted(source.configs, target.configs)
    if np.any(pos >= source.dim) or np.any(source.configs[np.minimum(pos, source.dim - 1)] != target.configs):
        raise BasisError("target basis is not a subspace of the state's basis")
    amps = psi.amplitudes[pos]
    weight = float(np.vdot(amps, amps).real)
    if weight < 1e-14:
        raise BasisError("state has no weight in the target subspace")
    return StateVector(target, amps / np.sqrt(weight)), weight


def abs_state(psi):
    """Replace amplitudes by their moduli (defensively renormalized)."""
    amps = np.abs(psi.amplitudes).astype(np.complex128)
    return StateVector(psi.basis, amps / np.linalg.norm(amps))


# --- binary export -------------------------------------------------------

def save_words(path, n_atoms, words):
    words = np.ascontiguousarray(words, dtype="<u8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", BINARY_VERSION, n_atoms))
        fh.write(struct.pack("<Q", len(words)))
        fh.write(words.tobytes())


def load_words(path):
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise BasisError("not a basis/cover file")
        version, n_atoms = struct.unpack("<II", fh.read(8))
        if version != BINARY_VERSION:
            raise BasisError("unsupported binary version %d" % version)
        (count,) = struct.unpack("<Q", fh.read(8))
        words = np.frombuffer(fh.read(count * 8), dtype="<u8")
    return n_atoms, words.astype(np.uint64)


def save_basis(path, basis):
    save_words(path, basis.n_atoms, basis.configs)


def load_basis(path, radius=0.0):
    n_atoms, words = load_words(path)
    return ConstrainedBasis(n_atoms=n_atoms, configs=words, radius=radius)


def save_covers(path, covers):
    save_words(path, covers.n_atoms, covers.covers)


def load_covers(path):
    n_atoms, words = load_words(path)
    return DimerCoverSet(n_atoms=n_atoms, covers=words)
