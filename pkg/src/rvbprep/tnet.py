"""Tensor-network form of the dimer-monomer ansatz and cylinder contraction.

Kagome triangles form a honeycomb lattice whose edges are the kagome
vertices.  Each triangle carries a tensor with one virtual leg per vertex;
the leg is a pair (dimer bit, occupation bit): the dimer bit says whether
the triangle's dimer covers that vertex, the occupation bit whether the
triangle's physical excitation does.  Edge matrices enforce exactly-one
dimer per vertex and, for the projected variant, at-most-one excitation.

An up triangle and the down triangle below-left of it fuse into a block
with one virtual bond in each square-lattice direction, so a cylinder of
circumference L contracts through a transfer matrix on an 8^L-dimensional
bond space (4^L unprojected): the double layer needs a single occupation
layer because the occupation legs of bra and ket coincide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import triangle_vertices

# side j of a triangle joins vertex slots SIDES[j]
SIDES = ({0, 1}, {0, 2}, {1, 2})

XOR = np.array([[0.0, 1.0], [1.0, 0.0]])          # exactly one dimer
ATMOST = np.array([[1.0, 1.0], [1.0, 0.0]])       # at most one excitation
ENDCAP = np.array([[1.0, 0.0], [1.0, 0.0]])       # open-string endpoint:
# rows = string triangle (either), cols = plain neighbor (must be empty)

DEFAULT_TOL = 1e-10
POWER_MAX_ITER = 200000


class TnetError(RuntimeError):
    pass


def site_matrix(z1, z2):
    """Per-atom map (1 + z2 s+)(1 + z1 s-) in the (g, r) basis."""
    return np.array([[1.0, z1], [z2, 1.0 + z1 * z2]], dtype=complex)


@dataclass
class SiteTensors:
    z1: complex
    z2: complex
    projected: bool
    vertex_tensor: np.ndarray        # (2,2,2,2) over the 4 incident atoms
    projector_map: np.ndarray        # (4, 2, 2, 2): triangle state -> occ legs
    z_ops: dict                      # per-atom 2x2 maps carrying z1, z2
    combined_tensor: np.ndarray      # (4, 4, 4, 4): state x three dim-4 legs


def _triangle_states(projected):
    """Triangle configurations as slot-coverage tuples.

    State 0 is the empty triangle; states 1..3 excite side j = state - 1.
    The unprojected variant appends the multi-excitation configurations.
    """
    states = [(0, 0, 0)]
    for j in range(3):
        states.append(tuple(1 if s in SIDES[j] else 0 for s in range(3)))
    if not projected:
        for bits in range(8):
            occ = [(bits >> j) & 1 for j in range(3)]
            if sum(occ) >= 2:
                states.append(tuple(occ))
    return states


def _state_weight(m, occ_c, occ_d):
    """Product over the 3 atoms of M[c_j, d_j] for side-occupation tuples."""
    w = 1.0 + 0j
    for j in range(3):
        w *= m[occ_c[j], occ_d[j]]
    return w


def _occ_bits(state_idx, projected):
    """Per-side excitation bits of a triangle state index."""
    if state_idx == 0:
        return (0, 0, 0)
    if projected or state_idx <= 3:
        return tuple(1 if state_idx - 1 == j else 0 for j in range(3))
    raise TnetError("invalid triangle state")


def _side_coverage(state_idx):
    """Slot-coverage tuple of a projected triangle state."""
    if state_idx == 0:
        return (0, 0, 0)
    j = state_idx - 1
    return tuple(1 if s in SIDES[j] else 0 for s in range(3))


def single_triangle_tensor(z1, z2, projected=True):
    """Ket-layer tensor T[c, leg0, leg1, leg2].

    Projected: c in 0..3, legs dim 4 encoding (dimer, occupation) as 2*a+alpha.
    Unprojected: c in 0..7 (occupation bits of the 3 sides), legs dim 2.
    """
    m = site_matrix(z1, z2)
    if projected:
        t = np.zeros((4, 4, 4, 4), dtype=complex)
        for c in range(4):
            alpha = _side_coverage(c)
            occ_c = _occ_bits(c, True)
            for d in range(4):
                a = _side_coverage(d)
                w = _state_weight(m, occ_c, _occ_bits(d, True))
                legs = tuple(2 * a[s] + alpha[s] for s in range(3))
                t[(c,) + legs] += w
        return t
    t = np.zeros((8, 2, 2, 2), dtype=complex)
    for cbits in range(8):
        occ_c = tuple((cbits >> j) & 1 for j in range(3))
        for d in range(4):
            a = _side_coverage(d)
            # coverage of the physical sides at each slot (for bookkeeping
            # only; unprojected legs carry just the dimer bit)
            w = _state_weight(m, occ_c, _occ_bits(d, True))
            t[(cbits,) + tuple(a)] += w
    return t


def build_site_tensors(z1, z2, projected=True):
    """Explicit tensors of the network at one (z1, z2)."""
    vt = np.zeros((2, 2, 2, 2))
    for bits in range(16):
        occ = [(bits >> i) & 1 for i in range(4)]
        if sum(occ) == 1 or (projected and sum(occ) == 0):
            vt[tuple(occ)] = 1.0
    pm = np.zeros((4, 2, 2, 2))
    for c in range(4):
        pm[(c,) + _side_coverage(c)] = 1.0
    combined = single_triangle_tensor(z1, z2, projected=True)
    return SiteTensors(z1=complex(z1), z2=complex(z2), projected=projected,
                       vertex_tensor=vt, projector_map=pm,
                       z_ops={"site": site_matrix(z1, z2)},
                       combined_tensor=combined)


# --- double-layer tensors -------------------------------------------------

def double_triangle_tensor(z1, z2, projected=True, mod=None):
    """Bra-ket contracted tensor D[leg0, leg1, leg2].

    Legs have dim 8 (projected; index 4a + 2b + alpha with a = ket dimer,
    b = bra dimer, alpha = occupation) or 4 (unprojected; 2a + b).

    mod is None or one of ('density', j), ('zstring', j), ('xstring', j)
    with j the local side index 0..2.
    """
    m = site_matrix(z1, z2)
    kind, j = mod if mod is not None else (None, None)
    if projected:
        D = np.zeros((8, 8, 8), dtype=complex)
        cs = range(4)
        if kind == "xstring":
            cs = (0, j + 1)
        for c in cs:
            occ_c = _occ_bits(c, True)
            if kind == "xstring":
                cb = (j + 1) if c == 0 else 0
            else:
                cb = c
            occ_cb = _occ_bits(cb, True)
            alpha = _side_coverage(c)
            weight = 1.0
            if kind == "density":
                weight = float(sum(occ_c)) if j is None else float(occ_c[j])
            elif kind == "zstring":
                weight = 1.0 - 2.0 * occ_c[j]
            if weight == 0.0:
                continue
            for d in range(4):
                wk = _state_weight(m, occ_c, _occ_bits(d, True))
                if wk == 0.0:
                    continue
                a = _side_coverage(d)
                for dp in range(4):
                    wb = np.conj(_state_weight(m, occ_cb, _occ_bits(dp, True)))
                    if wb == 0.0:
                        continue
                    b = _side_coverage(dp)
                    legs = tuple(4 * a[s] + 2 * b[s] + alpha[s] for s in range(3))
                    D[legs] += weight * wk * wb
    else:
        D = np.zeros((4, 4, 4), dtype=complex)
        if kind == "xstring":
            raise TnetError("off-diagonal strings require the projected variant")
        for cbits in range(8):
            occ_c = tuple((cbits >> jj) & 1 for jj in range(3))
            weight = 1.0
            if kind == "density":
                weight = float(sum(occ_c)) if j is None else float(occ_c[j])
            elif kind == "zstring":
                weight = 1.0 - 2.0 * occ_c[j]
            if weight == 0.0:
                continue
            for d in range(4):
                wk = _state_weight(m, occ_c, _occ_bits(d, True))
                a = _side_coverage(d)
                for dp in range(4):
                    wb = np.conj(_state_weight(m, occ_c, _occ_bits(dp, True)))
                    b = _side_coverage(dp)
                    legs = tuple(2 * a[s] + b[s] for s in range(3))
                    D[legs] += weight * wk * wb
    if np.max(np.abs(D.imag)) < 1e-300:
        D = D.real
    return D


def double_edge_matrix(projected=True, occ_block="atmost", transpose_occ=False):
    """Edge matrix between the double-layer legs of two triangles.

    occ_block selects the occupation-layer factor: 'atmost' (plain),
    'xor' (interior of an off-diagonal string), 'endcap' (string end;
    rows = string triangle unless transpose_occ).
    """
    blocks = {"atmost": ATMOST, "xor": XOR, "endcap": ENDCAP}
    if not projected:
        return np.kron(XOR, XOR)
    occ = blocks[occ_block]
    if transpose_occ:
        occ = occ.T
    return np.kron(np.kron(XOR, XOR), occ)


# --- blocks and row transfer matrices ------------------------------------

@dataclass
class RowMods:
    """Modifications of one transfer row for operator insertions.

    Keys of the dicts are the block index n (0..L-1).  Edge override values
    are full edge matrices.
    """
    up: dict = field(default_factory=dict)      # n -> triangle mod tuple
    down: dict = field(default_factory=dict)    # n -> triangle mod tuple
    e_v0: dict = field(default_factory=dict)    # internal edge of block n
    e_h: dict = field(default_factory=dict)     # bond between blocks n, n+1
    e_v2: dict = field(default_factory=dict)    # lower vertical bond of block n


def _block_tensor(up_t, down_t, e_v0, e_v2):
    """B[l, r, d, u] for one block.

    up legs: (v0 internal, v1 right, v2 up); down legs: (v1 left,
    v0 internal, v2 down).  The lower vertical bond matrix e_v2 (oriented
    [lower up-triangle, this down-triangle]) is absorbed into the d leg.
    """
    # down_t[l, x, draw], e_v0[x, y] ([down side, up side]), up_t[y, r, u]
    core = np.einsum("lxd,xy,yru->lrdu", down_t, e_v0, up_t)
    return np.einsum("lrdu,ed->lreu", core, e_v2)


def _row_blocks(z1, z2, L, projected, mods=None):
    mods = mods or RowMods()
    plain = double_triangle_tensor(z1, z2, projected)
    e_plain = double_edge_matrix(projected)
    blocks = []
    for n in range(L):
        up_t = plain if n not in mods.up else double_triangle_tensor(
            z1, z2, projected, mods.up[n])
        down_t = plain if n not in mods.down else double_triangle_tensor(
            z1, z2, projected, mods.down[n])
        e_v0 = mods.e_v0.get(n, e_plain)
        e_v2 = mods.e_v2.get(n, e_plain)
        blocks.append(_block_tensor(up_t, down_t, e_v0, e_v2))
    e_hs = [mods.e_h.get(n, e_plain) for n in range(L)]
    return blocks, e_hs


def _row_chains(z1, z2, L, projected=True, mods=None):
    """Per-site tensors C_n[l, k, u, d] of the row, horizontal bond absorbed."""
    blocks, e_hs = _row_blocks(z1, z2, L, projected, mods)
    chains = []
    for n in range(L):
        C = np.einsum("lrdu,rk->lkud", blocks[n], e_hs[n])
        if np.iscomplexobj(C) and np.max(np.abs(C.imag)) < 1e-300:
            C = np.ascontiguousarray(C.real)
        chains.append(C)
    return chains


class RowOperator:
    """Matrix-free application of one cylinder row to a bond-space vector.

    The row is a ring of L four-leg tensors C[l, k, u, d]; applying it
    keeps the ring-closing horizontal index open (an extra factor D) and
    performs one (D*D x D*D) matrix product per site.
    """

    def __init__(self, chains):
        self.L = len(chains)
        self.D = chains[0].shape[0]
        D = self.D
        self._chains = [np.asarray(c) for c in chains]
        # W0[(l0, u0, l1), d0]; later sites split by SVD across the
        # (l, d) | (k, u) cut, whose rank stays at the bond dimension
        self.w0 = np.ascontiguousarray(
            chains[0].transpose(0, 2, 1, 3).reshape(D * D * D, D))
        self.factors = []
        for c in chains[1:]:
            m = c.transpose(0, 3, 1, 2).reshape(D * D, D * D)   # (l,d) x (k,u)
            u, s, vt = np.linalg.svd(m, full_matrices=False)
            r = max(1, int(np.sum(s > s[0] * 1e-13)))
            a = np.ascontiguousarray(u[:, :r] * s[:r])
            # reorder the right factor columns to (u, k) so the finished
            # physical leg folds into the batch axes by a plain reshape
            b = np.ascontiguousarray(
                vt[:r].reshape(r, D, D).transpose(0, 2, 1).reshape(r, D * D))
            self.factors.append((a, b))
        self.dim = D ** self.L
        self.dtype = np.result_type(*[c.dtype for c in chains])

    _scratch = {}

    @staticmethod
    def _buffers(size, dtype):
        """Four reusable flat work arrays shared across operators."""
        key = (size, np.dtype(dtype).str)
        bufs = RowOperator._scratch.get(key)
        if bufs is None:
            if len(RowOperator._scratch) >= 4:
                RowOperator._scratch.clear()
            bufs = tuple(np.empty(size, dtype=dtype) for _ in range(4))
            RowOperator._scratch[key] = bufs
        return bufs

    def apply(self, v):
        D, L = self.D, self.L
        v = np.asarray(v)
        size = self.dim * D * D
        dtype = np.result_type(self.dtype, v.dtype)
        flip, flop, mid, aux = self._buffers(size, dtype)
        out = flip[:size].reshape(D * D * D, -1)
        np.matmul(self.w0, v.reshape(D, -1), out=out)   # ((l0,u0,l1), d1..)
        cur, nxt_buf = flip, flop
        for j in range(1, L):
            a, b = self.factors[j - 1]
            r = a.shape[1]
            rest = D ** (L - 1 - j)
            batch = size // (D * D * rest)
            out = out.reshape(batch, D * D, rest)       # middle = (l_j, d_j)
            nxt = nxt_buf[:size].reshape(batch, D * D, rest)
            if rest >= batch:
                tmp = mid[:batch * r * rest].reshape(batch, r, rest)
                np.matmul(a.T, out, out=tmp)
                np.matmul(b.T, tmp, out=nxt)            # middle = (u_j, k)
            else:
                # bring the middle axis last so both products are plain
                # GEMMs, then restore the axis order into the target buffer
                tmp = mid[:size].reshape(batch, rest, D * D)
                np.copyto(tmp, np.swapaxes(out, 1, 2))
                g1 = aux[:batch * rest * r].reshape(-1, r)
                np.matmul(tmp.reshape(-1, D * D), a, out=g1)
                g2 = cur[:size].reshape(-1, D * D)      # old input, now free
                np.matmul(g1, b, out=g2)
                np.copyto(nxt, np.swapaxes(
                    g2.reshape(batch, rest, D * D), 1, 2))
            out = nxt
            cur, nxt_buf = nxt_buf, cur
        # axes now (l0, u_0..u_{L-1}, ring index); trace the ring closed
        out = out.reshape(D, -1, D)
        return np.array(out.diagonal(axis1=0, axis2=2).sum(axis=-1).ravel())

    def transpose_operator(self):
        """RowOperator of the transposed matrix (u and d legs swapped)."""
        chains = [c.transpose(0, 1, 3, 2) for c in self._chains]
        return RowOperator(chains)

    def _chain(self, j):
        return self._chains[j]

    def dense(self):
        """Explicit matrix (up index x down index); small L only."""
        if self.dim > 8192:
            raise TnetError("dense transfer matrix beyond dim 8192")
        mat = np.empty((self.dim, self.dim), dtype=self.dtype)
        e = np.zeros(self.dim, dtype=self.dtype)
        for i in range(self.dim):
            e[i] = 1.0
            mat[:, i] = self.apply(e)
            e[i] = 0.0
        return mat


@dataclass
class CylinderTransferMatrix:
    z1: float
    z2: float
    circumference: int
    projected: bool
    op: RowOperator = field(repr=False)

    @property
    def bond_dim(self):
        return 8 if self.projected else 4

    @property
    def dim(self):
        return self.op.dim

    def modified(self, mods):
        return RowOperator(_row_chains(self.z1, self.z2, self.circumference,
                                       self.projected, mods))

    def dense_matrix(self):
        return self.op.dense()


def cylinder_transfer(z1, z2, L, projected=True):
    if L > 8:
        raise TnetError("circumference beyond 8 not supported")
    return CylinderTransferMatrix(
        z1=float(z1), z2=float(z2), circumference=L, projected=projected,
        op=RowOperator(_row_chains(z1, z2, L, projected)))


# --- dominant eigenpairs --------------------------------------------------

def parity_signs(projected, L):
    """(-1)^(dimer-bit ring sum) of the ket and bra layers on the bond space.

    The transfer matrix conserves both parities for even L; each horizontal
    exactly-one bond flips the ring parity once, so for odd L the parity
    alternates row by row and no sector decomposition of a single row exists.
    Topologically degenerate points split into near-degenerate dominant
    eigenvalues across sectors; boundary fixed points are therefore computed
    inside the identity sector (both parities even).
    """
    if projected:
        leg = np.arange(8)
        ak, ab = (leg >> 2) & 1, (leg >> 1) & 1
    else:
        leg = np.arange(4)
        ak, ab = (leg >> 1) & 1, leg & 1
    sk = np.ones(1)
    sb = np.ones(1)
    for _ in range(L):
        sk = np.kron(sk, (-1.0) ** ak)
        sb = np.kron(sb, (-1.0) ** ab)
    return sk, sb


@dataclass
class Boundaries:
    lam0: float
    lam1_abs: float
    left: np.ndarray
    right: np.ndarray
    iterations: int
    residual: float

    @property
    def gap_ratio(self):
        return self.lam1_abs / self.lam0 if self.lam0 > 0 else np.nan


def _power_iterate(matvec, dim, tol, rng, x0=None, mask=None):
    if x0 is None:
        x = np.abs(rng.standard_normal(dim)) + 1e-3
    else:
        x = np.asarray(x0, dtype=float).copy()
    if mask is not None:
        x = x * mask
    x /= np.linalg.norm(x)
    res = np.inf
    for it in range(1, POWER_MAX_ITER + 1):
        y = matvec(x)
        lam = float(x @ y)
        res = float(np.linalg.norm(y - lam * x))
        nrm = np.linalg.norm(y)
        if nrm == 0.0:
            return 0.0, x, it, 0.0
        x = y / nrm
        if res <= tol * max(abs(lam), 1e-300):
            return lam, x, it, res
    raise TnetError(
        "power iteration did not converge (last residual %.2e); "
        "dominant eigenvalues may be degenerate" % res)


def _arpack_dominant(matvec, dim, tol, v0=None):
    import scipy.sparse.linalg as spla
    lin = spla.LinearOperator((dim, dim), matvec=matvec, dtype=np.float64)
    vals, vecs = spla.eigs(lin, k=1, which="LM", tol=0.01 * tol, v0=v0,
                           maxiter=10000)
    lam = vals[0]
    vec = vecs[:, 0]
    if abs(lam.imag) > tol * abs(lam) or np.max(np.abs(vec.imag)) > 1e-6:
        raise TnetError("dominant eigenpair is not real")
    vec = vec.real
    if vec.sum() < 0:
        vec = -vec
    vec /= np.linalg.norm(vec)
    return float(lam.real), vec


def _growth_rate(matvec, scale, dim, rng, deflate=None, n_iter=300):
    """Average growth rate of a (possibly deflated) power iteration.

    Needs no convergence of the vector itself, so it also handles negative
    or complex-pair subdominant eigenvalues; returns the magnitude.
    """
    x = rng.standard_normal(dim)
    if deflate is not None:
        x = deflate(x)
    nrm = np.linalg.norm(x)
    if nrm == 0:
        return 0.0
    x /= nrm
    log_acc = 0.0
    count = 0
    for it in range(n_iter):
        y = matvec(x)
        if deflate is not None:
            y = deflate(y)
        nrm = np.linalg.norm(y)
        if nrm <= 1e-280 * scale:
            return 0.0
        x = y / nrm
        if it >= 50:            # discard transient
            log_acc += math.log(nrm)
            count += 1
    return math.exp(log_acc / count) if count else 0.0


def dominant_eigenpair(tm, tol=DEFAULT_TOL, seed=7, method="auto",
                       right0=None, left0=None, compute_lam1=True):
    """(lambda0, |lambda1|, left/right boundary vectors), <l|r> = 1.

    The fixed point is computed inside the identity parity sector (see
    parity_signs); lambda1 is the largest subdominant magnitude over all
    four sectors.  method: 'power' for plain power iteration, 'auto' to try
    a restarted Arnoldi accelerator first (result verified against the same
    residual tolerance, with power-iteration fallback).
    """
    if tm.circumference % 2:
        raise TnetError(
            "odd circumference alternates the dimer-ring parity; "
            "boundary fixed points need an even circumference")
    op = tm.op
    opT = op.transpose_operator()
    dim = op.dim
    rng = np.random.default_rng(seed)
    sk, sb = parity_signs(tm.projected, tm.circumference)
    m_id = ((sk > 0) & (sb > 0)).astype(float)

    def solve(base_apply, x0):
        def matvec(v):
            return base_apply(v) * m_id
        if x0 is not None:
            x0 = np.asarray(x0) * m_id
        if method == "auto" and dim >= 4096 and x0 is None:
            try:
                lam, vec = _arpack_dominant(matvec, dim, tol, v0=x0)
                res = float(np.linalg.norm(matvec(vec) - lam * vec))
                if res <= tol * max(abs(lam), 1e-300):
                    return lam, vec, 0, res
            except Exception:
                pass
        return _power_iterate(matvec, dim, tol, rng, x0, mask=m_id)

    lam0, right, it_r, res_r = solve(op.apply, right0)
    lam0l, left, it_l, res_l = solve(opT.apply, left0)
    if lam0 <= 0:
        raise TnetError("dominant eigenvalue is not positive")
    if abs(lam0 - lam0l) > 1e-6 * max(lam0, 1.0):
        raise TnetError("left/right dominant eigenvalues disagree")
    if compute_lam1:
        proj = left @ right

        def deflate(v):
            return v * m_id - right * ((left @ (v * m_id)) / proj)

        cands = [_growth_rate(lambda v: op.apply(v), lam0, dim, rng, deflate)]
        for mask in ((sk < 0) & (sb < 0), (sk > 0) & (sb < 0)):
            mf = mask.astype(float)
            cands.append(_growth_rate(
                lambda v: op.apply(v) * mf, lam0, dim, rng,
                lambda v: v * mf))
        # topologically degenerate points put (near-)copies of lam0 in the
        # other parity sectors; the correlation length is defined from the
        # largest *non-degenerate* subdominant eigenvalue
        distinct = [c for c in cands if c <= lam0 * (1.0 - 1e-4)]
        lam1 = max(distinct) if distinct else max(cands)
    else:
        lam1 = np.nan
    scale = left @ right
    if abs(scale) < 1e-14:
        raise TnetError("left/right boundary vectors are orthogonal")
    left = left / scale
    return Boundaries(lam0=lam0, lam1_abs=lam1, left=left, right=right,
                      iterations=it_r + it_l, residual=max(res_r, res_l))


def correlation_length(tm, boundaries=None, tol=DEFAULT_TOL):
    """xi = 1 / log(lambda0 / |lambda1|) in units of cylinder rows."""
    b = boundaries if boundaries is not None else dominant_eigenpair(tm, tol)
    if b.lam1_abs == 0.0:
        return 0.0
    ratio = b.lam0 / b.lam1_abs
    if ratio <= 1.0 + 1e-12:
        return np.inf
    return 1.0 / math.log(ratio)


# --- observables ----------------------------------------------------------

def _expect_rows(tm, boundaries, mods_by_row):
    """(l| prod_m T_mod(m) |r) / (lam0^rows * (l|r)) over the row span."""
    if not mods_by_row:
        return 1.0
    rows = sorted(mods_by_row)
    vec = boundaries.right
    for m in range(rows[0], rows[-1] + 1):
        if m in mods_by_row:
            vec = tm.modified(mods_by_row[m]).apply(vec)
        else:
            vec = tm.op.apply(vec)
        vec = vec / boundaries.lam0
    return float(np.real(boundaries.left @ vec))


def density(tm, boundaries=None, tol=DEFAULT_TOL):
    """Per-sublattice densities <n_k>, k = 0..5, via one-block insertions."""
    b = boundaries if boundaries is not None else dominant_eigenpair(tm, tol)
    dens = np.empty(6)
    for k in range(6):
        mods = RowMods()
        if k < 3:
            mods.up[0] = ("density", k)
        else:
            mods.down[0] = ("density", k - 3)
        dens[k] = _expect_rows(tm, b, {0: mods})
    return dens


def mean_density(tm, boundaries=None, tol=DEFAULT_TOL):
    """Mean density over the six sublattices via two whole-triangle
    insertions (total occupation of the up and the down triangle)."""
    b = boundaries if boundaries is not None else dominant_eigenpair(tm, tol)
    up = RowMods()
    up.up[0] = ("density", None)
    dn = RowMods()
    dn.down[0] = ("density", None)
    tot = _expect_rows(tm, b, {0: up}) + _expect_rows(tm, b, {0: dn})
    return float(tot / 6.0)


def density_derivative(z1, z2, L, projected=True, step=1e-3, tol=DEFAULT_TOL):
    """d<n>/dz1 by central finite difference."""
    lo = cylinder_transfer(z1 - step, z2, L, projected)
    hi = cylinder_transfer(z1 + step, z2, L, projected)
    return (mean_density(hi, tol=tol) - mean_density(lo, tol=tol)) / (2 * step)


def _loop_mods(loop, L, open_string, x_type):
    """Per-row RowMods realizing a string insertion on the cylinder.

    Triangle addresses (n, m, 0/1) map to blocks: up(n, m) is the up part
    of block (n mod L, row m); down(n, m) the down part of block
    ((n+1) mod L, row m).  A vertex (n, m, v) maps to the internal edge of
    block n (v = 0), the horizontal bond n..n+1 of row m (v = 1), or the
    vertical bond absorbed into block n of row m+1 (v = 2).
    """
    tris = loop.open_triangles if open_string else loop.triangles
    atoms = loop.open_atoms if open_string else loop.atoms
    from .geometry import loop_block_span
    if loop_block_span(loop) > L:
        raise TnetError("loop does not fit the cylinder circumference")
    rows = {}

    def get(m):
        return rows.setdefault(m, RowMods())

    kind = "xstring" if x_type else "zstring"
    for (tn, tm_, ts), (an, am, ak) in zip(tris, atoms):
        if (tn, tm_) != (an, am):
            raise TnetError("loop atom/triangle addressing mismatch")
        j = ak if ak < 3 else ak - 3
        if ts == 0:
            get(tm_).up[tn % L] = (kind, j)
        else:
            get(tm_).down[(tn + 1) % L] = (kind, j)
    if not x_type:
        return rows

    # occupation-layer edge overrides along the string path
    string_set = set(map(tuple, tris))
    ell = len(loop.triangles)
    h = len(tris)
    pairs = []
    for i in range(h if open_string else ell):
        t_cur = tuple(loop.triangles[i % ell])
        t_nxt = tuple(loop.triangles[(i + 1) % ell])
        pairs.append((t_cur, t_nxt))
    if open_string:
        pairs.append((tuple(loop.triangles[-1]), tuple(loop.triangles[0])))
        # the pair list now holds h-1 interior edges plus the two endpoints:
        # (tris[h-1], tris[h]) and (tris[-1]=cycle end, tris[0])
    for t_a, t_b in pairs:
        shared = set(triangle_vertices(t_a)) & set(triangle_vertices(t_b))
        if len(shared) != 1:
            raise TnetError("consecutive loop triangles share != 1 vertex")
        vn, vm, vv = shared.pop()
        a_in = t_a in string_set
        b_in = t_b in string_set
        if a_in and b_in:
            occ = ("xor", False)
        else:
            # endpoint: rows of ENDCAP belong to the string triangle; work
            # out which physical slot of the edge it occupies below
            occ = ("endcap", None)
        # edge orientation [first, second] per location:
        #   v0: [down(n-1, m), up(n, m)]
        #   v1 (e_h of row m, position n): [up(n, m), down(n, m)]
        #   v2 (e_v2 of block n, row m+1): [up(n, m), down(n-1, m+1)]
        if vv == 0:
            first, second = (vn - 1, vm, 1), (vn, vm, 0)
            target, key, row = "e_v0", vn % L, vm
        elif vv == 1:
            first, second = (vn, vm, 0), (vn, vm, 1)
            target, key, row = "e_h", vn % L, vm
        else:
            first, second = (vn, vm, 0), (vn - 1, vm + 1, 1)
            target, key, row = "e_v2", vn % L, vm + 1
        if occ[0] == "endcap":
            string_first = first in string_set
            if not string_first and second not in string_set:
                raise TnetError("endpoint edge touches no string triangle")
            occ = ("endcap", not string_first)
        mat = double_edge_matrix(True, occ[0], bool(occ[1]))
        getattr(get(row), target)[key] = mat
    return rows


def string_expectation(tm, loop, boundaries=None, open_string=False,
                       x_type=False, tol=DEFAULT_TOL):
    """Normalized expectation of a (half-)string insertion."""
    if x_type and not tm.projected:
        raise TnetError("off-diagonal strings require the projected variant")
    b = boundaries if boundaries is not None else dominant_eigenpair(tm, tol)
    mods = _loop_mods(loop, tm.circumference, open_string, x_type)
    return _expect_rows(tm, b, mods)


def bffm(tm, loop, boundaries=None, x_type=False, tol=DEFAULT_TOL):
    """BFFM ratio |<open half string>| / sqrt(|<closed loop>|)."""
    b = boundaries if boundaries is not None else dominant_eigenpair(tm, tol)
    closed = string_expectation(tm, loop, b, False, x_type, tol)
    if abs(closed) < 1e-280:
        raise TnetError("closed-loop expectation %.3e vanishes" % closed)
    open_val = string_expectation(tm, loop, b, True, x_type, tol)
    return abs(open_val) / math.sqrt(abs(closed))


# --- exact small-torus contraction (oracle path) -------------------------

def torus_amplitudes(z1, z2, cluster, basis, projected=True):
    """Amplitudes on a small torus by literal network contraction.

    Contracts the single-layer triangle tensors and edge matrices with
    numpy.einsum, keeping all physical legs open, then reads off the
    amplitude of every basis configuration.  Independent of both the
    closed-form construction and the transfer-matrix code path.
    """
    if cluster.shear != 0:
        raise TnetError("torus contraction requires an unsheared cluster")
    if 2 * cluster.n1 * cluster.n2 > 12:
        raise TnetError("torus too large for direct contraction")
    return _torus_contract(z1, z2, cluster, basis, projected)


def _torus_contract(z1, z2, cluster, basis, projected):
    """Row-by-row single-layer contraction with open physical legs.

    Blocks fuse up(n, m) with down(n-1, m); bond matrices are absorbed on
    the internal, left, and down legs of each block so every bond carries
    its matrix exactly once.
    """
    tri = single_triangle_tensor(z1, z2, projected)
    e_ket = np.kron(XOR, ATMOST) if projected else XOR
    n_phys = tri.shape[0]
    D = tri.shape[1]
    n1, n2 = cluster.n1, cluster.n2

    # block[cu, cd, l, r, d, u]: up(n, m) fused with down(n-1, m); bond
    # matrices absorbed on the internal, left, and down legs
    block = np.einsum("qlxd,xy,pyru->pqlrdu", tri, e_ket, tri)
    block = np.einsum("pqlrdu,kl,ed->pqkreu", block, e_ket, e_ket)
    blockf = block.reshape(n_phys * n_phys, D, D, D, D)

    # one row: contract n1 blocks over the horizontal bonds, then close the
    # periodic ring; canonical shape (P, l, r, dvec, uvec)
    row = blockf.copy()
    for _ in range(1, n1):
        nxt = np.tensordot(row, blockf, axes=([2], [1]))
        # axes: P, l, dv, uv, pq, r2, d, u -> (P, pq, l, r2, dv, d, uv, u)
        nxt = nxt.transpose(0, 4, 1, 5, 2, 6, 3, 7)
        s = nxt.shape
        row = nxt.reshape(s[0] * s[1], s[2], s[3], s[4] * s[5], s[6] * s[7])
    ring = np.einsum("pxxdu->pdu", row)

    # stack n2 rows over the vertical bonds, then close the torus
    full = ring
    for _ in range(1, n2):
        nxt = np.tensordot(full, ring, axes=([2], [1]))   # P0, d0, P1, u1
        nxt = nxt.transpose(0, 2, 1, 3)
        s = nxt.shape
        full = nxt.reshape(s[0] * s[1], s[2], s[3])
    amps_flat = np.einsum("pxx->p", full)

    # physical index: base-n_phys digits, row-major in (m, n), up before
    # down within a block; block (n, m) holds up(n, m) and down(n-1, m)
    amps = np.empty(basis.dim, dtype=complex)
    tris_order = [(n, m) for m in range(n2) for n in range(n1)]
    for i, cfg in enumerate(basis.configs):
        idx = 0
        ok = True
        for (n, m) in tris_order:
            for s in (0, 1):
                i1 = n if s == 0 else n - 1
                ti = cluster.triangle_id(i1, m, s)
                atoms = cluster.triangle_incidence[ti]
                bits = [(int(cfg) >> a) & 1 for a in atoms]
                if projected:
                    if sum(bits) == 0:
                        st = 0
                    elif sum(bits) == 1:
                        st = 1 + bits.index(1)
                    else:
                        ok = False
                        break
                else:
                    st = bits[0] + 2 * bits[1] + 4 * bits[2]
                idx = idx * n_phys + st
            if not ok:
                break
        amps[i] = amps_flat[idx] if ok else 0.0
    nrm = np.linalg.norm(amps)
    if nrm == 0:
        raise TnetError("torus contraction produced a null state")
    from .hilbert import StateVector
    return StateVector(basis, amps / nrm)


# --- phase-diagram grids --------------------------------------------------

def phase_diagram_point(z1, z2, L, projected=True, loop_z=None, loop_x=None,
                        fd_step=1e-3, tol=DEFAULT_TOL, compute_xi=True,
                        warm=None):
    """density, dn/dz1, xi and optional BFFM values at one (z1, z2).

    Returns (record, warm) where warm holds the boundary vectors for
    warm-starting the next grid point; the finite-difference transfer
    matrices reuse the central boundaries as starting vectors too.
    """
    r0 = warm.get("right") if warm else None
    l0 = warm.get("left") if warm else None

    def solve(zz1, compute_lam1=False, right0=None, left0=None):
        tm = cylinder_transfer(zz1, z2, L, projected)
        b = dominant_eigenpair(tm, tol, right0=right0, left0=left0,
                               compute_lam1=compute_lam1)
        return tm, b

    tm, b = solve(z1, compute_xi, r0, l0)
    tm_lo, b_lo = solve(z1 - fd_step, right0=b.right, left0=b.left)
    tm_hi, b_hi = solve(z1 + fd_step, right0=b.right, left0=b.left)
    n_lo = mean_density(tm_lo, b_lo, tol)
    n_hi = mean_density(tm_hi, b_hi, tol)
    rec = {
        "z1": z1, "z2": z2,
        "density": mean_density(tm, b, tol),
        "dn_dz1": (n_hi - n_lo) / (2 * fd_step),
        "xi": correlation_length(tm, b) if compute_xi else np.nan,
    }
    rec["bffm_z_l18"] = (bffm(tm, loop_z, b, x_type=False, tol=tol)
                        if loop_z is not None else np.nan)
    rec["bffm_x_l18"] = (bffm(tm, loop_x, b, x_type=True, tol=tol)
                        if loop_x is not None and projected else np.nan)
    return rec, {"right": b.right, "left": b.left}


def grid_to_csv(records, path):
    cols = ["z1", "z2", "density", "dn_dz1", "xi", "bffm_z_l18", "bffm_x_l18"]
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for rec in records:
            fh.write(",".join("%.17g" % rec[c] for c in cols) + "\n")
