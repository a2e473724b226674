"""Distances between descriptors and affine subspaces, single-pair and batched.

The subspace-to-subspace solvers all derive from the stationarity system for
the closest pair x* = d0 + D^T a, y* = e0 + E^T b (orthonormal bases):

    [ I   -G ] [a]   [ D (e0 - d0) ]
    [ G^T -I ] [b] = [ E (e0 - d0) ]      with G = D E^T.

Eliminating b gives (I - G G^T) a = u - G v, the small-matrix path. The
general path solves the full system by minimum-norm least squares so that
parallel or intersecting subspaces never error. The dual solvers work on the
hyperplane form instead and scale with 3n - 2m unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    HeterogeneousDimensions,
    IncompatibleKinds,
    InvalidDimension,
    NearSingular,
)
from .subspace import (
    AffineSubspaceDual,
    AffineSubspacePrimal,
    ClosestPair,
    as_descriptor,
)

# Fast path refuses systems with estimated cond(N) above this.
COND_LIMIT = 1e12
# Batched engines re-solve a pair exactly when |det(N)| falls below this.
_DET_FALLBACK = 1e-10
# Entries this small (relative) are recomputed by explicit point difference
# to avoid the cancellation in the algebraic squared-distance formula.
_CANCEL_GUARD = 1e-10
# Panel size targets roughly 64 MB of batched scratch.
_PANEL_BYTES = 64 * 2**20


@dataclass(frozen=True)
class RepresentationChoice:
    """Which representation is cheaper for each distance at dimensions (n, m)."""

    use_dual_p2s: bool
    use_dual_s2s: bool
    m: int
    n: int


@dataclass(frozen=True)
class DistanceMatrix:
    """All-pairs distance matrix; entries match single-pair recomputation."""

    values: np.ndarray
    mode: str

    def __post_init__(self):
        v = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def rows(self) -> int:
        return self.values.shape[0]

    @property
    def cols(self) -> int:
        return self.values.shape[1]


def choose_representation(n: int, m: int) -> RepresentationChoice:
    """Pick primal vs dual per the operation-count crossovers.

    Dual point-to-subspace needs n - m dot products instead of m, so it wins
    once m >= n/2. The dual pair solver has 3n - 2m unknowns versus 2m, which
    crosses over at m > 3n/4.
    """
    if not 1 <= m < n:
        raise InvalidDimension(f"need 1 <= m < n, got m={m}, n={n}")
    return RepresentationChoice(
        use_dual_p2s=2 * m >= n,
        use_dual_s2s=4 * m > 3 * n,
        m=m,
        n=n,
    )


# ---------------------------------------------------------------------------
# point to subspace


def point_to_subspace(sub: AffineSubspacePrimal, e) -> float:
    """Euclidean distance from point e to the subspace (primal form)."""
    e = as_descriptor(e, n=sub.n)
    r = e - sub.d0
    resid = r - sub.basis.T @ (sub.basis @ r)
    return float(np.linalg.norm(resid))


def point_to_subspace_dual(sub: AffineSubspaceDual, e) -> float:
    """Euclidean distance from point e to the subspace (dual form).

    Only n - m dot products: the residual is the component of e - d0 along
    the normals, so the distance is ||A (e - d0)||.
    """
    e = as_descriptor(e, n=sub.n)
    return float(np.linalg.norm(sub.normals @ (e - sub.d0)))


# ---------------------------------------------------------------------------
# subspace to subspace, single pair


def _pair_system(subD: AffineSubspacePrimal, subE: AffineSubspacePrimal):
    if subD.n != subE.n:
        raise DimensionMismatch(f"ambient dimensions differ: {subD.n} vs {subE.n}")
    D, E = subD.basis, subE.basis
    w = subE.d0 - subD.d0
    return D @ E.T, D @ w, E @ w


def _closest_pair(subD, subE, alpha, beta) -> ClosestPair:
    x = subD.d0 + subD.basis.T @ alpha
    y = subE.d0 + subE.basis.T @ beta
    return ClosestPair(
        x_star=x,
        y_star=y,
        distance=float(np.linalg.norm(y - x)),
        coeffs_alpha=alpha,
        coeffs_beta=beta,
    )


def subspace_to_subspace(
    subD: AffineSubspacePrimal, subE: AffineSubspacePrimal
) -> ClosestPair:
    """Closest pair between two affine subspaces; never errors on degeneracy.

    Solves the full (m_D + m_E)-unknown stationarity system by minimum-norm
    least squares, which picks a canonical minimizer when the subspaces are
    parallel or intersect (any minimizer attains the same distance).
    """
    G, u, v = _pair_system(subD, subE)
    mD, mE = G.shape
    B = np.block([[np.eye(mD), -G], [G.T, -np.eye(mE)]])
    z = np.linalg.lstsq(B, np.concatenate([u, v]), rcond=None)[0]
    return _closest_pair(subD, subE, z[:mD], z[mD:])


def subspace_to_subspace_fast(
    subD: AffineSubspacePrimal, subE: AffineSubspacePrimal
) -> ClosestPair:
    """Closest pair via the m x m reduced system; raises NearSingular when
    the reduction is ill-conditioned (caller falls back to the general path).
    """
    if subD.m != subE.m:
        raise DimensionMismatch("fast path requires equal subspace dimensions")
    G, u, v = _pair_system(subD, subE)
    N = np.eye(subD.m) - G @ G.T
    lam = np.linalg.eigvalsh(N)
    if lam[0] <= 0 or lam[-1] / lam[0] > COND_LIMIT:
        raise NearSingular(
            f"cond(N) estimate {lam[-1] / max(lam[0], 0.0):.2e} exceeds {COND_LIMIT:.0e}"
        )
    alpha = np.linalg.solve(N, u - G @ v)
    beta = G.T @ alpha - v
    return _closest_pair(subD, subE, alpha, beta)


def subspace_to_subspace_dual(
    subD: AffineSubspaceDual, subE: AffineSubspaceDual
) -> ClosestPair:
    """Closest pair in the hyperplane-intersection form (3n - 2m unknowns).

    Unknowns are x* plus the normal-coordinates mu, nu of the connecting
    segment; y* = x* + Ae^T nu. Minimum-norm least squares keeps degenerate
    configurations (parallel, intersecting) well-defined.
    """
    if subD.n != subE.n:
        raise DimensionMismatch(f"ambient dimensions differ: {subD.n} vs {subE.n}")
    Ad, Ae = subD.normals, subE.normals
    n = subD.n
    kd, ke = Ad.shape[0], Ae.shape[0]
    A = np.zeros((kd + ke + n, n + kd + ke))
    A[:kd, :n] = Ad
    A[kd : kd + ke, :n] = Ae
    A[kd : kd + ke, n + kd :] = np.eye(ke)
    A[kd + ke :, n : n + kd] = Ad.T
    A[kd + ke :, n + kd :] = -Ae.T
    rhs = np.concatenate([Ad @ subD.d0, Ae @ subE.d0, np.zeros(n)])
    z = np.linalg.lstsq(A, rhs, rcond=None)[0]
    x = z[:n]
    y = x + Ae.T @ z[n + kd :]
    return ClosestPair(x_star=x, y_star=y, distance=float(np.linalg.norm(y - x)))


# ---------------------------------------------------------------------------
# batched engines


def _stack_points(items, side: str) -> np.ndarray:
    arr = np.asarray(items, dtype=np.float64)
    if arr.ndim != 2:
        raise HeterogeneousDimensions(f"{side}: descriptors must share one length")
    return arr


def _stack_primal(items, side: str):
    ns = {s.n for s in items}
    ms = {s.m for s in items}
    if len(ns) > 1 or len(ms) > 1:
        raise HeterogeneousDimensions(f"{side}: mixed (n, m) across subspaces")
    d0 = np.stack([s.d0 for s in items])
    bases = np.stack([s.basis for s in items])
    return d0, bases


def _stack_dual(items, side: str):
    ns = {s.n for s in items}
    ms = {s.m for s in items}
    if len(ns) > 1 or len(ms) > 1:
        raise HeterogeneousDimensions(f"{side}: mixed (n, m) across subspaces")
    d0 = np.stack([s.d0 for s in items])
    normals = np.stack([s.normals for s in items])
    return d0, normals


def _p2p_block(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    sq = (
        np.sum(P * P, axis=1)[:, None]
        + np.sum(Q * Q, axis=1)[None, :]
        - 2.0 * (P @ Q.T)
    )
    np.maximum(sq, 0.0, out=sq)
    dist = np.sqrt(sq)
    # Tiny entries lose half the digits through the squared form; redo them
    # by direct differencing.
    small = np.argwhere(sq < _CANCEL_GUARD * (np.sum(P * P, axis=1)[:, None] + 1.0))
    for i, j in small:
        dist[i, j] = np.linalg.norm(Q[j] - P[i])
    return dist


def _p2s_primal_block(d0s, bases, pts) -> np.ndarray:
    B, m, n = bases.shape
    P = pts.shape[0]
    cross = (bases.reshape(B * m, n) @ pts.T).reshape(B, m, P)
    own = np.einsum("bmn,bn->bm", bases, d0s)
    coeff = cross - own[:, :, None]
    rsq = (
        np.sum(pts * pts, axis=1)[None, :]
        + np.sum(d0s * d0s, axis=1)[:, None]
        - 2.0 * (d0s @ pts.T)
    )
    sq = rsq - np.sum(coeff * coeff, axis=1)
    np.maximum(sq, 0.0, out=sq)
    dist = np.sqrt(sq)
    small = np.argwhere(sq < _CANCEL_GUARD * (rsq + 1.0))
    for i, j in small:
        r = pts[j] - d0s[i]
        resid = r - bases[i].T @ (bases[i] @ r)
        dist[i, j] = np.linalg.norm(resid)
    return dist


def _p2s_dual_block(d0s, normals, pts) -> np.ndarray:
    B, k, n = normals.shape
    P = pts.shape[0]
    cross = (normals.reshape(B * k, n) @ pts.T).reshape(B, k, P)
    own = np.einsum("bkn,bn->bk", normals, d0s)
    comp = cross - own[:, :, None]
    return np.sqrt(np.sum(comp * comp, axis=1))


def _s2s_primal_panel(d0s, bases, e0s, ebases):
    """Distances for one panel: every query subspace vs every ref subspace."""
    B, mD, n = bases.shape
    R, mE, _ = ebases.shape
    G = (bases.reshape(B * mD, n) @ ebases.reshape(R * mE, n).T).reshape(
        B, mD, R, mE
    )
    G = np.ascontiguousarray(G.transpose(0, 2, 1, 3))  # (B, R, mD, mE)
    De0 = (bases.reshape(B * mD, n) @ e0s.T).reshape(B, mD, R)
    Dd0 = np.einsum("bmn,bn->bm", bases, d0s)
    u = De0.transpose(0, 2, 1) - Dd0[:, None, :]  # (B, R, mD)
    Ee0 = np.einsum("rmn,rn->rm", ebases, e0s)
    Ed0 = (ebases.reshape(R * mE, n) @ d0s.T).reshape(R, mE, B)
    v = Ee0[None, :, :] - Ed0.transpose(2, 0, 1)  # (B, R, mE)

    N = -np.matmul(G, G.transpose(0, 1, 3, 2))
    idx = np.arange(mD)
    N[:, :, idx, idx] += 1.0
    det = np.linalg.det(N)
    bad = np.abs(det) < _DET_FALLBACK
    if bad.any():
        N = N.copy()
        N[bad] = np.eye(mD)
    rhs = u - np.matmul(G, v[..., None])[..., 0]
    alpha = np.linalg.solve(N, rhs[..., None])[..., 0]
    beta = np.matmul(G.transpose(0, 1, 3, 2), alpha[..., None])[..., 0] - v

    wsq = (
        np.sum(e0s * e0s, axis=1)[None, :]
        + np.sum(d0s * d0s, axis=1)[:, None]
        - 2.0 * (d0s @ e0s.T)
    )
    sq = (
        wsq
        + np.sum(alpha * alpha, axis=2)
        + np.sum(beta * beta, axis=2)
        + 2.0 * np.sum(v * beta, axis=2)
        - 2.0 * np.sum(u * alpha, axis=2)
        - 2.0 * np.einsum("brm,brmk,brk->br", alpha, G, beta)
    )
    np.maximum(sq, 0.0, out=sq)
    dist = np.sqrt(sq)

    scale = wsq + np.sum(alpha * alpha, axis=2) + np.sum(beta * beta, axis=2)
    small = sq < _CANCEL_GUARD * (scale + 1.0)
    for i, j in np.argwhere(small & ~bad):
        diff = (
            e0s[j]
            + ebases[j].T @ beta[i, j]
            - d0s[i]
            - bases[i].T @ alpha[i, j]
        )
        dist[i, j] = np.linalg.norm(diff)
    for i, j in np.argwhere(bad):
        subD = AffineSubspacePrimal(d0=d0s[i], basis=bases[i])
        subE = AffineSubspacePrimal(d0=e0s[j], basis=ebases[j])
        dist[i, j] = subspace_to_subspace(subD, subE).distance
    return dist


def _s2s_dual_pairs(d0s, normals, e0s, enormals, rows, cols):
    """Solve the dual stationarity system for an explicit list of pairs."""
    kd = normals.shape[1]
    ke = enormals.shape[1]
    n = normals.shape[2]
    size = n + kd + ke
    B = rows.shape[0]
    A = np.zeros((B, size, size))
    A[:, :kd, :n] = normals[rows]
    A[:, kd : kd + ke, :n] = enormals[cols]
    A[:, kd : kd + ke, n + kd :] = np.eye(ke)
    A[:, kd + ke :, n : n + kd] = normals[rows].transpose(0, 2, 1)
    A[:, kd + ke :, n + kd :] = -enormals[cols].transpose(0, 2, 1)
    rhs = np.zeros((B, size))
    rhs[:, :kd] = np.einsum("bkn,bn->bk", normals[rows], d0s[rows])
    rhs[:, kd : kd + ke] = np.einsum("bkn,bn->bk", enormals[cols], e0s[cols])

    out = np.empty(B)
    try:
        z = np.linalg.solve(A, rhs[..., None])[..., 0]
        resid = np.abs(np.matmul(A, z[..., None])[..., 0] - rhs).max(axis=1)
        retry = np.nonzero(resid > 1e-8)[0]
    except np.linalg.LinAlgError:
        z = np.zeros((B, size))
        retry = np.arange(B)
    nu = z[:, n + kd :]
    out[:] = np.sqrt(np.sum(nu * nu, axis=1))
    for i in retry:
        zi = np.linalg.lstsq(A[i], rhs[i], rcond=None)[0]
        out[i] = np.linalg.norm(zi[n + kd :])
    return out


def _panel_rows(total_rows: int, cols: int, bytes_per_cell: int) -> int:
    rows = max(1, _PANEL_BYTES // max(1, cols * bytes_per_cell))
    return min(total_rows, rows)


def _classify(items, side: str) -> str:
    kinds = set()
    for it in items:
        if isinstance(it, AffineSubspacePrimal):
            kinds.add("primal")
        elif isinstance(it, AffineSubspaceDual):
            kinds.add("dual")
        else:
            kinds.add("point")
    if len(kinds) != 1:
        raise IncompatibleKinds(f"{side}: mixed lifted and plain items: {sorted(kinds)}")
    return kinds.pop()


def distance_matrix(queries, refs, mode: str) -> DistanceMatrix:
    """Exhaustive all-pairs distances between queries and refs.

    mode is one of p2p, p2s, s2s and must match the item kinds (for p2s,
    exactly one side holds subspaces). Results are independent of the
    internal panel size: each entry agrees with the single-pair operation
    within 1e-9.
    """
    queries = list(queries)
    refs = list(refs)
    if not queries or not refs:
        raise DimensionMismatch("empty query or reference set")
    qkind = _classify(queries, "queries")
    rkind = _classify(refs, "refs")

    if mode == "p2p":
        if qkind != "point" or rkind != "point":
            raise IncompatibleKinds("p2p needs plain descriptors on both sides")
        P = _stack_points(queries, "queries")
        Q = _stack_points(refs, "refs")
        if P.shape[1] != Q.shape[1]:
            raise DimensionMismatch(f"n mismatch: {P.shape[1]} vs {Q.shape[1]}")
        return DistanceMatrix(values=_p2p_block(P, Q), mode=mode)

    if mode == "p2s":
        if (qkind == "point") == (rkind == "point"):
            raise IncompatibleKinds("p2s needs subspaces on exactly one side")
        transposed = qkind == "point"
        subs, pts_items = (refs, queries) if transposed else (queries, refs)
        pts = _stack_points(pts_items, "descriptors")
        if subs[0].n != pts.shape[1]:
            raise DimensionMismatch(f"n mismatch: {subs[0].n} vs {pts.shape[1]}")
        if isinstance(subs[0], AffineSubspacePrimal):
            d0s, bases = _stack_primal(subs, "subspaces")
            rows = _panel_rows(len(subs), pts.shape[0], 8 * (bases.shape[1] + 2))
            panels = [
                _p2s_primal_block(d0s[i : i + rows], bases[i : i + rows], pts)
                for i in range(0, len(subs), rows)
            ]
        else:
            d0s, normals = _stack_dual(subs, "subspaces")
            rows = _panel_rows(len(subs), pts.shape[0], 8 * (normals.shape[1] + 2))
            panels = [
                _p2s_dual_block(d0s[i : i + rows], normals[i : i + rows], pts)
                for i in range(0, len(subs), rows)
            ]
        values = np.concatenate(panels, axis=0)
        return DistanceMatrix(values=values.T if transposed else values, mode=mode)

    if mode == "s2s":
        if qkind == "point" or rkind == "point":
            raise IncompatibleKinds("s2s needs subspaces on both sides")
        if qkind != rkind:
            raise IncompatibleKinds("s2s needs one representation on both sides")
        if queries[0].n != refs[0].n:
            raise DimensionMismatch(f"n mismatch: {queries[0].n} vs {refs[0].n}")
        if qkind == "primal":
            d0s, bases = _stack_primal(queries, "queries")
            e0s, ebases = _stack_primal(refs, "refs")
            m2 = (bases.shape[1] + ebases.shape[1]) ** 2
            rows = _panel_rows(len(queries), len(refs), 8 * (m2 + 4))
            values = np.concatenate(
                [
                    _s2s_primal_panel(
                        d0s[i : i + rows], bases[i : i + rows], e0s, ebases
                    )
                    for i in range(0, len(queries), rows)
                ],
                axis=0,
            )
        else:
            d0s, normals = _stack_dual(queries, "queries")
            e0s, enormals = _stack_dual(refs, "refs")
            nq, nr = len(queries), len(refs)
            size = normals.shape[2] + normals.shape[1] + enormals.shape[1]
            chunk = max(1, _PANEL_BYTES // (8 * size * size))
            ii, jj = np.meshgrid(np.arange(nq), np.arange(nr), indexing="ij")
            ii, jj = ii.ravel(), jj.ravel()
            values = np.empty(nq * nr)
            for start in range(0, ii.shape[0], chunk):
                sl = slice(start, start + chunk)
                values[sl] = _s2s_dual_pairs(
                    d0s, normals, e0s, enormals, ii[sl], jj[sl]
                )
            values = values.reshape(nq, nr)
        return DistanceMatrix(values=values, mode=mode)

    raise IncompatibleKinds(f"unknown mode {mode!r}")
