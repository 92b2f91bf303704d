"""Subspaces of R^d and the geometry between them.

Everything here works on small dense matrices. A :class:`Subspace` stores an
orthonormal basis as the columns of a ``d x r`` array. Feature extractors are
plain ``k x d`` arrays whose rows are (usually) orthonormal; rotations are
``k x k`` orthogonal arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    AlreadyContained,
    DimOrderViolation,
    DimensionMismatch,
    FullAmbient,
    NotOrthonormal,
    RankDeficient,
    ShapeMismatch,
)

RANK_RTOL = 1e-12
BASIS_ATOL = 1e-10
ROWS_ATOL = 1e-8


@dataclass(frozen=True, eq=False)
class Subspace:
    """Column span of an orthonormal ``d x r`` basis."""

    basis: np.ndarray

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float)
        if basis.ndim != 2 or basis.shape[1] < 1 or basis.shape[1] > basis.shape[0]:
            raise ShapeMismatch(f"basis must be d x r with 1 <= r <= d, got {basis.shape}")
        gram_err = np.max(np.abs(basis.T @ basis - np.eye(basis.shape[1])))
        if gram_err > BASIS_ATOL:
            raise NotOrthonormal(f"basis columns not orthonormal (max error {gram_err:.3e})")
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)

    @property
    def ambient_dim(self) -> int:
        return self.basis.shape[0]

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    def projector(self) -> np.ndarray:
        return self.basis @ self.basis.T

    def __repr__(self):
        return f"Subspace(dim={self.dim}, ambient_dim={self.ambient_dim})"


def check_orthonormal_rows(b, atol=ROWS_ATOL):
    """Raise :class:`NotOrthonormal` unless ``b b^T = I_k`` within ``atol``."""
    b = np.asarray(b, dtype=float)
    if b.ndim != 2 or b.shape[0] >= b.shape[1]:
        raise ShapeMismatch(f"feature extractor must be k x d with d > k, got {b.shape}")
    err = np.max(np.abs(b @ b.T - np.eye(b.shape[0])))
    if err > atol:
        raise NotOrthonormal(f"rows not orthonormal (max error {err:.3e})")
    return b


def orthonormalize(m) -> Subspace:
    """Orthonormal basis for the column space of a full-column-rank matrix.

    Uses a reduced QR factorization, with column signs flipped so the
    triangular factor has a nonnegative diagonal. That makes the basis a
    deterministic function of ``m``.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim == 1:
        m = m[:, None]
    s = np.linalg.svd(m, compute_uv=False)
    if s.size == 0 or s[0] == 0.0 or s[-1] <= RANK_RTOL * s[0] or m.shape[1] > m.shape[0]:
        raise RankDeficient(f"matrix of shape {m.shape} is not of full column rank")
    q, r = np.linalg.qr(m)
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    return Subspace(q * signs)


def rowspace(m) -> Subspace:
    """Row space of an arbitrary (possibly rank deficient) matrix."""
    m = np.atleast_2d(np.asarray(m, dtype=float))
    _, s, vt = np.linalg.svd(m, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise RankDeficient("zero matrix has no row space basis")
    rank = int(np.sum(s > RANK_RTOL * s[0]))
    return Subspace(vt[:rank].T)


def _require_same_ambient(a: Subspace, b: Subspace):
    if a.ambient_dim != b.ambient_dim:
        raise DimensionMismatch(f"ambient dims differ: {a.ambient_dim} vs {b.ambient_dim}")


def principal_cosines(a: Subspace, b: Subspace) -> np.ndarray:
    """Cosines of all principal angles, in decreasing order, clamped to [0, 1]."""
    _require_same_ambient(a, b)
    s = np.linalg.svd(a.basis.T @ b.basis, compute_uv=False)
    return np.clip(s, 0.0, 1.0)


def principal_angle_cos(a: Subspace, b: Subspace) -> float:
    """Cosine of the largest principal angle between ``a`` and ``b``.

    This is the ``min(dim a, dim b)``-th singular value of ``E^T F`` for
    orthonormal bases ``E`` and ``F``. It is 1 when the smaller subspace
    lies inside the larger one and 0 when some direction of the smaller one
    is orthogonal to the whole of the other.
    """
    return float(principal_cosines(a, b)[-1])


def variational_angle_estimate(a: Subspace, b: Subspace, n_restarts=8, rng=None,
                               max_iter=5000, gtol=1e-9) -> float:
    """Minimize ``||F^T r||`` over unit vectors ``r`` in ``a`` by descent.

    ``F`` is the basis of ``b``. The search runs Riemannian steepest descent
    on the unit sphere of coefficient space, with an exact line search along
    each great circle, from ``n_restarts`` random starting points. Any unit
    vector gives an upper bound on the minimum, so the returned value can
    only overshoot the largest-angle cosine, never undershoot it. The error in
    the squared objective is quadratic in the stopping gradient norm
    ``gtol``, so the default already reaches machine precision.
    """
    _require_same_ambient(a, b)
    if a.dim > b.dim:
        raise DimOrderViolation(f"need dim(a) <= dim(b), got {a.dim} > {b.dim}")
    rng = np.random.default_rng(0) if rng is None else rng
    c = b.basis.T @ a.basis  # q x p
    m = c.T @ c
    best = np.inf
    for _ in range(max(1, n_restarts)):
        x = rng.standard_normal(a.dim)
        x /= np.linalg.norm(x)
        for _ in range(max_iter):
            mx = m @ x
            fx = x @ mx
            g = mx - fx * x
            gnorm = np.linalg.norm(g)
            if gnorm <= gtol:
                break
            d = -g / gnorm
            md = m @ d
            half_diff = 0.5 * (fx - d @ md)
            cross = x @ md
            # f(theta) = mean + half_diff cos 2theta + cross sin 2theta
            theta = 0.5 * (np.arctan2(cross, half_diff) + np.pi)
            x_new = np.cos(theta) * x + np.sin(theta) * d
            x_new /= np.linalg.norm(x_new)
            if np.linalg.norm(x_new - x) < 1e-16:
                break
            x = x_new
        val = np.linalg.norm(c @ x)
        best = min(best, val)
    return float(np.clip(best, 0.0, 1.0))


def project(s: Subspace, x) -> np.ndarray:
    """Orthogonal projection ``E E^T x`` onto ``s``."""
    x = np.asarray(x, dtype=float)
    if x.shape[0] != s.ambient_dim:
        raise DimensionMismatch(f"vector length {x.shape[0]} != ambient dim {s.ambient_dim}")
    return s.basis @ (s.basis.T @ x)


def orthogonal_complement(s: Subspace) -> Subspace:
    if s.dim == s.ambient_dim:
        raise FullAmbient("the complement of the whole space is trivial")
    q, _ = np.linalg.qr(s.basis, mode="complete")
    comp = q[:, s.dim:]
    # one re-orthogonalization pass against s keeps cross terms at ~1e-16
    comp = comp - s.basis @ (s.basis.T @ comp)
    q2, r2 = np.linalg.qr(comp)
    return Subspace(q2 * np.where(np.diag(r2) < 0, -1.0, 1.0))


def sample_uniform_subspace(d, r, rng) -> Subspace:
    """Uniformly random ``r``-dimensional subspace of R^d (Haar on the Grassmannian)."""
    if not 1 <= r <= d:
        raise DimensionMismatch(f"need 1 <= r <= d, got r={r}, d={d}")
    return orthonormalize(rng.standard_normal((d, r)))


def span_with_vector(s: Subspace, w, rtol=1e-10) -> Subspace:
    """``span(s ∪ {w})``; raises :class:`AlreadyContained` if ``w`` is (numerically) in ``s``."""
    w = np.asarray(w, dtype=float)
    resid = w - project(s, w)
    wn = np.linalg.norm(w)
    if wn == 0.0 or np.linalg.norm(resid) <= rtol * wn:
        raise AlreadyContained("vector already lies in the subspace")
    resid = resid - project(s, resid)
    new_col = resid / np.linalg.norm(resid)
    return Subspace(np.column_stack([s.basis, new_col]))


def random_rotation(k, rng, proper=False) -> np.ndarray:
    """Haar-distributed ``k x k`` orthogonal matrix (``det = +1`` if ``proper``)."""
    q, r = np.linalg.qr(rng.standard_normal((k, k)))
    q = q * np.where(np.diag(r) < 0, -1.0, 1.0)
    if proper and np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def procrustes_rotation(b, b_other) -> np.ndarray:
    """Orthogonal ``U`` minimizing ``||b - U b_other||_F``.

    Closed form from the SVD of ``b b_other^T``. For ``k = 1`` this is the
    sign of the inner product, which is also exactly optimal for the
    spectral norm since only ``U = ±1`` exist.
    """
    p, _, qt = np.linalg.svd(b @ b_other.T)
    return p @ qt


def _cayley(a):
    k = a.shape[0]
    eye = np.eye(k)
    return np.linalg.solve(eye - 0.5 * a, eye + 0.5 * a)


def refine_rotation(b, b_other, u0, n_restarts=8, rng=None, max_iter=200):
    """Locally minimize the spectral norm ``||b - U b_other||_2`` over orthogonal ``U``.

    Descends from ``u0`` (and ``n_restarts - 1`` random perturbations of it)
    along the subgradient given by the top singular pair, with Cayley-map
    retraction and backtracking. Returns ``(distance, U)``; the distance is
    never worse than at ``u0``.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    k = b.shape[0]

    def objective(u):
        return np.linalg.norm(b - u @ b_other, 2)

    best_u = u0
    best_val = objective(u0)
    if k == 1:
        return best_val, best_u
    for restart in range(max(1, n_restarts)):
        if restart == 0:
            u = u0.copy()
        else:
            a = rng.standard_normal((k, k)) * 0.3
            u = u0 @ _cayley(a - a.T)
        val = objective(u)
        for _ in range(max_iter):
            resid = b - u @ b_other
            left, _, right_t = np.linalg.svd(resid)
            g = -np.outer(left[:, 0], b_other @ right_t[0])
            ug = u.T @ g
            omega = 0.5 * (ug - ug.T)
            if np.linalg.norm(omega) < 1e-14:
                break
            step = 1.0
            improved = False
            while step > 1e-10:
                cand = u @ _cayley(-step * omega)
                cand_val = objective(cand)
                if cand_val < val:
                    u, val, improved = cand, cand_val, True
                    break
                step *= 0.5
            if not improved:
                break
        if val < best_val:
            best_val, best_u = val, u
    return float(best_val), best_u


def extractor_distance(b, b_other, refine=False, n_restarts=8, rng=None):
    """Distance between two feature extractors with orthonormal rows.

    Returns ``(distance, U)`` where ``distance = ||b - U b_other||_2`` for the
    Frobenius-optimal (Procrustes) rotation ``U``. This over-estimates the
    minimum over rotations of the spectral norm except when ``k = 1``. With
    ``refine=True`` the rotation is further improved by
    :func:`refine_rotation` and the smaller of the two values is returned.
    """
    b = np.asarray(b, dtype=float)
    b_other = np.asarray(b_other, dtype=float)
    if b.shape != b_other.shape:
        raise ShapeMismatch(f"shapes differ: {b.shape} vs {b_other.shape}")
    check_orthonormal_rows(b)
    check_orthonormal_rows(b_other)
    u = procrustes_rotation(b, b_other)
    dist = float(np.linalg.norm(b - u @ b_other, 2))
    if refine:
        ref_dist, ref_u = refine_rotation(b, b_other, u, n_restarts=n_restarts, rng=rng)
        if ref_dist < dist:
            return float(ref_dist), ref_u
    return dist, u
