"""Dense float64 linear algebra: rank-aware SVD, pseudo-inverse, least squares.

Every decomposition here truncates at the effective numerical rank
(singular values below ``RANK_RTOL * sigma_max`` count as zero) and applies
a fixed per-column sign convention so repeated calls on the same input are
bit-identical.  All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, NumericalFailureError

# Relative cutoff below which a singular value is treated as exactly zero.
RANK_RTOL = 1e-10


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD truncated at the effective rank.

    ``u`` is (m, rank) with orthonormal columns, ``sigma`` is (rank,)
    non-negative and descending, ``v`` is (n, rank) with orthonormal
    columns, and ``u @ np.diag(sigma) @ v.T`` reconstructs the input up to
    numerical error.
    """

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray
    rank: int


def _as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2 or m.size == 0:
        raise InvalidInputError(
            f"{name} must be a nonempty 2-D array, got shape {m.shape}"
        )
    if not np.all(np.isfinite(m)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return m


def svd(m) -> SvdResult:
    """Thin SVD with effective-rank truncation and a deterministic sign.

    Columns whose singular value falls below ``RANK_RTOL`` times the largest
    singular value are dropped.  In each remaining column of ``u`` the entry
    of largest magnitude is made non-negative (first occurrence wins on
    ties), with the matching column of ``v`` flipped alongside; plain SVD is
    unique only up to such per-column signs, so this pins one representative.

    Raises
    ------
    InvalidInputError
        If the input is empty or contains NaN/Inf.
    NumericalFailureError
        If the underlying iteration does not converge.
    """
    a = _as_matrix(m)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailureError(f"SVD iteration failed to converge: {exc}") from exc
    rank = int(np.count_nonzero(s > RANK_RTOL * s[0])) if s.size else 0
    u = u[:, :rank]
    s = s[:rank].copy()
    v = vt[:rank].T
    if rank:
        lead = np.argmax(np.abs(u), axis=0)
        signs = np.where(u[lead, np.arange(rank)] < 0.0, -1.0, 1.0)
        u = u * signs
        v = v * signs
    return SvdResult(u=u, sigma=s, v=v, rank=rank)


def pseudo_inverse(m) -> np.ndarray:
    """Moore-Penrose pseudo-inverse built on the rank-truncated `svd`.

    Singular values treated as zero invert to zero, so ``diag(2, 0)`` maps
    to ``diag(0.5, 0)``.  Satisfies the four Penrose identities to within
    roundoff for well-scaled inputs.
    """
    res = svd(m)
    if res.rank == 0:
        return np.zeros((res.v.shape[0], res.u.shape[0]))
    return res.v @ (res.u / res.sigma).T


def least_squares(a, b) -> np.ndarray:
    """Minimum-norm solution of ``min_X || b - X @ a ||_F``.

    ``a`` is (k, n) and ``b`` is (k', n) with a shared sample count n; the
    result is (k', k).  Computed as ``b @ pinv(a)``, which among all
    Frobenius-norm minimizers is the one of least ``||X||_F`` (rows of X lie
    in the row space of ``a``).
    """
    a2 = _as_matrix(a, "a")
    b2 = _as_matrix(b, "b")
    if a2.shape[1] != b2.shape[1]:
        raise InvalidInputError(
            f"sample counts differ: a has {a2.shape[1]} columns, b has {b2.shape[1]}"
        )
    return b2 @ pseudo_inverse(a2)
