"""Small dense matrix algebra for d in {2, 3}.

Every function accepts a single matrix of shape ``(d, d)`` or a stack of
shape ``(..., d, d)`` and works on the trailing two axes.  Determinants,
cofactors and minors use explicit formulas rather than LU factorisations
so that identities such as ``cof(A).T == det(A) * inv(A)`` hold to
rounding.
"""

from __future__ import annotations

from itertools import combinations
from math import comb

import numpy as np

from .errors import DeterminantNotPositive, DimensionMismatch

DET_FLOOR = 1e-12


def as_mat(A, dim=None) -> np.ndarray:
    """Validate a single ``d x d`` real matrix and return it as float array."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] not in (2, 3):
        raise DimensionMismatch(f"expected a 2x2 or 3x3 matrix, got shape {A.shape}")
    if dim is not None and A.shape[0] != dim:
        raise DimensionMismatch(f"expected dimension {dim}, got {A.shape[0]}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix entries must be finite")
    return A


def frobenius_inner(A, B):
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[-2:] != B.shape[-2:]:
        raise DimensionMismatch(f"shapes {A.shape} and {B.shape} differ")
    return np.einsum("...ij,...ij->...", A, B)


def frobenius_norm(A):
    return np.sqrt(frobenius_inner(A, A))


def det(A):
    A = np.asarray(A, dtype=float)
    d = A.shape[-1]
    if d == 2:
        return A[..., 0, 0] * A[..., 1, 1] - A[..., 0, 1] * A[..., 1, 0]
    if d == 3:
        return (
            A[..., 0, 0] * (A[..., 1, 1] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 1])
            - A[..., 0, 1] * (A[..., 1, 0] * A[..., 2, 2] - A[..., 1, 2] * A[..., 2, 0])
            + A[..., 0, 2] * (A[..., 1, 0] * A[..., 2, 1] - A[..., 1, 1] * A[..., 2, 0])
        )
    raise DimensionMismatch(f"unsupported dimension {d}")


def cofactor(A):
    """Cofactor matrix, the derivative of ``det`` at ``A``.

    Defined for every matrix; for invertible ``A`` it equals
    ``det(A) * inv(A).T``.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[-1]
    C = np.empty_like(A)
    if d == 2:
        C[..., 0, 0] = A[..., 1, 1]
        C[..., 0, 1] = -A[..., 1, 0]
        C[..., 1, 0] = -A[..., 0, 1]
        C[..., 1, 1] = A[..., 0, 0]
        return C
    if d == 3:
        # rows of cof(A) are cross products of the other two rows
        r0, r1, r2 = A[..., 0, :], A[..., 1, :], A[..., 2, :]
        C[..., 0, :] = np.cross(r1, r2)
        C[..., 1, :] = np.cross(r2, r0)
        C[..., 2, :] = np.cross(r0, r1)
        return C
    raise DimensionMismatch(f"unsupported dimension {d}")


def inverse_glplus(A, det_floor: float = DET_FLOOR):
    """Inverse via the cofactor formula, restricted to GL+(d).

    Raises
    ------
    DeterminantNotPositive
        If any determinant is ``<= det_floor``.
    """
    A = np.asarray(A, dtype=float)
    dA = det(A)
    if np.any(~(dA > det_floor)):
        raise DeterminantNotPositive(
            f"determinant {np.min(dA):.3e} is not above the floor {det_floor:.1e}"
        )
    return np.swapaxes(cofactor(A), -1, -2) / dA[..., None, None]


def inv_T(A):
    """``A^{-T}`` without positivity check (caller guarantees det != 0)."""
    return cofactor(A) / det(A)[..., None, None]


def minor_count(d: int) -> int:
    return sum(comb(d, s) ** 2 for s in range(1, d + 1))


def minor_matrix(A, s: int):
    """Order-``s`` minors of ``A`` as a ``C(d,s) x C(d,s)`` matrix.

    Row index runs over row subsets, column index over column subsets,
    both in lexicographic order.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[-1]
    if not 1 <= s <= d:
        raise ValueError(f"minor order {s} outside 1..{d}")
    subsets = list(combinations(range(d), s))
    k = len(subsets)
    out = np.empty(A.shape[:-2] + (k, k))
    for a, rows in enumerate(subsets):
        sub_r = A[..., rows, :]
        for b, cols in enumerate(subsets):
            sub = sub_r[..., list(cols)]
            out[..., a, b] = sub[..., 0, 0] if s == 1 else det(sub)
    return out


def minors_all(A):
    """All minors of ``A``, orders 1..d concatenated; the last entry is det(A).

    Within each order the layout is row-subset-major, column-subset-minor,
    so for d=2 the result is ``(a11, a12, a21, a22, det A)``.
    """
    A = np.asarray(A, dtype=float)
    d = A.shape[-1]
    blocks = [minor_matrix(A, s).reshape(A.shape[:-2] + (-1,)) for s in range(1, d + 1)]
    return np.concatenate(blocks, axis=-1)


def distance_to_identity(N):
    N = np.asarray(N, dtype=float)
    return frobenius_norm(N - np.eye(N.shape[-1]))
