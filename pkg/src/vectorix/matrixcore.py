"""Ordered QR decompositions and complex lattice reduction.

All decompositions factor a square matrix ``A`` column by column with
modified Gram-Schmidt. The order in which columns enter the procedure is
recorded as a :class:`Permutation` ``perm`` with ``perm[k]`` the column
consumed at step ``k``, so that ``A[:, perm] == Q @ R``. Equivalently
``A == Q @ R @ P.T`` with ``P = perm.matrix()``.

Indices are 0-based throughout.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ._validation import check_matrix
from .exceptions import DimensionError, LLLConvergenceError, SingularMatrixError

#: Residual norms below this fraction of ``||A||_F`` are treated as singular.
SINGULAR_RTOL = 1e-12

#: Relative slack used when comparing max-min values of competing orders.
TIE_RTOL = 1e-12

MAX_EXHAUSTIVE_DIM = 8


@dataclass(frozen=True)
class Permutation:
    """Processing order of ``len(order)`` lines.

    ``order[k]`` is the physical line handled at step ``k``.
    """

    order: tuple

    def __post_init__(self):
        order = tuple(int(i) for i in self.order)
        if sorted(order) != list(range(len(order))):
            raise ValueError(f"not a permutation of 0..{len(order) - 1}: {order}")
        object.__setattr__(self, "order", order)

    @classmethod
    def identity(cls, n):
        return cls(tuple(range(n)))

    def __len__(self):
        return len(self.order)

    def __iter__(self):
        return iter(self.order)

    def __getitem__(self, k):
        return self.order[k]

    @property
    def positions(self):
        """``positions[i]`` is the step at which line ``i`` is processed."""
        pos = [0] * len(self.order)
        for k, line in enumerate(self.order):
            pos[line] = k
        return tuple(pos)

    def inverse(self):
        return Permutation(self.positions)

    def matrix(self):
        """Permutation matrix ``P`` with ``P[i, positions[i]] = 1``.

        With this convention ``X @ P.T`` reorders columns so that column ``k``
        of ``X[:, order]`` lands back at column ``order[k]``, and ``P @ v``
        gathers ``v[positions[i]]`` into entry ``i``.
        """
        n = len(self.order)
        P = np.zeros((n, n))
        P[np.arange(n), self.positions] = 1.0
        return P

    def is_identity(self):
        return self.order == tuple(range(len(self.order)))


@dataclass(frozen=True, eq=False)
class QrFactorization:
    """``A = Q R P^T T^{-1}`` (``T`` only present after lattice reduction).

    Attributes
    ----------
    q : ndarray
        Unitary factor.
    r : ndarray
        Upper triangular with real non-negative diagonal.
    perm : Permutation
        Column processing order.
    lr_transform : ndarray or None
        Unimodular Gaussian-integer matrix ``T`` (integer-valued complex128).
    """

    q: np.ndarray
    r: np.ndarray
    perm: Permutation
    lr_transform: Optional[np.ndarray] = None

    @property
    def diag(self):
        return self.r.diagonal().real.copy()

    @property
    def min_r2(self):
        return float(np.min(self.diag) ** 2)

    def reconstruct(self):
        A = self.q @ self.r @ self.perm.matrix().T
        if self.lr_transform is not None:
            A = A @ np.linalg.inv(self.lr_transform)
        return A


def _ordered_mgs(A, rule="none", forced=None):
    A = check_matrix(A)
    n = A.shape[0]
    if forced is not None and len(forced) != n:
        raise DimensionError(f"permutation of length {len(forced)} for a {n}x{n} matrix")
    scale = np.linalg.norm(A)
    V = A.copy()
    Q = np.zeros((n, n), dtype=np.complex128)
    C = np.zeros((n, n), dtype=np.complex128)  # C[k, col]: projections by physical column
    remaining = list(range(n))
    order = []
    for k in range(n):
        W = V[:, remaining]
        norms2 = np.sum(W.real ** 2 + W.imag ** 2, axis=0)
        if forced is not None:
            idx = remaining.index(forced[k])
        elif rule == "min":
            idx = int(np.argmin(norms2))
        elif rule == "max":
            idx = int(np.argmax(norms2))
        else:
            idx = 0
        col = remaining.pop(idx)
        r = np.sqrt(norms2[idx])
        if not r >= SINGULAR_RTOL * scale or scale == 0:
            raise SingularMatrixError(
                f"residual norm {r:.3e} at step {k} below {SINGULAR_RTOL:g} x ||A||_F"
            )
        q = V[:, col] / r
        Q[:, k] = q
        C[k, col] = r
        order.append(col)
        if remaining:
            coeffs = q.conj() @ V[:, remaining]
            C[k, remaining] = coeffs
            V[:, remaining] -= np.outer(q, coeffs)
    R = C[:, order]
    return QrFactorization(Q, R, Permutation(tuple(order)))


def gram_schmidt_qr(A):
    """Modified Gram-Schmidt QR in natural column order."""
    return _ordered_mgs(A)


def sorted_qr(A):
    """Sorted QR: at every step take the column with the smallest residual.

    This is the "weakest first" V-BLAST heuristic. Ties go to the lowest
    column index.
    """
    return _ordered_mgs(A, rule="min")


def pivoted_qr(A):
    """QR with column pivoting: always take the largest residual column."""
    return _ordered_mgs(A, rule="max")


def forced_order_qr(A, pi):
    """MGS QR consuming the columns of ``A`` in the order ``pi``.

    Uses exactly the arithmetic of :func:`sorted_qr`, so forcing the order that
    ``sorted_qr`` picked reproduces its factors bit for bit.
    """
    if not isinstance(pi, Permutation):
        pi = Permutation(tuple(pi))
    return _ordered_mgs(A, forced=pi.order)


def exhaustive_maxmin_order(A):
    """Brute-force the column order maximizing ``min_i r_ii^2``.

    Intended as a test oracle. Orders are scanned lexicographically and a
    later order must beat the incumbent by more than ``TIE_RTOL`` to replace
    it, so ties resolve to the lexicographically smallest order.
    """
    A = check_matrix(A)
    n = A.shape[0]
    if n > MAX_EXHAUSTIVE_DIM:
        raise DimensionError(f"exhaustive search limited to n <= {MAX_EXHAUSTIVE_DIM}, got {n}")
    best, best_val = None, -np.inf
    for order in itertools.permutations(range(n)):
        val = _ordered_mgs(A, forced=order).min_r2
        if best is None or val > best_val * (1 + TIE_RTOL):
            best, best_val = order, val
    return Permutation(best)


# -- lattice reduction -------------------------------------------------------

def _round_gaussian(z):
    return complex(np.floor(z.real + 0.5), np.floor(z.imag + 0.5))


def _positive_r(A):
    R = np.linalg.qr(A, mode="r")
    d = R.diagonal()
    phase = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1), 1)
    return R * phase.conj()[:, None]


def lll_reduce(A, delta=0.75):
    """Complex LLL reduction of the columns of ``A``.

    Works directly on the Gaussian-integer lattice spanned by the columns
    (no real-valued embedding), rounding projections to the nearest
    Gaussian integer.

    Parameters
    ----------
    A : array_like, shape (n, n)
        Nonsingular basis, one basis vector per column.
    delta : float
        Lovász parameter in (0.5, 1].

    Returns
    -------
    T : ndarray
        Unimodular matrix with Gaussian-integer entries (integer-valued
        complex128).
    reduced : ndarray
        ``A @ T``.

    Raises
    ------
    LLLConvergenceError
        After ``64 n^2`` column swaps.
    """
    A = check_matrix(A)
    if not 0.5 < delta <= 1.0:
        raise ValueError(f"delta must lie in (0.5, 1], got {delta}")
    n = A.shape[0]
    scale = np.linalg.norm(A)
    R = _positive_r(A)
    if np.min(np.abs(R.diagonal())) < SINGULAR_RTOL * scale:
        raise SingularMatrixError("basis is numerically singular")
    T = np.eye(n, dtype=np.complex128)

    def size_reduce(l, k):
        mu = _round_gaussian(R[l, k] / R[l, l])
        if mu != 0:
            R[: l + 1, k] -= mu * R[: l + 1, l]
            T[:, k] -= mu * T[:, l]

    max_swaps = 64 * n * n
    swaps = 0
    k = 1
    while k < n:
        size_reduce(k - 1, k)
        lhs = delta * abs(R[k - 1, k - 1]) ** 2
        rhs = abs(R[k, k]) ** 2 + abs(R[k - 1, k]) ** 2
        if lhs > rhs + 1e-12 * lhs:
            swaps += 1
            if swaps > max_swaps:
                raise LLLConvergenceError(f"no convergence after {max_swaps} swaps")
            R[:, [k - 1, k]] = R[:, [k, k - 1]]
            T[:, [k - 1, k]] = T[:, [k, k - 1]]
            a, c = R[k - 1, k - 1], R[k, k - 1]
            nrm = np.hypot(abs(a), abs(c))
            G = np.array([[a.conjugate(), c.conjugate()], [-c, a]]) / nrm
            R[k - 1 : k + 1, k - 1 :] = G @ R[k - 1 : k + 1, k - 1 :]
            R[k - 1, k - 1] = nrm
            R[k, k - 1] = 0.0
            ph = R[k, k] / abs(R[k, k])
            R[k, k:] *= ph.conjugate()
            R[k, k] = abs(R[k, k])
            k = max(k - 1, 1)
        else:
            for l in range(k - 2, -1, -1):
                size_reduce(l, k)
            k += 1
    return T, A @ T


def lattice_reduced_qr(A, delta=0.75, order="natural"):
    """LLL-reduce the columns of ``A`` then QR-factor the reduced basis.

    ``order`` is ``"natural"`` or ``"sorted"`` (sorted QR after reduction).
    The result satisfies ``A = Q R P^T T^{-1}``.
    """
    T, reduced = lll_reduce(A, delta)
    if order == "natural":
        qr = gram_schmidt_qr(reduced)
    elif order == "sorted":
        qr = sorted_qr(reduced)
    else:
        raise ValueError(f"unknown order {order!r}")
    return QrFactorization(qr.q, qr.r, qr.perm, lr_transform=T)


# -- exact Gaussian-integer arithmetic ----------------------------------------

def _gi(z):
    re, im = float(np.real(z)), float(np.imag(z))
    if re != int(re) or im != int(im):
        raise ValueError(f"{z!r} is not a Gaussian integer")
    return int(re), int(im)


def _gmul(a, b):
    return a[0] * b[0] - a[1] * b[1], a[0] * b[1] + a[1] * b[0]


def _gsub(a, b):
    return a[0] - b[0], a[1] - b[1]


def _gdiv_exact(a, b):
    den = b[0] * b[0] + b[1] * b[1]
    num = _gmul(a, (b[0], -b[1]))
    if num[0] % den or num[1] % den:
        raise ArithmeticError("inexact Gaussian-integer division")
    return num[0] // den, num[1] // den


def is_gaussian_integer_matrix(T):
    T = np.asarray(T)
    return bool(np.all(T.real == np.round(T.real)) and np.all(T.imag == np.round(T.imag)))


def gaussian_int_det(T: Sequence) -> complex:
    """Exact determinant of a Gaussian-integer matrix (fraction-free Bareiss)."""
    M = [[_gi(z) for z in row] for row in np.asarray(T)]
    n = len(M)
    sign = 1
    prev = (1, 0)
    for k in range(n - 1):
        if M[k][k] == (0, 0):
            for i in range(k + 1, n):
                if M[i][k] != (0, 0):
                    M[k], M[i] = M[i], M[k]
                    sign = -sign
                    break
            else:
                return 0j
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                num = _gsub(_gmul(M[i][j], M[k][k]), _gmul(M[i][k], M[k][j]))
                M[i][j] = _gdiv_exact(num, prev)
        prev = M[k][k]
    re, im = M[n - 1][n - 1]
    return complex(sign * re, sign * im)
