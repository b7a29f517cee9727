"""Independent reference computations used only by the tests.

Nothing here imports the code under test.
"""
import itertools

import numpy as np


def householder_qr(A):
    """Textbook complex Householder QR with the diagonal of R made real positive."""
    A = np.array(A, dtype=np.complex128)
    n = A.shape[0]
    R = A.copy()
    Q = np.eye(n, dtype=np.complex128)
    for k in range(n - 1):
        x = R[k:, k]
        alpha = -np.exp(1j * np.angle(x[0])) * np.linalg.norm(x)
        v = x.copy()
        v[0] -= alpha
        nv = np.linalg.norm(v)
        if nv == 0:
            continue
        v /= nv
        R[k:, :] -= 2.0 * np.outer(v, v.conj() @ R[k:, :])
        Q[:, k:] -= 2.0 * np.outer(Q[:, k:] @ v, v.conj())
    phase = np.exp(1j * np.angle(np.diag(R)))
    R = phase.conj()[:, None] * R
    Q = Q * phase[None, :]
    return Q, R


def classical_residual_norms(A, chosen):
    """Norm of every not-yet-chosen column after projecting out the chosen ones.

    Plain classical Gram-Schmidt on the chosen columns, evaluated for each
    candidate column separately.
    """
    A = np.asarray(A, dtype=np.complex128)
    basis = []
    for c in chosen:
        v = A[:, c].copy()
        for q in basis:
            v = v - (q.conj() @ A[:, c]) * q
        for q in basis:  # re-orthogonalize once
            v = v - (q.conj() @ v) * q
        basis.append(v / np.linalg.norm(v))
    out = {}
    for j in range(A.shape[1]):
        if j in chosen:
            continue
        v = A[:, j].copy()
        for q in basis:
            v = v - (q.conj() @ v) * q
        out[j] = np.linalg.norm(v)
    return out


def maxmin_r2_bruteforce(A):
    """Best ``min r_ii^2`` over all column orders, via Householder QR."""
    A = np.asarray(A, dtype=np.complex128)
    n = A.shape[0]
    best = -np.inf
    for order in itertools.permutations(range(n)):
        _, R = householder_qr(A[:, list(order)])
        best = max(best, np.min(np.abs(np.diag(R))) ** 2)
    return best


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def regression_channels(n, L, seed=7):
    """Fixed set of i.i.d. complex Gaussian channels used for regression checks."""
    rng = np.random.default_rng(seed)
    return [crandn(rng, L, L) for _ in range(n)]


def lll_conditions_hold(reduced, delta, tol=1e-9):
    """Size reduction and the Lovasz condition, checked on an independent Householder R."""
    _, R = householder_qr(reduced)
    n = R.shape[0]
    for k in range(n):
        for l in range(k):
            mu = R[l, k] / R[l, l]
            if abs(mu.real) > 0.5 + tol or abs(mu.imag) > 0.5 + tol:
                return False
    for k in range(1, n):
        lhs = delta * abs(R[k - 1, k - 1]) ** 2
        rhs = abs(R[k, k]) ** 2 + abs(R[k - 1, k]) ** 2
        if lhs > rhs * (1 + tol):
            return False
    return True
