"""THP / ER-THP / diagonal precoder construction and the modulo feedback chain.

Every scheme is described by the blocks of the generic chain::

    a --E--> (+) --modulo(tau)--> x~ --F--> x --H--> (+w) --G--> modulo(tau~) --> a^
              ^-------(I - B)-------'

where ``B`` is unit lower triangular, ``G`` is diagonal (one scalar per
receiver) and ``G H F B^{-1} E = I``. The modulo thresholds depend on the bit
allocation, so builders return blocks without thresholds and
:func:`with_thresholds` attaches them once bits are known.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular

from ._validation import check_bits, check_matrix
from .exceptions import DimensionError, SingularMatrixError
from .matrixcore import (
    SINGULAR_RTOL,
    Permutation,
    forced_order_qr,
    gram_schmidt_qr,
    lattice_reduced_qr,
)

ZF_TOL = 1e-9
POWER_TOL = 1e-12


class SchemeKind(enum.Enum):
    DP = "DP"
    THP = "THP"
    THP_ORDERED = "THP_ORDERED"
    ER_THP = "ER_THP"
    ER_THP_LR = "ER_THP_LR"
    ER_THP_LRVB = "ER_THP_LRVB"

    @property
    def equal_rate(self):
        return self in (SchemeKind.ER_THP, SchemeKind.ER_THP_LR, SchemeKind.ER_THP_LRVB)

    @property
    def lattice_reduced(self):
        return self in (SchemeKind.ER_THP_LR, SchemeKind.ER_THP_LRVB)


# -- modulo and constellation geometry -------------------------------------------

def modulo_reduce(x, tau):
    """Fold real and imaginary parts of ``x`` into ``[-tau/2, tau/2)``.

    Broadcasts over arrays; ``tau`` may be a scalar or per-entry array.
    """
    x = np.asarray(x)
    tau = np.asarray(tau, dtype=float)
    if np.any(tau <= 0):
        raise ValueError("tau must be positive")
    half = tau / 2

    def fold(v):
        r = np.mod(v + half, tau) - half
        return np.where(r >= half, r - tau, r)

    if np.iscomplexobj(x):
        out = fold(x.real) + 1j * fold(x.imag)
    else:
        out = fold(x)
    return out[()] if out.ndim == 0 else out


def square_order(b):
    """Size ``M'`` of the square QAM grid used for ``b`` bits (odd b doubles)."""
    b = check_bits(b)
    return 2 ** b if b % 2 == 0 else 2 ** (b + 1)


def tau_for_bits(b):
    """Modulo threshold of the unit-energy square constellation for ``b`` bits.

    ``tau = sqrt(M') d_min`` with ``d_min = sqrt(6 / (M' - 1))``, the minimum
    distance of unit mean energy square ``M'``-QAM.
    """
    M = square_order(b)
    return math.sqrt(M) * math.sqrt(6.0 / (M - 1))


def delta_e_linear(b):
    """Transmit energy increase caused by the modulo, ``M' / (M' - 1)``."""
    M = square_order(b)
    return M / (M - 1)


def delta_e_for_bits(b):
    """``delta_e_linear`` in dB."""
    return 10.0 * math.log10(delta_e_linear(b))


# -- blocks -----------------------------------------------------------------------

def _is_permutation_matrix(E):
    return (
        np.all((E == 0) | (E == 1))
        and np.all(E.sum(axis=0) == 1)
        and np.all(E.sum(axis=1) == 1)
    )


@dataclass(frozen=True, eq=False)
class PrecoderBlocks:
    """One scheme instance on one tone.

    Attributes
    ----------
    kind : SchemeKind
    e, b, f : ndarray
        Input transform, unit lower triangular feedback, feedforward.
    g_rx : ndarray
        Receiver scalars (the diagonal of ``G``).
    gain : float
        ``g`` of the equal-rate family / diagonal precoder, 1 otherwise.
    perm : Permutation
        Step -> line processing order.
    lr_transform : ndarray or None
        Unimodular ``T`` for lattice-reduced schemes.
    tau : ndarray or None
        Modulo thresholds per feedback position (``None`` until bits are set).
    tau_tilde : ndarray or None
        Receiver modulo thresholds per line.
    bits : ndarray or None
        Bits per line the thresholds were derived from.
    symbol_scale : ndarray or None
        Per-line constellation scaling applied by the transmitter.
    """

    kind: SchemeKind
    e: np.ndarray
    b: np.ndarray
    f: np.ndarray
    g_rx: np.ndarray
    gain: float
    perm: Permutation
    lr_transform: Optional[np.ndarray] = None
    tau: Optional[np.ndarray] = None
    tau_tilde: Optional[np.ndarray] = None
    bits: Optional[np.ndarray] = None
    symbol_scale: Optional[np.ndarray] = None

    def __post_init__(self):
        L = self.e.shape[0]
        for name in ("e", "b", "f"):
            if getattr(self, name).shape != (L, L):
                raise DimensionError(f"block {name} has shape {getattr(self, name).shape}, expected {(L, L)}")
        if not np.allclose(np.diag(self.b), 1.0, rtol=0, atol=1e-12) or np.any(np.triu(self.b, 1) != 0):
            raise ValueError("B must be unit-diagonal lower triangular")
        if self.kind in (SchemeKind.THP, SchemeKind.THP_ORDERED, SchemeKind.DP) and not _is_permutation_matrix(
            np.real_if_close(self.e)
        ):
            # G = T^-H diag(R)^-1 T^H would couple receivers
            raise ValueError(f"{self.kind.value} requires a permutation input transform (no lattice reduction)")

    @property
    def lines(self):
        return self.e.shape[0]

    @property
    def linear(self):
        return self.kind is SchemeKind.DP

    @property
    def g_matrix(self):
        return np.diag(self.g_rx)


def _diag_r(qr):
    return qr.r.diagonal().real


def _unit_feedback(B):
    # exact ones on the diagonal; the division leaves 1 +- ulp otherwise
    np.fill_diagonal(B, 1.0)
    return B


def _thp_blocks(kind, qr, E):
    R = qr.r
    d = _diag_r(qr)
    B = _unit_feedback(R.conj().T / d[:, None])
    g_rx = np.empty(len(d))
    g_rx[list(qr.perm.order)] = 1.0 / d
    return PrecoderBlocks(kind, E, B, qr.q.copy(), g_rx.astype(np.complex128), 1.0, qr.perm)


def build_reference_thp(H):
    """Reference THP: ``H^H = QR``, ``E = I``, ``B = diag(R)^-1 R^H``, ``F = Q``,
    ``G = diag(R)^-1``."""
    H = check_matrix(H, "H")
    qr = gram_schmidt_qr(H.conj().T)
    L = H.shape[0]
    d = _diag_r(qr)
    B = _unit_feedback(qr.r.conj().T / d[:, None])
    return PrecoderBlocks(
        SchemeKind.THP, np.eye(L, dtype=np.complex128), B, qr.q.copy(), (1.0 / d).astype(np.complex128), 1.0, qr.perm
    )


def build_ordered_thp(H, pi):
    """Ordered THP with the line order ``pi`` (step -> line).

    ``H^H = Q R P^T``; ``E = P^T``, ``B`` and ``F`` as in the reference scheme
    and ``G = P diag(R)^-1 P^T``, i.e. line ``pi[k]`` is scaled by ``1/r_kk``.
    """
    H = check_matrix(H, "H")
    if not isinstance(pi, Permutation):
        pi = Permutation(tuple(pi))
    qr = forced_order_qr(H.conj().T, pi)
    E = qr.perm.matrix().T.astype(np.complex128)
    return _thp_blocks(SchemeKind.THP_ORDERED, qr, E)


def build_er_thp(H, pi=None, lr_delta=None, lr_sorted=False):
    """Equal-rate THP, optionally ordered or lattice reduced.

    Parameters
    ----------
    H : array_like
        Channel matrix (rx x tx).
    pi : Permutation, optional
        Processing order for the plain ordered variant. Ignored when
        ``lr_delta`` is set.
    lr_delta : float, optional
        Run LLL with this parameter on ``H^H`` first (``E = T^H``).
    lr_sorted : bool
        After LLL, use sorted QR on the reduced basis (``E = P^T T^H``).

    Notes
    -----
    ``B = R^H diag(R)^-1``, ``F = Q diag(R)^-1 / g``, ``G = g I`` with
    ``g^2 = max_i sum_j |q_ij|^2 / r_jj^2`` so each line meets the per-line
    power limit with equality on the worst line.
    """
    H = check_matrix(H, "H")
    A = H.conj().T
    if lr_delta is not None:
        qr = lattice_reduced_qr(A, lr_delta, "sorted" if lr_sorted else "natural")
        kind = SchemeKind.ER_THP_LRVB if lr_sorted else SchemeKind.ER_THP_LR
        E = qr.perm.matrix().T @ qr.lr_transform.conj().T
    else:
        if lr_sorted:
            raise ValueError("lr_sorted requires lr_delta")
        qr = forced_order_qr(A, pi if pi is not None else Permutation.identity(A.shape[0]))
        kind = SchemeKind.ER_THP
        E = qr.perm.matrix().T
    d = _diag_r(qr)
    F_tilde = qr.q / d[None, :]
    g = math.sqrt(float(np.max(np.sum(np.abs(F_tilde) ** 2, axis=1))))
    B = _unit_feedback(qr.r.conj().T / d[None, :])
    L = A.shape[0]
    return PrecoderBlocks(
        kind,
        E.astype(np.complex128),
        B,
        F_tilde / g,
        np.full(L, g, dtype=np.complex128),
        g,
        qr.perm,
        lr_transform=qr.lr_transform,
    )


def build_dp(H):
    """Diagonal (linear) precoding.

    ``F = H^-1 diag(H) / g`` with ``g^2`` the largest squared row norm of
    ``H^-1 diag(H)``; receivers apply ``g / h_ii``. No feedback, no modulo.
    """
    H = check_matrix(H, "H")
    L = H.shape[0]
    h = np.diag(H)
    if np.any(h == 0):
        raise SingularMatrixError("channel has a zero direct-path gain")
    s = np.linalg.svd(H, compute_uv=False)
    if s[-1] < SINGULAR_RTOL * np.linalg.norm(H):
        raise SingularMatrixError("channel is numerically singular")
    F_tilde = np.linalg.solve(H, np.diag(h))
    g = math.sqrt(float(np.max(np.sum(np.abs(F_tilde) ** 2, axis=1))))
    eye = np.eye(L, dtype=np.complex128)
    return PrecoderBlocks(SchemeKind.DP, eye, eye.copy(), F_tilde / g, g / h, g, Permutation.identity(L))


# -- thresholds -------------------------------------------------------------------

#: Threshold bits used on feedback positions of lines carrying no data.
IDLE_BITS = 2


def with_thresholds(blocks, bits, precompensate=True):
    """Attach modulo thresholds derived from per-line ``bits``.

    A line with ``b`` bits uses the unit-energy ``b``-bit constellation,
    scaled by ``1/sqrt(delta_e)`` when ``precompensate`` is set so that the
    modulo output keeps unit energy. Lines with 0 bits send nothing but their
    feedback position still folds with the ``IDLE_BITS`` threshold.

    For lattice-reduced schemes ``E^-1`` mixes lines, so all lines must share
    one threshold.
    """
    bits = np.asarray(bits, dtype=int)
    L = blocks.lines
    if bits.shape != (L,):
        raise DimensionError(f"need {L} bit counts, got shape {bits.shape}")
    if np.any((bits < 0) | (bits > 12)):
        raise ValueError("bits must lie in [0, 12]")
    eff = np.where(bits > 0, bits, IDLE_BITS)
    scale = np.array([1.0 / math.sqrt(delta_e_linear(b)) if precompensate else 1.0 for b in eff])
    if blocks.linear:
        return replace(blocks, bits=bits, symbol_scale=np.ones(L))
    tau_line = np.array([tau_for_bits(b) for b in eff]) * scale
    E = np.real_if_close(blocks.e)
    if _is_permutation_matrix(E):
        # position k carries the data of the line selected by row k of E
        tau_pos = tau_line[np.argmax(E, axis=1)]
    else:
        if np.ptp(tau_line) != 0:
            raise ValueError("lattice-reduced schemes need the same bit count on every line")
        tau_pos = tau_line.copy()
    return replace(blocks, tau=tau_pos, tau_tilde=tau_line, bits=bits, symbol_scale=scale)


# -- chain ------------------------------------------------------------------------

def precode(blocks, a, return_internal=False, dither=None):
    """Run the transmitter: feedback loop with modulo, then ``F``.

    Parameters
    ----------
    blocks : PrecoderBlocks
        With thresholds attached (unless the scheme is linear).
    a : array_like, shape (L,) or (n, L)
        Data symbols per line, already scaled into their boxes.
    return_internal : bool
        Also return the modulo outputs ``x~`` (feedback positions) and the
        modulo inputs.
    dither : array_like, optional
        Added to the modulo input of every feedback position, same shape as
        ``a``. The receiver must remove ``E^-1 dither`` before its modulo.

    Returns
    -------
    x : ndarray
        Transmit vectors, same shape as ``a``.
    """
    a = np.asarray(a, dtype=np.complex128)
    single = a.ndim == 1
    A = np.atleast_2d(a)
    if A.shape[1] != blocks.lines:
        raise DimensionError(f"symbol vectors of length {A.shape[1]} for {blocks.lines} lines")
    U = A @ blocks.e.T
    if dither is not None:
        if blocks.linear:
            raise ValueError("dither needs a modulo chain")
        D = np.atleast_2d(np.asarray(dither, dtype=np.complex128))
        if D.shape != U.shape:
            raise DimensionError(f"dither shape {D.shape} does not match symbols {U.shape}")
        U = U + D
    if blocks.linear:
        Xt, V = U, U
    else:
        if blocks.tau is None:
            raise ValueError("thresholds not set; call with_thresholds first")
        L = blocks.lines
        Xt = np.empty_like(U)
        V = np.empty_like(U)
        for k in range(L):
            v = U[:, k] - Xt[:, :k] @ blocks.b[k, :k] if k else U[:, k].copy()
            V[:, k] = v
            Xt[:, k] = modulo_reduce(v, blocks.tau[k])
    X = Xt @ blocks.f.T
    if single:
        X, Xt, V = X[0], Xt[0], V[0]
    return (X, Xt, V) if return_internal else X


@dataclass(frozen=True)
class SnrProfile:
    gamma: np.ndarray
    gamma_base: float


def snr_profile(blocks, gamma_base):
    """Per-line output SNR ``gamma_base / |G_ii|^2``.

    With ``G H F B^-1 E = I`` the decision variable of line ``i`` is the data
    plus ``G_ii w_i``; this reduces to ``gamma_base r^2`` for (ordered) THP,
    ``gamma_base / g^2`` for the equal-rate family and
    ``gamma_base |h_ii|^2 / g^2`` for diagonal precoding.
    """
    gamma = gamma_base / np.abs(blocks.g_rx) ** 2
    return SnrProfile(gamma, float(gamma_base))


def verify_zf(blocks, H):
    """``max |G H F B^-1 E - I|`` over all entries."""
    H = check_matrix(H, "H")
    FBinv = solve_triangular(blocks.b.T, blocks.f.T, lower=False).T  # F B^{-1}
    M = blocks.g_rx[:, None] * (H @ FBinv @ blocks.e)
    return float(np.max(np.abs(M - np.eye(blocks.lines))))


def row_power(blocks):
    """Squared row norms of ``F`` (per-line power with unit-energy ``x~``)."""
    return np.sum(np.abs(blocks.f) ** 2, axis=1)
