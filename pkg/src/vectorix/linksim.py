"""Symbol-level Monte Carlo of the whole chain: map, precode, channel, receive,
modulo, demap.

Constellations live on a square grid of ``M'`` points per dimension pair
(``M' = 2^b`` for even ``b``, ``2^(b+1)`` for odd ``b``). Odd-bit variants keep
the checkerboard half of the grid (points whose two grid indices have even
sum), which is still periodic under shifts by the modulo threshold and has
the same energy, threshold and modulo energy increase as the full grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from ._validation import check_bits, check_matrix
from .bitloading import GapParams
from .exceptions import DimensionError, InvariantError, LLLConvergenceError, SingularMatrixError
from .precoding import (
    IDLE_BITS,
    ZF_TOL,
    precode,
    square_order,
    tau_for_bits,
    verify_zf,
    with_thresholds,
)


def _gray(n):
    return n ^ (n >> 1)


def _gray_inverse(g):
    n = np.array(g, copy=True)
    shift = 1
    while np.any(g >> shift):
        n ^= g >> shift
        shift += 1
    return n


@dataclass(frozen=True)
class Constellation:
    """Square QAM constellation for ``bits`` bits, optionally scaled.

    With ``scale = 1`` the points have unit mean energy and lie in the
    ``tau x tau`` box centred at the origin.

    Attributes
    ----------
    bits : int
    scale : float
    """

    bits: int
    scale: float = 1.0

    def __post_init__(self):
        check_bits(self.bits)
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    @property
    def side(self):
        """Grid points per dimension."""
        return int(round(math.sqrt(square_order(self.bits))))

    @property
    def odd(self):
        return self.bits % 2 == 1

    @property
    def tau(self):
        return tau_for_bits(self.bits) * self.scale

    @property
    def spacing(self):
        """Grid spacing (distance between neighbouring grid positions on one axis)."""
        return self.tau / self.side

    @property
    def d_min(self):
        return self.spacing * (math.sqrt(2.0) if self.odd else 1.0)

    @property
    def size(self):
        return 2 ** self.bits

    def _indices(self, groups):
        """Bit groups -> grid index pairs (row on the real axis, col on the imaginary)."""
        g = np.asarray(groups, dtype=np.int64)
        if np.any((g < 0) | (g >= self.size)):
            raise ValueError(f"bit groups must lie in [0, {self.size})")
        m = self.side
        if not self.odd:
            half = self.bits // 2
            return _gray(g >> half), _gray(g & (m - 1))
        low_bits = self.bits // 2  # m/2 values along the thinned axis
        j = _gray(g >> low_bits)
        t = _gray(g & ((m >> 1) - 1))
        return 2 * t + (j & 1), j

    def _groups(self, i, j):
        m = self.side
        if not self.odd:
            return (_gray_inverse(i) << (self.bits // 2)) | _gray_inverse(j)
        return (_gray_inverse(j) << (self.bits // 2)) | _gray_inverse((i - (j & 1)) >> 1)

    def _coord(self, idx):
        return (idx + 0.5) * self.spacing - self.tau / 2

    @property
    def points(self):
        """All points, indexed by bit group."""
        return self.map(np.arange(self.size))

    def map(self, groups):
        i, j = self._indices(groups)
        return self._coord(i) + 1j * self._coord(j)

    def demap(self, y, wrap=True):
        """Nearest-point decision.

        With ``wrap`` distances are taken on the torus of period ``tau`` (the
        receiver modulo already folded ``y``); otherwise ``y`` is clipped to the
        outermost grid positions first.
        """
        y = np.asarray(y, dtype=np.complex128)
        m = self.side
        u = (y.real + self.tau / 2) / self.spacing - 0.5
        v = (y.imag + self.tau / 2) / self.spacing - 0.5
        if not wrap:
            u = np.clip(u, 0, m - 1)
            v = np.clip(v, 0, m - 1)
        i = np.floor(u + 0.5)
        j = np.floor(v + 0.5)
        if self.odd:
            # checkerboard: if the rounded point is off-lattice, move the
            # coordinate with the larger rounding error the other way
            bad = (i + j) % 2 != 0
            eu, ev = u - i, v - j
            flip_u = bad & (np.abs(eu) >= np.abs(ev))
            flip_v = bad & ~flip_u
            i = i + np.where(flip_u, np.where(eu >= 0, 1, -1), 0)
            j = j + np.where(flip_v, np.where(ev >= 0, 1, -1), 0)
            if not wrap:
                # clipping can push the flip outside; step back inward by two
                i = np.where(i > m - 1, i - 2, np.where(i < 0, i + 2, i))
                j = np.where(j > m - 1, j - 2, np.where(j < 0, j + 2, j))
        i = np.mod(i, m).astype(np.int64)
        j = np.mod(j, m).astype(np.int64)
        return self._groups(i, j)


def qam_map(groups, constellation):
    """Bit groups (integers in ``[0, 2^b)``) -> constellation points."""
    return constellation.map(groups)


def qam_demap(symbols, constellation, wrap=True):
    """Constellation points (possibly noisy) -> nearest bit groups."""
    return constellation.demap(symbols, wrap=wrap)


@dataclass(frozen=True, eq=False)
class LinkReport:
    """Outcome of one :func:`run_link` call.

    Attributes
    ----------
    symbol_errors : ndarray of int, shape (L,)
        Zero for idle lines.
    n_symbols : int
    active : ndarray of bool
        Lines carrying data.
    tx_power : ndarray
        Empirical ``E|x_i|^2`` per physical line.
    tx_power_se : ndarray
        Standard error of ``tx_power``.
    delta_e_db : ndarray
        Per feedback position, empirical modulo output power over the nominal
        power of the modulo's data input ``(E a)_k``, in dB; NaN where that
        input is empty. Position 0 only wraps under dither.
    zf_residual : float
        ``max |G H F B^-1 E - I|``.
    """

    symbol_errors: np.ndarray
    n_symbols: int
    active: np.ndarray
    tx_power: np.ndarray
    tx_power_se: np.ndarray
    delta_e_db: np.ndarray
    zf_residual: float

    @property
    def ser(self):
        return self.symbol_errors / max(self.n_symbols, 1)

    @property
    def total_errors(self):
        return int(self.symbol_errors.sum())


def _constellations(blocks, bits):
    eff = np.where(bits > 0, bits, IDLE_BITS)
    return [Constellation(int(b), float(s)) for b, s in zip(eff, blocks.symbol_scale)]


def run_link(H, blocks, bits, n_symbols, noise_variance=0.0, seed=None, dither=False):
    """Simulate ``n_symbols`` channel uses of one tone.

    Parameters
    ----------
    H : array_like, shape (L, L)
    blocks : PrecoderBlocks
        Thresholds are attached from ``bits`` when missing; if present they
        must have been derived from the same ``bits``.
    bits : array_like of int, shape (L,)
        0 marks an idle line (sends zeros, not checked).
    n_symbols : int
    noise_variance : float
        ``E|w_i|^2`` of the circular Gaussian receiver noise.
    seed : int, SeedSequence or Generator, optional
    dither : bool
        Add a pseudo-random dither, uniform over each feedback position's
        box, to the modulo inputs and remove it at the receivers. The modulo
        outputs then are exactly uniform and mutually independent, so the
        per-line power equals the squared row norm of ``F``. Without it that
        only holds approximately and fails for small constellations with weak
        feedback. Ignored for the linear scheme.

    Returns
    -------
    LinkReport
    """
    H = check_matrix(H, "H")
    L = blocks.lines
    if H.shape != (L, L):
        raise DimensionError(f"channel is {H.shape}, blocks are for {L} lines")
    bits = np.asarray(bits, dtype=int)
    if bits.shape != (L,):
        raise DimensionError(f"need {L} bit counts, got shape {bits.shape}")
    if blocks.bits is None:
        blocks = with_thresholds(blocks, bits)
    elif not np.array_equal(blocks.bits, bits):
        raise ValueError("blocks carry thresholds for a different bit allocation")
    if noise_variance < 0:
        raise ValueError("noise_variance must be non-negative")
    n = int(n_symbols)
    if n < 1:
        raise ValueError("n_symbols must be positive")

    rng = np.random.default_rng(seed)
    cons = _constellations(blocks, bits)
    active = bits > 0
    groups = np.zeros((n, L), dtype=np.int64)
    a = np.zeros((n, L), dtype=np.complex128)
    for i, c in enumerate(cons):
        if active[i]:
            groups[:, i] = rng.integers(0, c.size, n)
            a[:, i] = c.map(groups[:, i])

    d = None
    if dither and not blocks.linear:
        box = rng.uniform(-0.5, 0.5, (n, L)) + 1j * rng.uniform(-0.5, 0.5, (n, L))
        d = box * blocks.tau[None, :]
    x, xt, _ = precode(blocks, a, return_internal=True, dither=d)
    y = x @ H.T
    if noise_variance > 0:
        w = rng.standard_normal((n, L)) + 1j * rng.standard_normal((n, L))
        y = y + math.sqrt(noise_variance / 2) * w
    yhat = y * blocks.g_rx[None, :]
    if d is not None:
        yhat = yhat - np.linalg.solve(blocks.e, d.T).T

    errors = np.zeros(L, dtype=int)
    for i, c in enumerate(cons):
        if not active[i]:
            continue
        if blocks.linear:
            dec = c.demap(yhat[:, i], wrap=False)
        else:
            # fold with the receiver threshold; the decision is then on the torus
            dec = c.demap(yhat[:, i], wrap=True)
        errors[i] = int(np.count_nonzero(dec != groups[:, i]))

    # nominal power of (E a)_k: independent zero-mean lines, unit-energy
    # constellations shrunk by symbol_scale
    line_power = np.where(active, np.asarray(blocks.symbol_scale) ** 2, 0.0)
    in_power = (np.abs(blocks.e) ** 2) @ line_power
    out_power = np.mean(np.abs(xt) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        de = np.where(in_power > 0, 10 * np.log10(out_power / np.where(in_power > 0, in_power, 1.0)), np.nan)
    p = np.abs(x) ** 2
    return LinkReport(
        symbol_errors=errors,
        n_symbols=n,
        active=active,
        tx_power=np.mean(p, axis=0),
        tx_power_se=np.std(p, axis=0) / math.sqrt(n),
        delta_e_db=de,
        zf_residual=verify_zf(blocks, H),
    )


@dataclass(frozen=True, eq=False)
class E2ESummary:
    """Aggregate of :func:`run_link` over the tones of a channel set."""

    scheme: str
    tones: List[int]
    symbol_errors: np.ndarray
    symbols: np.ndarray
    max_zf_residual: float
    max_tx_power: float
    noise_variance: float
    skipped: List[int] = field(default_factory=list)

    @property
    def ser(self):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.symbols > 0, self.symbol_errors / np.maximum(self.symbols, 1), 0.0)

    @property
    def total_errors(self):
        return int(self.symbol_errors.sum())


def verify_e2e(
    channels, scheme, gap=GapParams(), n_symbols=1000, seed=0, noise=False, tone_stride=1, report=None, dither=False
):
    """Drive :func:`run_link` over every ``tone_stride``-th tone with the
    bit allocation that :func:`~vectorix.evaluate.evaluate_scheme` assigns.

    Each tone draws from its own stream ``SeedSequence([seed, tone])``. With
    ``noise=False`` any symbol error or ZF residual above ``ZF_TOL`` raises
    :class:`InvariantError`; with ``noise=True`` the default noise level
    ``1 / gamma_base`` is applied and errors are only reported.

    ``report`` may pass a precomputed :class:`RateReport` for ``scheme``.
    """
    from .evaluate import build_blocks, evaluate_scheme, parse_scheme

    if isinstance(scheme, str):
        scheme = parse_scheme(scheme)
    if report is None:
        report = evaluate_scheme(channels, scheme, gap)
    L = channels.lines
    noise_variance = 1.0 / gap.gamma_base if noise else 0.0
    errors = np.zeros(L, dtype=np.int64)
    symbols = np.zeros(L, dtype=np.int64)
    tones, skipped = [], []
    max_zf = 0.0
    max_pow = 0.0
    failed = set(report.failed_tones)
    for k in range(0, len(channels), int(tone_stride)):
        bits = report.bits[:, k]
        if k in failed or not bits.any():
            skipped.append(k)
            continue
        try:
            blocks = build_blocks(channels[k], scheme, report.perms[k])
        except (SingularMatrixError, LLLConvergenceError):
            skipped.append(k)
            continue
        rep = run_link(
            channels[k], blocks, bits, n_symbols, noise_variance, np.random.SeedSequence([int(seed), k]), dither
        )
        tones.append(k)
        errors += rep.symbol_errors
        symbols += np.where(rep.active, n_symbols, 0)
        max_zf = max(max_zf, rep.zf_residual)
        max_pow = max(max_pow, float(rep.tx_power.max()))
        if not noise:
            if rep.zf_residual > ZF_TOL:
                raise InvariantError("zero-forcing", f"tone {k}: residual {rep.zf_residual:.3e}")
            if rep.total_errors:
                raise InvariantError("noise-free round trip", f"tone {k}: {rep.total_errors} symbol errors")
    return E2ESummary(report.scheme, tones, errors, symbols, max_zf, max_pow, noise_variance, skipped)
