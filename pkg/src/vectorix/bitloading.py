"""Gap-formula bit loading with modulo-energy correction, and rate aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .precoding import delta_e_linear

MAX_CORRECTION_ITERATIONS = 8


@dataclass(frozen=True)
class GapParams:
    """Bit-loading parameters; defaults are the standard link budget.

    ``gap_db = shannon_gap_db + margin_db - coding_gain_db``. The baseline SNR
    is the transmit PSD over the noise PSD (-76 - (-140) = 64 dB).
    """

    shannon_gap_db: float = 9.8
    margin_db: float = 6.0
    coding_gain_db: float = 5.0
    b_min: int = 2
    b_max: int = 12
    gamma_base_db: float = 64.0
    framing_overhead: float = 0.12

    def __post_init__(self):
        if not 1 <= self.b_min <= self.b_max <= 12:
            raise ValueError(f"need 1 <= b_min <= b_max <= 12, got {self.b_min}, {self.b_max}")
        if not 0 <= self.framing_overhead < 1:
            raise ValueError("framing_overhead must lie in [0, 1)")

    @classmethod
    def from_psd(cls, transmit_psd_dbm_hz=-76.0, noise_psd_dbm_hz=-140.0, **kw):
        return cls(gamma_base_db=transmit_psd_dbm_hz - noise_psd_dbm_hz, **kw)

    @property
    def gap_db(self):
        return self.shannon_gap_db + self.margin_db - self.coding_gain_db

    @property
    def gap(self):
        return 10.0 ** (self.gap_db / 10.0)

    @property
    def gamma_base(self):
        return 10.0 ** (self.gamma_base_db / 10.0)


def gap_bits(gamma, gap=GapParams()):
    """``floor(log2(1 + gamma / Gap))``, zeroed below ``b_min``, capped at ``b_max``.

    Works elementwise on arrays; returns an ``int`` for scalar input.
    """
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("SNR must be non-negative")
    b = np.floor(np.log2(1.0 + g / gap.gap)).astype(int)
    b = np.where(b < gap.b_min, 0, np.minimum(b, gap.b_max))
    return int(b) if b.ndim == 0 else b


def _gap_bits_scalar(gamma, gap_lin, b_min, b_max):
    b = int(math.floor(math.log2(1.0 + gamma / gap_lin)))
    if b < b_min:
        return 0
    return min(b, b_max)


def _corrected_scalar(gamma, gap_lin, b_min, b_max):
    seq = [_gap_bits_scalar(gamma, gap_lin, b_min, b_max)]
    for _ in range(MAX_CORRECTION_ITERATIONS):
        b = seq[-1]
        de = delta_e_linear(b) if b > 0 else 1.0
        nxt = _gap_bits_scalar(gamma / de, gap_lin, b_min, b_max)
        if nxt == b:
            return b
        if nxt in seq:
            return min(seq[seq.index(nxt):])
        seq.append(nxt)
    return min(seq[-2:])


def corrected_bits(gamma, gap=GapParams()):
    """Bit allocation that still holds after paying the modulo energy increase.

    Starts from :func:`gap_bits`, then repeatedly re-loads with the SNR
    divided by the energy increase of the current allocation. Stops at a fixed
    point; if the allocation oscillates the smallest value of the cycle is
    kept. At most ``MAX_CORRECTION_ITERATIONS`` re-loads.
    """
    g = np.asarray(gamma, dtype=float)
    if np.any(g < 0):
        raise ValueError("SNR must be non-negative")
    args = (gap.gap, gap.b_min, gap.b_max)
    if g.ndim == 0:
        return _corrected_scalar(float(g), *args)
    flat = [_corrected_scalar(v, *args) for v in g.ravel()]
    return np.array(flat, dtype=int).reshape(g.shape)


def aggregate(bits, delta_f, framing_overhead=0.12):
    """Rate in Mbps: bits summed over the last (tone) axis times ``delta_f (1 - overhead)``."""
    bits = np.asarray(bits)
    total = bits.sum(axis=-1)
    return total * delta_f * (1.0 - framing_overhead) / 1e6
