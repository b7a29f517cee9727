"""Per-tone channel matrices: containers, text I/O and a synthetic cable.

File format (``vectorix-channel v1``)::

    # vectorix-channel v1, L=<n>, f_start=<Hz>, delta_f=<Hz>, count=<n>
    tone_index,rx_line,tx_line,re,im
    ...

Indices are 0-based, floats are written with 17 significant digits so a
save/load round trip is bit exact, and all ``L*L`` entries of every tone must
be present.
"""
from __future__ import annotations

import csv
import math
import re
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_channel_stack, check_matrix, check_positive
from .exceptions import ChannelFormatError, DimensionError, SingularMatrixError
from .matrixcore import sorted_qr

#: Default band and tone spacing.
BAND_START_HZ = 2.1e6
BAND_END_HZ = 212e6
TONE_SPACING_HZ = 51.75e3

_HEADER_RE = re.compile(
    r"^#\s*vectorix-channel v1,\s*L=(\d+),\s*f_start=([^,\s]+),\s*delta_f=([^,\s]+),\s*count=(\d+)\s*$"
)


@dataclass(frozen=True)
class TonePlan:
    """DMT tone grid: tone ``k`` sits at ``f_start + k * delta_f``."""

    f_start: float
    delta_f: float
    count: int

    def __post_init__(self):
        check_positive(self.f_start, "f_start")
        check_positive(self.delta_f, "delta_f")
        if int(self.count) != self.count or self.count < 1:
            raise ValueError(f"count must be a positive integer, got {self.count!r}")

    @classmethod
    def from_band(cls, f_start=BAND_START_HZ, f_end=BAND_END_HZ, delta_f=TONE_SPACING_HZ):
        """Every tone from ``f_start`` up to and including ``f_end``."""
        if f_end < f_start:
            raise ValueError("f_end must not be below f_start")
        count = int(math.floor((f_end - f_start) / delta_f + 1e-9)) + 1
        return cls(float(f_start), float(delta_f), count)

    @property
    def frequencies(self):
        return self.f_start + self.delta_f * np.arange(self.count)

    @property
    def span(self):
        """Width covered by the tones, ``count * delta_f``."""
        return self.count * self.delta_f


@dataclass(frozen=True, eq=False)
class ChannelSet:
    """Channel matrices ``H[k]`` (rx line x tx line) for every tone of ``plan``."""

    plan: TonePlan
    matrices: np.ndarray = field(repr=False)

    def __post_init__(self):
        H = check_channel_stack(self.matrices, "matrices")
        if H.shape[0] != self.plan.count:
            raise DimensionError(f"{H.shape[0]} matrices for a plan of {self.plan.count} tones")
        H.setflags(write=False)
        object.__setattr__(self, "matrices", H)

    @property
    def lines(self):
        return self.matrices.shape[1]

    @property
    def frequencies(self):
        return self.plan.frequencies

    def __len__(self):
        return self.plan.count

    def __getitem__(self, k):
        return self.matrices[k]

    def __iter__(self):
        return iter(self.matrices)

    def subset(self, tones):
        """A new set restricted to a contiguous, evenly spaced tone slice."""
        idx = np.arange(self.plan.count)[tones]
        if len(idx) == 0:
            raise ValueError("empty tone selection")
        step = int(idx[1] - idx[0]) if len(idx) > 1 else 1
        if step < 1 or np.any(np.diff(idx) != step):
            raise ValueError("tone selection must be evenly spaced and increasing")
        plan = TonePlan(self.plan.f_start + idx[0] * self.plan.delta_f, self.plan.delta_f * step, len(idx))
        return ChannelSet(plan, self.matrices[idx])

    def equals(self, other):
        return (
            self.plan == other.plan
            and self.matrices.shape == other.matrices.shape
            and bool(np.array_equal(self.matrices, other.matrices))
        )


# -- file I/O ---------------------------------------------------------------------

def _fmt(x):
    return format(float(x), ".17g")


def save_channel(channels, path):
    """Write ``channels`` in the ``vectorix-channel v1`` text format."""
    plan, L = channels.plan, channels.lines
    with open(path, "w", newline="") as fh:
        fh.write(
            f"# vectorix-channel v1, L={L}, f_start={_fmt(plan.f_start)}, "
            f"delta_f={_fmt(plan.delta_f)}, count={plan.count}\n"
        )
        for k, H in enumerate(channels.matrices):
            for i in range(L):
                for j in range(L):
                    z = H[i, j]
                    fh.write(f"{k},{i},{j},{_fmt(z.real)},{_fmt(z.imag)}\n")


def load_channel(path):
    """Parse a ``vectorix-channel v1`` file.

    Raises
    ------
    ChannelFormatError
        On a malformed header or row (the message names the line number), or
        when entries are missing, duplicated or out of range.
    """
    with open(path, newline="") as fh:
        header = fh.readline()
        m = _HEADER_RE.match(header.strip())
        if not m:
            raise ChannelFormatError("missing or malformed 'vectorix-channel v1' header", line=1)
        L, count = int(m.group(1)), int(m.group(4))
        try:
            plan = TonePlan(float(m.group(2)), float(m.group(3)), count)
        except ValueError as exc:
            raise ChannelFormatError(str(exc), line=1) from None
        if L < 1:
            raise ChannelFormatError("L must be positive", line=1)
        H = np.zeros((count, L, L), dtype=np.complex128)
        seen = np.zeros((count, L, L), dtype=bool)
        for lineno, row in enumerate(csv.reader(fh), start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if row[0].lstrip().startswith("#"):
                continue
            if len(row) != 5:
                raise ChannelFormatError(f"expected 5 fields, got {len(row)}", line=lineno)
            try:
                k, i, j = (int(v) for v in row[:3])
                z = complex(float(row[3]), float(row[4]))
            except ValueError:
                raise ChannelFormatError(f"cannot parse row {','.join(row)!r}", line=lineno) from None
            if not (0 <= k < count and 0 <= i < L and 0 <= j < L):
                raise ChannelFormatError(f"index ({k},{i},{j}) out of range", line=lineno)
            if seen[k, i, j]:
                raise ChannelFormatError(f"duplicate entry ({k},{i},{j})", line=lineno)
            if not np.isfinite(z):
                raise ChannelFormatError("non-finite entry", line=lineno)
            H[k, i, j] = z
            seen[k, i, j] = True
    if not seen.all():
        k, i, j = np.argwhere(~seen)[0]
        raise ChannelFormatError(
            f"dimension inconsistency: {int((~seen).sum())} entries missing, first ({k},{i},{j})"
        )
    return ChannelSet(plan, H)


# -- synthetic cable ------------------------------------------------------------

#: Extra FEXT path delay is drawn uniformly from [0, FEXT_SKEW_S).
FEXT_SKEW_S = 25e-9
#: Direct-path propagation delay per meter (velocity factor ~0.67).
DELAY_PER_M_S = 5e-9


@dataclass(frozen=True)
class SyntheticCableSpec:
    """Parameters of the synthetic short-loop cable.

    Attributes
    ----------
    lines : int
        Number of pairs in the binder (>= 2).
    length_m : float
        Loop length in meters.
    seed : int
        Key of the Philox counter-based generator.
    direct_atten_coeff : float
        Insertion loss in dB per sqrt(Hz) per meter.
    fext_slope : float
        FEXT-to-direct amplitude ratio per Hz (before the per-pair factor).
    fext_asymmetry_spread : float
        Standard deviation in dB of the log-normal per-pair coupling factor.
    fext_ripple_db : float
        Standard deviation in dB of an independent per-tone fluctuation of
        every coupling around its pair mean.
    """

    lines: int = 8
    length_m: float = 100.0
    seed: int = 2015
    direct_atten_coeff: float = 4.2e-5
    fext_slope: float = 1.0 / 120e6
    fext_asymmetry_spread: float = 4.0
    fext_ripple_db: float = 3.0

    def __post_init__(self):
        if int(self.lines) != self.lines or self.lines < 2:
            raise ValueError("lines must be an integer >= 2")
        check_positive(self.length_m, "length_m")
        params = (self.direct_atten_coeff, self.fext_slope, self.fext_asymmetry_spread, self.fext_ripple_db)
        if min(params) < 0:
            raise ValueError("attenuation, slope, spread and ripple must be non-negative")


def generate_synthetic(spec, plan):
    """Deterministic synthetic cable on the tones of ``plan``.

    Direct paths follow ``|h_ii(f)| = 10^(-a sqrt(f) len / 20)``. FEXT
    couplings are ``h_ij(f) = s f chi_ij sqrt(|h_ii h_jj|) e^{j phi_ij(f)}``
    with ``chi_ij`` log-normal (one draw per ordered pair, times an
    independent per-tone log-normal ripple) and a linear phase
    ``phi_ij(f) = theta_ij - 2 pi f (t_0 + dt_ij)``. The per-pair means are
    fixed across the band, so some lines stay weak at most tones.

    Draw order from ``Generator(Philox(key=seed))``: ``chi_db`` as an
    ``(L, L)`` standard normal block scaled by the spread, then ``theta`` as
    ``(L, L)`` uniforms on ``[0, 2 pi)``, then ``dt`` as ``(L, L)`` uniforms on
    ``[0, FEXT_SKEW_S)``, then the ripple as a ``(count, L, L)`` standard
    normal block scaled by ``fext_ripple_db``. Diagonal entries of
    ``chi_db``, ``dt`` and the ripple are drawn and ignored.
    """
    L = int(spec.lines)
    rng = np.random.Generator(np.random.Philox(key=int(spec.seed)))
    chi_db = spec.fext_asymmetry_spread * rng.standard_normal((L, L))
    theta = rng.uniform(0.0, 2 * np.pi, (L, L))
    dt = rng.uniform(0.0, FEXT_SKEW_S, (L, L))
    np.fill_diagonal(dt, 0.0)
    ripple_db = spec.fext_ripple_db * rng.standard_normal((plan.count, L, L))

    f = plan.frequencies[:, None, None]
    t0 = DELAY_PER_M_S * spec.length_m
    direct = 10.0 ** (-spec.direct_atten_coeff * np.sqrt(f) * spec.length_m / 20.0)
    coupling = spec.fext_slope * f * 10.0 ** ((chi_db + ripple_db) / 20.0)
    off = ~np.eye(L, dtype=bool)
    mag = np.where(off, coupling, 1.0) * direct
    if spec.fext_slope == 0:
        mag = np.where(off, 0.0, mag)
    phase = theta - 2 * np.pi * f * (t0 + dt)
    return ChannelSet(plan, mag * np.exp(1j * phase))


def bundled_cable(lines=8, seed=2015, plan=None):
    """The reference synthetic cable (default band unless ``plan`` is given)."""
    if plan is None:
        plan = TonePlan.from_band()
    return generate_synthetic(SyntheticCableSpec(lines=lines, seed=seed), plan)


# -- diagnostics -----------------------------------------------------------------

def diagonal_dominance(H):
    """``min_i |h_ii|^2 / max_{j != i} |h_ij|^2``; ``inf`` without crosstalk."""
    H = check_matrix(H, "H")
    L = H.shape[0]
    P = np.abs(H) ** 2
    if L == 1:
        return math.inf
    off = np.where(np.eye(L, dtype=bool), -np.inf, P).max(axis=1)
    with np.errstate(divide="ignore"):
        ratios = np.where(off > 0, np.diag(P) / np.where(off > 0, off, 1.0), math.inf)
    return float(np.min(ratios))


def weakest_line_histogram(channels):
    """How often each line is the first picked by sorted QR of ``H^H``.

    Singular tones are skipped, so the counts sum to the number of usable tones.
    """
    counts = np.zeros(channels.lines, dtype=int)
    for H in channels.matrices:
        try:
            counts[sorted_qr(H.conj().T).perm[0]] += 1
        except SingularMatrixError:
            continue
    return counts
