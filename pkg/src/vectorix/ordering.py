"""Per-tone line orderings: identity, V-BLAST, inverse V-BLAST, Dynamic Ordering
and frequency sharing between two of them."""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Union

import numpy as np

from .bitloading import GapParams, corrected_bits
from .exceptions import SingularMatrixError
from .matrixcore import Permutation, pivoted_qr, sorted_qr
from .precoding import build_ordered_thp, snr_profile


class Ordering(enum.Enum):
    IDENTITY = "IDENTITY"
    VB = "VB"
    IVB = "IVB"
    DO = "DO"


@dataclass(frozen=True)
class FreqShare:
    """``low`` on tones below ``f_start + b_do``, ``high`` on the rest."""

    low: Ordering
    high: Ordering
    b_do: float

    def __post_init__(self):
        if not isinstance(self.low, Ordering) or not isinstance(self.high, Ordering):
            raise ValueError("frequency sharing nests plain orderings only")
        if self.b_do < 0:
            raise ValueError("b_do must be non-negative")

    @property
    def name(self):
        return f"{self.low.value}-{self.high.value}@{self.b_do / 1e6:g}MHz"


OrderingStrategy = Union[Ordering, FreqShare]


def strategy_name(strategy):
    return strategy.name if isinstance(strategy, FreqShare) else Ordering(strategy).value


@dataclass(frozen=True, eq=False)
class OrderingPlan:
    """Line order for every tone.

    Attributes
    ----------
    perms : list of Permutation
    aggregates : ndarray or None
        For Dynamic Ordering, ``aggregates[k]`` holds the per-line bits summed
        over the DO tones preceding tone ``k`` (the sort key used at tone ``k``).
        Rows of tones not handled by DO are zero.
    failed : list of int
        Tones where the channel was singular (identity order, zero bits).
    """

    perms: List[Permutation]
    aggregates: Optional[np.ndarray] = None
    failed: List[int] = field(default_factory=list)

    def __len__(self):
        return len(self.perms)


def vb_order(H):
    """V-BLAST "weakest first": sorted QR of ``H^H``."""
    H = np.asarray(H)
    return sorted_qr(H.conj().T).perm


def ivb_order(H):
    """Inverse V-BLAST "strongest first": pivoted QR of ``H^H``."""
    H = np.asarray(H)
    return pivoted_qr(H.conj().T).perm


def dynamic_order(n_tones, n_lines, vb: Callable[[int], Sequence[int]], load: Callable[[int, Permutation], Sequence[int]]):
    """Dynamic Ordering over an abstract tone sequence.

    At every tone lines are processed in ascending order of the bits they have
    accumulated over the previous tones ("aggregated minimum first"). Ties
    keep the tone's own V-BLAST order, which also makes the first tone pure
    V-BLAST.

    Parameters
    ----------
    n_tones, n_lines : int
    vb : callable
        ``vb(k)`` -> V-BLAST line order on tone ``k``.
    load : callable
        ``load(k, perm)`` -> bits per line on tone ``k`` under ``perm``.

    Returns
    -------
    perms : list of Permutation
    bits : ndarray, shape (n_lines, n_tones)
    aggregates : ndarray, shape (n_tones, n_lines)
        Sort keys used at each tone.
    """
    agg = np.zeros(n_lines, dtype=np.int64)
    perms = []
    bits = np.zeros((n_lines, n_tones), dtype=int)
    keys = np.zeros((n_tones, n_lines), dtype=np.int64)
    for k in range(n_tones):
        rank = {line: r for r, line in enumerate(vb(k))}
        order = tuple(sorted(range(n_lines), key=lambda i: (agg[i], rank[i], i)))
        perm = Permutation(order)
        keys[k] = agg
        b = np.asarray(load(k, perm), dtype=int)
        bits[:, k] = b
        agg = agg + b
        perms.append(perm)
    return perms, bits, keys


def _thp_bits(H, perm, gap):
    blocks = build_ordered_thp(H, perm)
    return corrected_bits(snr_profile(blocks, gap.gamma_base).gamma, gap)


def do_plan(channels, gap=GapParams()):
    """Dynamic Ordering of ordered THP across all tones of ``channels``.

    Returns
    -------
    plan : OrderingPlan
    bits : ndarray, shape (L, tones)
        Corrected bit loading delivered under the plan.
    """
    L, K = channels.lines, len(channels)
    failed = []
    vb_cache = {}

    def vb(k):
        try:
            vb_cache[k] = vb_order(channels[k])
        except SingularMatrixError:
            vb_cache[k] = Permutation.identity(L)
            failed.append(k)
        return vb_cache[k]

    def load(k, perm):
        if k in failed:
            return np.zeros(L, dtype=int)
        return _thp_bits(channels[k], perm, gap)

    perms, bits, keys = dynamic_order(K, L, vb, load)
    for k in failed:
        perms[k] = Permutation.identity(L)
    return OrderingPlan(perms, keys, failed), bits


def _per_tone(channels, fn):
    L = channels.lines
    perms, failed = [], []
    for k, H in enumerate(channels.matrices):
        try:
            perms.append(fn(H))
        except SingularMatrixError:
            perms.append(Permutation.identity(L))
            failed.append(k)
    return perms, failed


def _plain_plan(channels, ordering, gap):
    if ordering is Ordering.DO:
        plan, _ = do_plan(channels, gap)
        return plan
    if ordering is Ordering.IDENTITY:
        return OrderingPlan([Permutation.identity(channels.lines)] * len(channels))
    fn = vb_order if ordering is Ordering.VB else ivb_order
    perms, failed = _per_tone(channels, fn)
    return OrderingPlan(perms, None, failed)


def split_index(plan, b_do):
    """Number of tones whose frequency lies below ``f_start + b_do``."""
    f = plan.frequencies
    return int(np.count_nonzero(f < plan.f_start + b_do))


def plan_orderings(channels, strategy, gap=GapParams()):
    """Order every tone of ``channels`` according to ``strategy``.

    Under frequency sharing each sub-band is planned on its own; Dynamic
    Ordering accumulates only over the tones of its sub-band, in tone order.
    """
    if isinstance(strategy, str):
        strategy = Ordering(strategy)
    if isinstance(strategy, Ordering):
        return _plain_plan(channels, strategy, gap)
    if not isinstance(strategy, FreqShare):
        raise ValueError(f"unknown ordering strategy {strategy!r}")
    n_low = split_index(channels.plan, strategy.b_do)
    K, L = len(channels), channels.lines
    parts = []
    if n_low > 0:
        parts.append((0, _plain_plan(channels.subset(slice(0, n_low)), strategy.low, gap)))
    if n_low < K:
        parts.append((n_low, _plain_plan(channels.subset(slice(n_low, K)), strategy.high, gap)))
    perms, failed = [], []
    aggregates = None
    for offset, plan in parts:
        perms.extend(plan.perms)
        failed.extend(offset + k for k in plan.failed)
        if plan.aggregates is not None:
            if aggregates is None:
                aggregates = np.zeros((K, L), dtype=np.int64)
            aggregates[offset : offset + len(plan)] = plan.aggregates
    return OrderingPlan(perms, aggregates, failed)
