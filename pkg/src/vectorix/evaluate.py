"""Scheme catalogue and band-wide rate evaluation."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .bitloading import GapParams, aggregate, corrected_bits, gap_bits
from .exceptions import SingularMatrixError, LLLConvergenceError
from .matrixcore import Permutation
from .ordering import (
    FreqShare,
    Ordering,
    OrderingPlan,
    do_plan,
    ivb_order,
    plan_orderings,
    split_index,
    strategy_name,
)
from .precoding import (
    SchemeKind,
    build_dp,
    build_er_thp,
    build_ordered_thp,
    build_reference_thp,
    snr_profile,
)

#: LLL parameter of the plain lattice-reduced ER-THP and of the LR + VB variant.
LR_DELTA = 0.75
LRVB_DELTA = 1.0


@dataclass(frozen=True)
class Scheme:
    """A precoding scheme, with its ordering strategy or LLL parameter."""

    kind: SchemeKind
    strategy: Optional[object] = None
    delta: Optional[float] = None

    def __post_init__(self):
        kind = SchemeKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.delta is not None and not kind.lattice_reduced:
            raise ValueError(f"{kind.value} does not accept lattice reduction")
        if kind.lattice_reduced and self.delta is None:
            object.__setattr__(self, "delta", LRVB_DELTA if kind is SchemeKind.ER_THP_LRVB else LR_DELTA)
        if kind in (SchemeKind.THP_ORDERED, SchemeKind.ER_THP):
            strategy = Ordering.IDENTITY if self.strategy is None else self.strategy
            if isinstance(strategy, str):
                strategy = Ordering(strategy)
            if kind is SchemeKind.ER_THP and _uses_do(strategy):
                raise ValueError("Dynamic Ordering needs unequal per-line rates; not defined for ER-THP")
            object.__setattr__(self, "strategy", strategy)
        elif self.strategy is not None:
            raise ValueError(f"{kind.value} takes no ordering strategy")

    @property
    def name(self):
        k = self.kind
        if k is SchemeKind.THP_ORDERED:
            return "THP" if self.strategy is Ordering.IDENTITY else f"THP-{strategy_name(self.strategy)}"
        if k is SchemeKind.ER_THP:
            return "ER-THP" if self.strategy is Ordering.IDENTITY else f"ER-THP-{strategy_name(self.strategy)}"
        return {
            SchemeKind.DP: "DP",
            SchemeKind.THP: "THP",
            SchemeKind.ER_THP_LR: "ER-THP-LR",
            SchemeKind.ER_THP_LRVB: "ER-THP-LRVB",
        }[k]


def _uses_do(strategy):
    if isinstance(strategy, FreqShare):
        return Ordering.DO in (strategy.low, strategy.high)
    return strategy is Ordering.DO


SCHEMES = {
    "DP": Scheme(SchemeKind.DP),
    "THP": Scheme(SchemeKind.THP),
    "THP-VB": Scheme(SchemeKind.THP_ORDERED, Ordering.VB),
    "THP-IVB": Scheme(SchemeKind.THP_ORDERED, Ordering.IVB),
    "THP-DO": Scheme(SchemeKind.THP_ORDERED, Ordering.DO),
    "ER-THP": Scheme(SchemeKind.ER_THP, Ordering.IDENTITY),
    "ER-THP-VB": Scheme(SchemeKind.ER_THP, Ordering.VB),
    "ER-THP-LR": Scheme(SchemeKind.ER_THP_LR),
    "ER-THP-LRVB": Scheme(SchemeKind.ER_THP_LRVB),
}


def parse_strategy(text):
    """``"VB"``, ``"DO"``, or ``"DO-IVB@170"`` (frequency share, split in MHz)."""
    text = text.strip().upper()
    if "@" in text:
        pair, mhz = text.split("@", 1)
        low, high = pair.split("-", 1)
        return FreqShare(Ordering(low), Ordering(high), float(mhz.removesuffix("MHZ")) * 1e6)
    return Ordering(text)


def parse_scheme(text, strategy=None):
    """Scheme acronym (``"THP-DO"``) or a family name plus ``strategy``."""
    key = text.strip().upper()
    if strategy is not None:
        if key == "THP":
            return Scheme(SchemeKind.THP_ORDERED, strategy)
        if key == "ER-THP":
            return Scheme(SchemeKind.ER_THP, strategy)
        raise ValueError(f"ordering strategies apply to THP and ER-THP only, not {text!r}")
    if key in SCHEMES:
        return SCHEMES[key]
    for family, kind in (("THP-", SchemeKind.THP_ORDERED), ("ER-THP-", SchemeKind.ER_THP)):
        if key.startswith(family):
            return Scheme(kind, parse_strategy(key[len(family):]))
    raise ValueError(f"unknown scheme {text!r}; expected one of {', '.join(SCHEMES)}")


def build_blocks(H, scheme, perm=None):
    """Blocks of ``scheme`` on one tone; ``perm`` is required for ordered schemes."""
    k = scheme.kind
    if k is SchemeKind.DP:
        return build_dp(H)
    if k is SchemeKind.THP:
        return build_reference_thp(H)
    if k is SchemeKind.THP_ORDERED:
        return build_ordered_thp(H, perm)
    if k is SchemeKind.ER_THP:
        return build_er_thp(H, perm)
    return build_er_thp(H, lr_delta=scheme.delta, lr_sorted=k is SchemeKind.ER_THP_LRVB)


def tone_bits(blocks, gap):
    """Bits per line: ΔE-corrected for modulo schemes, plain gap formula for DP."""
    gamma = snr_profile(blocks, gap.gamma_base).gamma
    if blocks.linear:
        return gap_bits(gamma, gap)
    return corrected_bits(gamma, gap)


@dataclass(frozen=True, eq=False)
class RateReport:
    """Per-line bit loading and aggregated rates of one scheme on one channel set.

    Attributes
    ----------
    scheme : str
        Acronym, e.g. ``"THP-DO"``.
    strategy : str or None
    bits : ndarray, shape (L, tones)
    rate_mbps : ndarray, shape (L,)
    perms : list of Permutation
        Processing order used on each tone.
    failed_tones : list of int
        Tones where construction failed; they carry zero bits.
    """

    scheme: str
    strategy: Optional[str]
    bits: np.ndarray
    rate_mbps: np.ndarray
    perms: List[Permutation] = field(repr=False)
    failed_tones: List[int] = field(default_factory=list)

    @property
    def mean_mbps(self):
        return float(np.mean(self.rate_mbps))

    @property
    def min_mbps(self):
        return float(np.min(self.rate_mbps))

    def as_dict(self, decimals=1):
        return {
            "scheme": self.scheme,
            "strategy": self.strategy,
            "mean_mbps": round(self.mean_mbps, decimals),
            "min_mbps": round(self.min_mbps, decimals),
            "rate_mbps": [round(float(r), decimals) for r in self.rate_mbps],
            "failed_tones": list(self.failed_tones),
        }


def _plan_for(channels, scheme, gap):
    L, K = channels.lines, len(channels)
    if scheme.kind in (SchemeKind.THP_ORDERED, SchemeKind.ER_THP):
        return plan_orderings(channels, scheme.strategy, gap)
    return OrderingPlan([Permutation.identity(L)] * K)


def evaluate_scheme(channels, scheme, gap=GapParams()):
    """Bit loading and aggregated rates of ``scheme`` over ``channels``.

    ``scheme`` may be a :class:`Scheme` or an acronym accepted by
    :func:`parse_scheme`. Ordered schemes are planned first; Dynamic Ordering
    loads bits while planning and the same per-tone computation is repeated
    here, so the report is identical to the planner's own bookkeeping.
    """
    if isinstance(scheme, str):
        scheme = parse_scheme(scheme)
    plan = _plan_for(channels, scheme, gap)
    L, K = channels.lines, len(channels)
    bits = np.zeros((L, K), dtype=int)
    perms = list(plan.perms)
    failed = set(plan.failed)
    for k in range(K):
        if k in failed:
            continue
        try:
            blocks = build_blocks(channels[k], scheme, plan.perms[k])
        except (SingularMatrixError, LLLConvergenceError):
            failed.add(k)
            continue
        perms[k] = blocks.perm
        bits[:, k] = tone_bits(blocks, gap)
    rate = aggregate(bits, channels.plan.delta_f, gap.framing_overhead)
    strategy = strategy_name(scheme.strategy) if scheme.strategy is not None else None
    return RateReport(scheme.name, strategy, bits, rate, perms, sorted(failed))


@dataclass(frozen=True)
class SweepRow:
    variant: str
    b_do_hz: float
    mean_mbps: float
    min_mbps: float


def _stats(bits, channels, gap):
    rate = aggregate(bits, channels.plan.delta_f, gap.framing_overhead)
    return float(np.mean(rate)), float(np.min(rate))


def sweep_bdo(channels, grid_hz, gap=GapParams()):
    """Mean/min rate of THP under DO/IVB frequency sharing for every ``B_DO``.

    ``DO-IVB`` gives DO the lowest ``B_DO`` Hz, ``IVB-DO`` the highest.
    Each row equals ``evaluate_scheme`` with the corresponding
    :class:`FreqShare` strategy. DO is causal in tone order, so the DO-IVB
    rows reuse prefixes of a single full-band DO run; per-tone IVB loading is
    computed once.
    """
    K = len(channels)
    span = channels.plan.span
    ivb = evaluate_scheme(channels, SCHEMES["THP-IVB"], gap).bits
    _, do_full = do_plan(channels, gap)
    rows = []
    for b in grid_hz:
        if not 0 <= b <= span + 1e-6:
            raise ValueError(f"B_DO={b} outside [0, {span}]")
        n = split_index(channels.plan, b)
        bits = np.concatenate([do_full[:, :n], ivb[:, n:]], axis=1)
        rows.append(SweepRow("DO-IVB", float(b), *_stats(bits, channels, gap)))
    for b in grid_hz:
        n = split_index(channels.plan, span - b)
        if n < K:
            _, do_high = do_plan(channels.subset(slice(n, K)), gap)
        else:
            do_high = np.zeros((channels.lines, 0), dtype=int)
        bits = np.concatenate([ivb[:, :n], do_high], axis=1)
        rows.append(SweepRow("IVB-DO", float(b), *_stats(bits, channels, gap)))
    return rows
