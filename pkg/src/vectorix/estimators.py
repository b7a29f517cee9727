"""scikit-learn style wrappers around precoder design and rate evaluation.

They hold no logic of their own; parameters map onto :class:`Scheme` and
:class:`GapParams` so the objects plug into ``get_params`` / ``set_params``
tooling.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_matrix
from .bitloading import GapParams
from .channel import ChannelSet, TonePlan
from .evaluate import build_blocks, evaluate_scheme, parse_scheme
from .exceptions import DimensionError
from .precoding import precode, snr_profile, with_thresholds


def _gap(est):
    return GapParams(
        shannon_gap_db=est.shannon_gap_db,
        margin_db=est.margin_db,
        coding_gain_db=est.coding_gain_db,
        b_min=est.b_min,
        b_max=est.b_max,
        gamma_base_db=est.gamma_base_db,
        framing_overhead=est.framing_overhead,
    )


class _GapMixin:
    # shared defaults, the standard link budget
    def _init_gap(self, shannon_gap_db, margin_db, coding_gain_db, b_min, b_max, gamma_base_db, framing_overhead):
        self.shannon_gap_db = shannon_gap_db
        self.margin_db = margin_db
        self.coding_gain_db = coding_gain_db
        self.b_min = b_min
        self.b_max = b_max
        self.gamma_base_db = gamma_base_db
        self.framing_overhead = framing_overhead


class VectoringPrecoder(_GapMixin, TransformerMixin, BaseEstimator):
    """Precoder for a single tone.

    ``fit(H)`` designs the scheme for channel ``H`` and loads bits with the
    gap formula; ``transform(a)`` runs the transmitter on symbol vectors.

    Parameters
    ----------
    scheme : str
        Acronym such as ``"THP-VB"`` or ``"ER-THP-LR"``. Dynamic Ordering
        on a lone tone reduces to V-BLAST.
    bits : array_like of int, optional
        Fixed per-line allocation instead of gap loading.

    Attributes
    ----------
    blocks_ : PrecoderBlocks
    bits_ : ndarray of int
    snr_ : ndarray
        Per-line decision SNR (linear).
    """

    def __init__(
        self,
        scheme="THP-VB",
        bits=None,
        shannon_gap_db=9.8,
        margin_db=6.0,
        coding_gain_db=5.0,
        b_min=2,
        b_max=12,
        gamma_base_db=64.0,
        framing_overhead=0.12,
    ):
        self.scheme = scheme
        self.bits = bits
        self._init_gap(shannon_gap_db, margin_db, coding_gain_db, b_min, b_max, gamma_base_db, framing_overhead)

    def fit(self, H, y=None):
        H = check_matrix(H, "H")
        scheme = parse_scheme(self.scheme)
        gap = _gap(self)
        one = ChannelSet(TonePlan(1.0, 1.0, 1), H[None])
        report = evaluate_scheme(one, scheme, gap)
        blocks = build_blocks(H, scheme, report.perms[0])
        bits = report.bits[:, 0] if self.bits is None else np.asarray(self.bits, dtype=int)
        self.blocks_ = with_thresholds(blocks, bits)
        self.bits_ = self.blocks_.bits
        self.snr_ = snr_profile(self.blocks_, gap.gamma_base).gamma
        self.n_features_in_ = H.shape[0]
        return self

    def transform(self, X):
        check_is_fitted(self, "blocks_")
        A = np.asarray(X, dtype=np.complex128)
        if A.ndim != 2 or A.shape[1] != self.n_features_in_:
            raise DimensionError(f"expected symbols of shape (n, {self.n_features_in_}), got {A.shape}")
        return precode(self.blocks_, A)


class RateEvaluator(_GapMixin, BaseEstimator):
    """Band-wide rate evaluation of one scheme.

    ``fit`` takes a :class:`ChannelSet`; ``predict`` returns per-line Mbps and
    ``score`` the minimum line rate, the quantity the orderings try to raise.

    Attributes
    ----------
    report_ : RateReport
    """

    def __init__(
        self,
        scheme="THP-DO",
        shannon_gap_db=9.8,
        margin_db=6.0,
        coding_gain_db=5.0,
        b_min=2,
        b_max=12,
        gamma_base_db=64.0,
        framing_overhead=0.12,
    ):
        self.scheme = scheme
        self._init_gap(shannon_gap_db, margin_db, coding_gain_db, b_min, b_max, gamma_base_db, framing_overhead)

    def fit(self, X, y=None):
        if not isinstance(X, ChannelSet):
            raise TypeError("RateEvaluator.fit expects a ChannelSet")
        self.report_ = evaluate_scheme(X, parse_scheme(self.scheme), _gap(self))
        self.n_features_in_ = X.lines
        return self

    def predict(self, X=None):
        """Per-line rates in Mbps; re-fits when ``X`` is given."""
        if X is not None:
            self.fit(X)
        check_is_fitted(self, "report_")
        return self.report_.rate_mbps.copy()

    def score(self, X=None, y=None):
        return float(np.min(self.predict(X)))
