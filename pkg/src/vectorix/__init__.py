"""Crosstalk precoding for vectored copper lines: THP variants, line ordering,
bit loading and a symbol-level link simulator."""

from .bitloading import GapParams, aggregate, corrected_bits, gap_bits
from .channel import (
    ChannelSet,
    SyntheticCableSpec,
    TonePlan,
    bundled_cable,
    diagonal_dominance,
    generate_synthetic,
    load_channel,
    save_channel,
    weakest_line_histogram,
)
from .estimators import RateEvaluator, VectoringPrecoder
from .evaluate import SCHEMES, RateReport, Scheme, evaluate_scheme, parse_scheme, sweep_bdo
from .exceptions import (
    ChannelFormatError,
    DimensionError,
    InvariantError,
    LLLConvergenceError,
    SingularMatrixError,
    VectorixError,
)
from .linksim import Constellation, LinkReport, qam_demap, qam_map, run_link, verify_e2e
from .matrixcore import (
    Permutation,
    QrFactorization,
    exhaustive_maxmin_order,
    forced_order_qr,
    gram_schmidt_qr,
    lattice_reduced_qr,
    lll_reduce,
    pivoted_qr,
    sorted_qr,
)
from .ordering import FreqShare, Ordering, plan_orderings
from .precoding import (
    PrecoderBlocks,
    SchemeKind,
    build_dp,
    build_er_thp,
    build_ordered_thp,
    build_reference_thp,
    delta_e_for_bits,
    modulo_reduce,
    precode,
    snr_profile,
    tau_for_bits,
    verify_zf,
    with_thresholds,
)

__version__ = "0.1.0"
