"""Command-line front end.

Commands: ``gen-channel``, ``rates``, ``sweep-bdo``, ``verify``,
``hist-weakest``. Every output file starts with a ``# vectorix-<kind> v1``
line; rates are written in Mbps with one decimal. Exit codes: 0 ok, 1 usage,
2 data error, 3 invariant failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from .bitloading import GapParams
from .channel import (
    BAND_END_HZ,
    BAND_START_HZ,
    TONE_SPACING_HZ,
    ChannelSet,
    SyntheticCableSpec,
    TonePlan,
    generate_synthetic,
    load_channel,
    save_channel,
    weakest_line_histogram,
)
from .evaluate import SCHEMES, build_blocks, evaluate_scheme, parse_scheme, parse_strategy, sweep_bdo
from .exceptions import (
    ChannelFormatError,
    DimensionError,
    InvariantError,
    LLLConvergenceError,
    SingularMatrixError,
)
from .linksim import run_link
from .matrixcore import exhaustive_maxmin_order, forced_order_qr, gaussian_int_det, lll_reduce, pivoted_qr, sorted_qr
from .precoding import ZF_TOL, verify_zf, with_thresholds

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 0, 1, 2, 3
DEFAULT_SEED = 2015


@dataclass
class RunConfig:
    """Everything a command needs; defaults are the standard link budget and band."""

    channel: Optional[str] = None
    lines: int = 8
    seed: int = DEFAULT_SEED
    band_start_mhz: float = BAND_START_HZ / 1e6
    band_end_mhz: float = BAND_END_HZ / 1e6
    tone_spacing_khz: float = TONE_SPACING_HZ / 1e3
    tone_stride: int = 1
    tx_psd_dbm_hz: float = -76.0
    noise_psd_dbm_hz: float = -140.0
    shannon_gap_db: float = 9.8
    margin_db: float = 6.0
    coding_gain_db: float = 5.0
    b_min: int = 2
    b_max: int = 12
    framing_overhead: float = 0.12
    schemes: List[str] = field(default_factory=lambda: list(SCHEMES))
    orderings: List[str] = field(default_factory=list)
    bdo_grid_mhz: Optional[List[float]] = None
    out: str = "."
    json: bool = True
    csv: bool = True
    output: Optional[str] = None
    symbols: int = 500
    e2e_stride: int = 64
    inject_fault: bool = False

    @property
    def gap(self):
        return GapParams.from_psd(
            self.tx_psd_dbm_hz,
            self.noise_psd_dbm_hz,
            shannon_gap_db=self.shannon_gap_db,
            margin_db=self.margin_db,
            coding_gain_db=self.coding_gain_db,
            b_min=self.b_min,
            b_max=self.b_max,
            framing_overhead=self.framing_overhead,
        )

    @property
    def plan(self):
        return TonePlan.from_band(self.band_start_mhz * 1e6, self.band_end_mhz * 1e6, self.tone_spacing_khz * 1e3)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(text):
    return [t.strip() for t in text.split(",") if t.strip()]


def _float_list(text):
    try:
        return [float(t) for t in _csv_list(text)]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    # every default is None so config-file values survive unless a flag is given
    common.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    src = common.add_mutually_exclusive_group()
    src.add_argument("--channel", help="channel file (vectorix-channel v1)")
    src.add_argument("--synthetic", action="store_true", help="use the synthetic cable (default)")
    common.add_argument("--lines", type=int, help="lines of the synthetic cable (default 8)")
    common.add_argument("--seed", type=int, help="synthetic cable seed (default $VECTORIX_SEED or 2015)")
    common.add_argument("--band-start", type=float, dest="band_start_mhz", metavar="MHZ")
    common.add_argument("--band-end", type=float, dest="band_end_mhz", metavar="MHZ")
    common.add_argument("--tone-spacing", type=float, dest="tone_spacing_khz", metavar="KHZ")
    common.add_argument("--tone-stride", type=int, help="keep every n-th tone (faster, coarser)")
    common.add_argument("--tx-psd", type=float, dest="tx_psd_dbm_hz", metavar="DBM_HZ")
    common.add_argument("--noise-psd", type=float, dest="noise_psd_dbm_hz", metavar="DBM_HZ")
    common.add_argument("--margin", type=float, dest="margin_db", metavar="DB")
    common.add_argument("--coding-gain", type=float, dest="coding_gain_db", metavar="DB")
    common.add_argument("--schemes", type=_csv_list, help="comma list of scheme acronyms (default: all nine)")
    common.add_argument(
        "--orderings", type=_csv_list, help="extra THP strategies, e.g. DO-IVB@170 (split in MHz)"
    )
    common.add_argument("--bdo-grid", type=_float_list, dest="bdo_grid_mhz", metavar="MHZ,...")
    common.add_argument("--out", help="output directory (default .)")
    common.add_argument("--json", action="store_true", help="write JSON only (default: JSON and CSV)")
    common.add_argument("--csv", action="store_true", help="write CSV only")

    parser = _Parser(prog="vectorix", description="THP vectoring rate evaluation and verification.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    g = sub.add_parser("gen-channel", parents=[common], help="write the synthetic cable to a channel file")
    g.add_argument("-o", "--output", help="file path (default <out>/channel_v1.csv)")
    sub.add_parser("rates", parents=[common], help="mean/min/per-line rates of each scheme")
    sub.add_parser("sweep-bdo", parents=[common], help="DO/IVB frequency-sharing sweep")
    v = sub.add_parser("verify", parents=[common], help="invariant checks; exit 3 on failure")
    v.add_argument("--symbols", type=int, help="symbols per tone in link checks (default 500)")
    v.add_argument("--e2e-stride", type=int, help="link checks on every n-th tone (default 64)")
    v.add_argument("--inject-fault", action="store_true", default=None, help=argparse.SUPPRESS)
    sub.add_parser("hist-weakest", parents=[common], help="how often each line is picked first by sorted QR")
    return parser


def resolve_config(args, environ=None):
    """Defaults, then the ``--config`` file, then ``$VECTORIX_SEED``, then flags."""
    environ = os.environ if environ is None else environ
    cfg = RunConfig()
    if args.config:
        try:
            with open(args.config) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ChannelFormatError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(data) - set(RunConfig.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = replace(cfg, **data)
    if args.seed is None and "VECTORIX_SEED" in environ:
        try:
            cfg = replace(cfg, seed=int(environ["VECTORIX_SEED"]))
        except ValueError:
            raise ValueError(f"VECTORIX_SEED must be an integer, got {environ['VECTORIX_SEED']!r}") from None
    flags = {k: v for k, v in vars(args).items() if k in RunConfig.__dataclass_fields__ and v is not None}
    flags.pop("json", None)
    flags.pop("csv", None)
    cfg = replace(cfg, **flags)
    if getattr(args, "synthetic", False):
        cfg = replace(cfg, channel=None)
    if args.json or args.csv:
        cfg = replace(cfg, json=bool(args.json), csv=bool(args.csv))
    if cfg.tone_stride < 1 or cfg.e2e_stride < 1 or cfg.symbols < 1:
        raise ValueError("strides and symbol counts must be positive")
    return cfg


def load_channels(cfg):
    if cfg.channel:
        channels = load_channel(cfg.channel)
    else:
        channels = generate_synthetic(SyntheticCableSpec(lines=cfg.lines, seed=cfg.seed), cfg.plan)
    if cfg.tone_stride > 1:
        channels = channels.subset(slice(0, None, cfg.tone_stride))
    return channels


# -- writers ------------------------------------------------------------------

def _fmt1(x):
    return f"{x:.1f}"


def _write_csv(path, kind, header, rows):
    buf = io.StringIO()
    buf.write(f"# vectorix-{kind} v1\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def _write_json(path, kind, payload):
    doc = {"format": f"vectorix-{kind}", "version": 1, **payload}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _outdir(cfg):
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scheme_list(cfg):
    schemes = [parse_scheme(s) for s in cfg.schemes]
    schemes += [parse_scheme("THP", parse_strategy(o)) for o in cfg.orderings]
    return schemes


# -- commands -----------------------------------------------------------------

def cmd_gen_channel(cfg, stdout):
    channels = load_channels(replace(cfg, channel=None))
    path = Path(cfg.output) if cfg.output else _outdir(cfg) / "channel_v1.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    save_channel(channels, path)
    print(f"wrote {path} ({channels.lines} lines, {len(channels)} tones)", file=stdout)
    return EXIT_OK


def rate_rows(reports):
    """Rows of the ``rates`` table: scheme, strategy, mean, min, per-line Mbps."""
    rows = []
    for r in reports:
        rows.append(
            [r.scheme, r.strategy or "", _fmt1(r.mean_mbps), _fmt1(r.min_mbps)] + [_fmt1(x) for x in r.rate_mbps]
        )
    return rows


def cmd_rates(cfg, stdout):
    channels = load_channels(cfg)
    gap = cfg.gap
    reports = [evaluate_scheme(channels, s, gap) for s in _scheme_list(cfg)]
    L = channels.lines
    out = _outdir(cfg)
    rows = rate_rows(reports)
    if cfg.csv:
        header = ["scheme", "strategy", "mean_mbps", "min_mbps"] + [f"line_{i}_mbps" for i in range(L)]
        _write_csv(out / "rates_v1.csv", "rates", header, rows)
        per_line = [[i] + [_fmt1(r.rate_mbps[i]) for r in reports] for i in range(L)]
        _write_csv(out / "rates_per_line_v1.csv", "rates-per-line", ["line"] + [r.scheme for r in reports], per_line)
    if cfg.json:
        _write_json(out / "rates_v1.json", "rates", {"rows": [r.as_dict(1) for r in reports]})
    print(f"{'scheme':<16}{'mean':>9}{'min':>9}", file=stdout)
    for row in rows:
        print(f"{row[0]:<16}{row[2]:>9}{row[3]:>9}", file=stdout)
    return EXIT_OK


def default_bdo_grid(channels, step_mhz=10.0):
    span = channels.plan.span / 1e6
    grid = list(np.arange(0.0, span, step_mhz))
    return [float(round(g, 6)) for g in grid] + [span]


def cmd_sweep_bdo(cfg, stdout):
    channels = load_channels(cfg)
    grid = cfg.bdo_grid_mhz if cfg.bdo_grid_mhz is not None else default_bdo_grid(channels)
    span_mhz = channels.plan.span / 1e6
    # "full band" on the command line may be written with fewer digits than the span
    grid_hz = [min(g * 1e6, channels.plan.span) for g in grid]
    if any(g < 0 or g > span_mhz + 1e-6 for g in grid):
        raise ValueError(f"B_DO grid must lie within [0, {span_mhz:g}] MHz")
    rows = sweep_bdo(channels, grid_hz, cfg.gap)
    out = _outdir(cfg)
    table = [[r.variant, f"{r.b_do_hz / 1e6:.4f}", _fmt1(r.mean_mbps), _fmt1(r.min_mbps)] for r in rows]
    if cfg.csv:
        _write_csv(out / "sweep_bdo_v1.csv", "sweep-bdo", ["variant", "b_do_mhz", "mean_mbps", "min_mbps"], table)
    if cfg.json:
        _write_json(
            out / "sweep_bdo_v1.json",
            "sweep-bdo",
            {
                "rows": [
                    {"variant": r.variant, "b_do_mhz": round(r.b_do_hz / 1e6, 4), "mean_mbps": round(r.mean_mbps, 1),
                     "min_mbps": round(r.min_mbps, 1)}
                    for r in rows
                ]
            },
        )
    for t in table:
        print(" ".join(t), file=stdout)
    return EXIT_OK


def cmd_hist_weakest(cfg, stdout):
    channels = load_channels(cfg)
    counts = weakest_line_histogram(channels)
    out = _outdir(cfg)
    rows = [[i, int(c)] for i, c in enumerate(counts)]
    if cfg.csv:
        _write_csv(out / "hist_weakest_v1.csv", "hist-weakest", ["line", "count"], rows)
    if cfg.json:
        _write_json(out / "hist_weakest_v1.json", "hist-weakest", {"counts": [int(c) for c in counts]})
    for i, c in rows:
        print(f"line {i}: {c}", file=stdout)
    return EXIT_OK


class _Checks:
    def __init__(self, stdout):
        self.results = []
        self.stdout = stdout

    def add(self, name, ok, detail):
        self.results.append({"check": name, "ok": bool(ok), "detail": detail})
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=self.stdout)

    @property
    def failed(self):
        return [r["check"] for r in self.results if not r["ok"]]


def _perturb(blocks):
    f = blocks.f.copy()
    f[0, 0] += 1e-3
    return replace(blocks, f=f)


def _oracle_report(L, n, seed):
    rng = np.random.default_rng(seed)
    agree = dominated = pivot_ok = 0
    for _ in range(n):
        A = (rng.standard_normal((L, L)) + 1j * rng.standard_normal((L, L))) / np.sqrt(2)
        s = sorted_qr(A).min_r2
        best = forced_order_qr(A, exhaustive_maxmin_order(A)).min_r2
        dominated += best >= s * (1 - 1e-12)
        agree += abs(best - s) <= 1e-12 * best
        p = pivoted_qr(A)
        pivot_ok += np.isclose(abs(p.r[0, 0]) ** 2, np.max(np.sum(np.abs(A) ** 2, axis=0)), rtol=1e-12)
    return agree, dominated, pivot_ok


def cmd_verify(cfg, stdout):
    channels = load_channels(cfg)
    gap = cfg.gap
    checks = _Checks(stdout)
    K = len(channels)
    for scheme in _scheme_list(cfg):
        report = evaluate_scheme(channels, scheme, gap)
        worst_zf = 0.0
        errors = 0
        power_sum = np.zeros(channels.lines)
        se2_sum = np.zeros(channels.lines)
        tested = 0
        for k in range(0, K, cfg.e2e_stride):
            if k in report.failed_tones or not report.bits[:, k].any():
                continue
            blocks = with_thresholds(build_blocks(channels[k], scheme, report.perms[k]), report.bits[:, k])
            if cfg.inject_fault:
                blocks = _perturb(blocks)
            worst_zf = max(worst_zf, verify_zf(blocks, channels[k]))
            seed = np.random.SeedSequence([cfg.seed, k])
            rep = run_link(channels[k], blocks, report.bits[:, k], cfg.symbols, 0.0, seed)
            errors += rep.total_errors
            rep_d = run_link(channels[k], blocks, report.bits[:, k], cfg.symbols, 0.0, seed, dither=True)
            power_sum += rep_d.tx_power
            se2_sum += rep_d.tx_power_se ** 2
            tested += 1
        name = report.scheme
        checks.add(f"zero-forcing[{name}]", worst_zf < ZF_TOL, f"max residual {worst_zf:.2e}")
        checks.add(f"noise-free round trip[{name}]", errors == 0, f"{errors} symbol errors")
        # pooled over the checked tones, against 1 + 3 sigma of the estimator
        n = max(tested, 1)
        mean, se = power_sum / n, np.sqrt(se2_sum) / n
        excess = float(np.max((mean - 1.0) / np.maximum(se, 1e-15)))
        checks.add(
            f"per-line power[{name}]",
            excess <= 3.0,
            f"max E|x|^2 {float(mean.max()):.4f}, worst {excess:+.2f} sigma over {tested} tones (dithered)",
        )
        if report.failed_tones:
            print(f"note {name}: {len(report.failed_tones)} singular tones skipped", file=stdout)
    for L in (3, 4):
        agree, dominated, pivot_ok = _oracle_report(L, 100, cfg.seed)
        checks.add(f"exhaustive dominates sorted[L={L}]", dominated == 100, f"{dominated}/100, agreement {agree}/100")
        checks.add(f"pivoted picks max norm[L={L}]", pivot_ok == 100, f"{pivot_ok}/100")
    lll_ok = 0
    rng = np.random.default_rng(cfg.seed)
    for _ in range(20):
        A = (rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))) / np.sqrt(2)
        T, _ = lll_reduce(A, 0.75)
        d = gaussian_int_det(T)
        lll_ok += d in (1, -1, 1j, -1j)
    checks.add("LLL unimodular", lll_ok == 20, f"{lll_ok}/20 with |det T| = 1")
    out = _outdir(cfg)
    if cfg.json:
        _write_json(out / "verify_v1.json", "verify", {"checks": checks.results})
    if checks.failed:
        print(f"invariant failure: {', '.join(checks.failed)}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


COMMANDS = {
    "gen-channel": cmd_gen_channel,
    "rates": cmd_rates,
    "sweep-bdo": cmd_sweep_bdo,
    "verify": cmd_verify,
    "hist-weakest": cmd_hist_weakest,
}


def main(argv=None, stdout=None):
    stdout = sys.stdout if stdout is None else stdout
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg, stdout)
    except InvariantError as exc:
        print(f"invariant failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ChannelFormatError, DimensionError, SingularMatrixError, LLLConvergenceError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ValueError, TypeError) as exc:
        print(f"vectorix: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
