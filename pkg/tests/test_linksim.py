import itertools

import numpy as np
import pytest

from vectorix.bitloading import GapParams
from vectorix.channel import ChannelSet, TonePlan, bundled_cable
from vectorix.evaluate import SCHEMES, build_blocks, evaluate_scheme
from vectorix.exceptions import DimensionError
from vectorix.linksim import Constellation, qam_demap, qam_map, run_link, verify_e2e
from vectorix.matrixcore import Permutation
from vectorix.precoding import build_ordered_thp, build_reference_thp, delta_e_for_bits, with_thresholds

from oracles import crandn


def random_channel(seed, L):
    rng = np.random.default_rng(seed)
    return crandn(rng, L, L) + 2 * np.eye(L)


def test_two_bit_roundtrip():
    c = Constellation(2)
    g = np.arange(4)
    pts = qam_map(g, c)
    np.testing.assert_array_equal(qam_demap(pts, c), g)
    assert np.allclose(np.abs(pts.real), c.tau / 4)


@pytest.mark.parametrize("b", range(1, 13))
def test_noiseless_identity_all_sizes(b):
    c = Constellation(b)
    g = np.arange(c.size)
    np.testing.assert_array_equal(c.demap(c.map(g)), g)
    assert len(set(np.round(c.points, 9))) == 2 ** b


@pytest.mark.parametrize("b", range(1, 13))
def test_unit_energy(b):
    assert np.mean(np.abs(Constellation(b).points) ** 2) == pytest.approx(1.0)


@pytest.mark.parametrize("b", [1, 2, 3, 5, 8])
def test_torus_min_distance(b):
    c = Constellation(b)
    p = c.points
    best = np.inf
    for s, t in itertools.product((-1, 0, 1), repeat=2):
        shift = (s + 1j * t) * c.tau
        d = np.abs(p[:, None] - p[None, :] + shift)
        if s == 0 and t == 0:
            np.fill_diagonal(d, np.inf)
        best = min(best, d.min())
    assert best == pytest.approx(c.d_min)


@pytest.mark.parametrize("b", [2, 3, 6, 7])
def test_decision_boundary(b):
    c = Constellation(b)
    g = np.arange(c.size)
    p = c.map(g)
    eps = 1e-6 * c.spacing
    margin = c.spacing / 2
    for u in (1, -1, 1j, -1j):
        np.testing.assert_array_equal(c.demap(p + u * (margin - eps)), g)
    if not c.odd:
        # beyond the midpoint the neighbour wins
        assert c.demap(p[:1] + (margin + eps))[0] != g[0]


def test_wrap_folds_by_tau():
    c = Constellation(4, scale=0.7)
    g = np.arange(16)
    p = c.map(g) + c.tau * (3 - 2j)
    np.testing.assert_array_equal(c.demap(p), g)
    assert not np.array_equal(c.demap(p, wrap=False), g)


def test_constellation_validation():
    with pytest.raises(ValueError):
        Constellation(2, scale=0.0)
    with pytest.raises(ValueError):
        Constellation(2).map(np.array([4]))


@pytest.mark.parametrize("name", list(SCHEMES))
@pytest.mark.parametrize("dither", [False, True])
def test_noise_free_all_schemes(name, dither):
    H = random_channel(3, 4)
    cs = ChannelSet(TonePlan(1e6, 1e3, 1), H[None])
    rep = evaluate_scheme(cs, name)
    blocks = build_blocks(H, SCHEMES[name], rep.perms[0])
    out = run_link(H, blocks, rep.bits[:, 0], 2000, seed=1, dither=dither)
    assert out.total_errors == 0
    assert out.zf_residual < 1e-9


def test_dithered_power_bound():
    # small constellations with an idle line: the worst case without dither
    H = random_channel(8, 4)
    bits = np.array([2, 0, 2, 2])
    for perm in ([0, 1, 2, 3], [3, 1, 0, 2]):
        blocks = build_ordered_thp(H, Permutation(perm))
        rep = run_link(H, blocks, bits, 100_000, seed=2, dither=True)
        assert rep.tx_power.max() <= 1.02


def test_empirical_delta_e_two_bits():
    H = random_channel(9, 3)
    rep = run_link(H, build_reference_thp(H), [2, 2, 2], 200_000, seed=3, dither=True)
    assert rep.delta_e_db[0] == pytest.approx(delta_e_for_bits(2), abs=0.1)


def test_empirical_delta_e_falls_with_bits():
    H = random_channel(10, 3)
    blocks = build_reference_thp(H)
    de = [run_link(H, blocks, [b] * 3, 100_000, seed=4, dither=True).delta_e_db[0] for b in (2, 4, 6, 8)]
    assert all(x > y for x, y in zip(de, de[1:]))


def test_run_link_deterministic():
    H = random_channel(11, 3)
    blocks = build_reference_thp(H)
    a = run_link(H, blocks, [4, 2, 6], 500, noise_variance=0.05, seed=7)
    b = run_link(H, blocks, [4, 2, 6], 500, noise_variance=0.05, seed=7)
    np.testing.assert_array_equal(a.symbol_errors, b.symbol_errors)
    np.testing.assert_array_equal(a.tx_power, b.tx_power)


def test_noise_produces_errors():
    H = random_channel(12, 3)
    rep = run_link(H, build_reference_thp(H), [8, 8, 8], 2000, noise_variance=1.0, seed=1)
    assert rep.total_errors > 0
    assert np.all(rep.ser <= 1)


def test_idle_lines_not_counted():
    H = random_channel(13, 3)
    rep = run_link(H, build_reference_thp(H), [0, 4, 0], 300, seed=0)
    assert rep.active.tolist() == [False, True, False]
    assert rep.symbol_errors.tolist() == [0, 0, 0]


def test_run_link_argument_checks():
    H = random_channel(14, 3)
    blocks = build_reference_thp(H)
    with pytest.raises(DimensionError):
        run_link(np.eye(2), blocks, [2, 2, 2], 10)
    with pytest.raises(DimensionError):
        run_link(H, blocks, [2, 2], 10)
    with pytest.raises(ValueError):
        run_link(H, with_thresholds(blocks, [2, 2, 2]), [4, 2, 2], 10)
    with pytest.raises(ValueError):
        run_link(H, blocks, [2, 2, 2], 0)
    with pytest.raises(ValueError):
        run_link(H, blocks, [2, 2, 2], 10, noise_variance=-1.0)


def small_cable():
    return bundled_cable(lines=4, plan=TonePlan(2.1e6, 51.75e3 * 100, 20))


@pytest.mark.parametrize("name", ["THP", "THP-DO", "ER-THP-LRVB", "DP"])
def test_verify_e2e_noise_free(name):
    s = verify_e2e(small_cable(), name, n_symbols=300, tone_stride=3)
    assert s.total_errors == 0
    assert s.max_zf_residual < 1e-9
    assert len(s.tones) + len(s.skipped) == 7


def test_verify_e2e_noisy_reports():
    s = verify_e2e(small_cable(), "THP-VB", n_symbols=300, tone_stride=5, noise=True)
    assert s.noise_variance == pytest.approx(1 / GapParams().gamma_base)
    assert np.all(s.ser < 1e-2)


def test_verify_e2e_accepts_external_report():
    cs = small_cable()
    rep = evaluate_scheme(cs, "THP")
    dense = rep.bits.copy()
    dense[dense > 0] = 12
    heavy = type(rep)(rep.scheme, rep.strategy, dense, rep.rate_mbps, rep.perms, rep.failed_tones)
    # without noise the chain is exact for any allocation, including ones the SNR cannot carry
    s = verify_e2e(cs, "THP", n_symbols=100, tone_stride=7, report=heavy)
    assert s.total_errors == 0
