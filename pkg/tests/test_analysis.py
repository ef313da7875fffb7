"""Closed-form models and the metrics engine."""

import math

import numpy as np
import pytest

from closfab.analysis import (
    BlockingModelInput,
    InversionTracker,
    RunMetrics,
    blocking_delay,
    crrd_crosspoints,
    finalize,
    md1_wait,
    p_ctr,
)


def test_p_ctr_examples():
    assert p_ctr(0.8, 0.25, 4) == pytest.approx(0.1296, abs=1e-15)
    assert p_ctr(0.0, 0.25, 4) == 0.0
    assert p_ctr(0.9, 1.0, 4) == 0.0


def test_p_ctr_independent_reevaluation():
    # oracle: repeated multiplication instead of the power operator
    for pp in np.linspace(0.0, 1.0, 11):
        for ps in np.linspace(0.0, 1.0, 11):
            for bd in (1, 2, 4, 8):
                prod = 1.0
                for _ in range(bd):
                    prod *= pp * (1.0 - ps)
                got = p_ctr(pp, ps, bd)
                assert got == pytest.approx(prod, rel=1e-12, abs=1e-300)


def test_blocking_delay_example():
    got = blocking_delay(BlockingModelInput(rho=0.5, mu=1.0, BD=4, n_ingr=4))
    p_c = (0.5 * 0.75) ** 4
    assert p_c == pytest.approx(0.019775390625, rel=1e-12)
    p_fwd = 0.5 * (1 - p_c)
    assert p_fwd == pytest.approx(0.4901123046875, rel=1e-12)
    expect = (1.0 / (2.0 * p_fwd)) * (0.5 / 0.5)
    assert got == pytest.approx(expect, rel=1e-12)
    assert got == pytest.approx(1.02017, rel=1e-4)


def test_blocking_delay_grid_against_independent_form():
    # independent re-derivation: w = 1 / (2 mu (1 - ctr)(1 - rho)) since
    # P_p = rho cancels one rho factor
    rhos = np.linspace(0.01, 0.95, 25)
    for rho in rhos:
        for bd in (1, 4, 16):
            got = blocking_delay(BlockingModelInput(rho=float(rho), mu=1.0, BD=bd, n_ingr=4))
            ctr = (rho * 0.75) ** bd
            expect = 1.0 / (2.0 * (1.0 - ctr) * (1.0 - rho)) * 1.0
            assert got == pytest.approx(expect, rel=1e-12)


def test_blocking_delay_limits():
    assert blocking_delay(BlockingModelInput(rho=0.0)) == 0.0
    # BD -> infinity: P_ctr -> 0, so w -> 1/(2 rho mu) * rho/(1-rho)
    got = blocking_delay(BlockingModelInput(rho=0.5, mu=1.0, BD=4000, n_ingr=4))
    assert got == pytest.approx((1 / (2 * 0.5)) * (0.5 / 0.5), rel=1e-12)
    with pytest.raises(ValueError):
        blocking_delay(BlockingModelInput(rho=1.0))


def test_blocking_delay_monotone_in_rho_and_bd():
    grid = np.linspace(0.05, 0.9, 50)
    for bd in (1, 2, 4, 8):
        vals = [blocking_delay(BlockingModelInput(rho=float(r), BD=bd)) for r in grid]
        assert all(b > a for a, b in zip(vals, vals[1:]))
    for rho in (0.2, 0.5, 0.8):
        vals = [blocking_delay(BlockingModelInput(rho=rho, BD=bd)) for bd in (1, 2, 4, 8, 16)]
        assert all(b < a for a, b in zip(vals, vals[1:]))


def test_md1_wait_examples():
    assert md1_wait(0.5) == pytest.approx(0.5, rel=1e-12)
    assert md1_wait(0.0) == 0.0
    assert md1_wait(0.9) == pytest.approx(4.5, rel=1e-12)
    with pytest.raises(ValueError):
        md1_wait(1.0)


def test_md1_reduction_of_blocking_model():
    # forcing mu' = mu (mu = 1) reduces the blocking form to md1_wait
    for rho in np.linspace(0.05, 0.9, 20):
        reduced = (1.0 / 2.0) * (rho / (1.0 - rho))
        assert reduced == pytest.approx(md1_wait(float(rho)), rel=1e-12)


def test_crrd_crosspoints_examples():
    assert crrd_crosspoints(8, 8, 8) == 169344
    assert crrd_crosspoints(2, 2, 1) == 0
    assert crrd_crosspoints(2, 2, 2) == 18


def test_crrd_crosspoints_exactness_grid():
    from fractions import Fraction
    for n in (2, 3, 8):
        for k in (2, 8):
            for m in (1, 2, 8, 16):
                exact = Fraction(3, 4) * n * k * m * (n * k - 1) * (m - 1)
                assert crrd_crosspoints(n, k, m) == int(exact)


def test_inversion_tracker():
    t = InversionTracker(4)
    assert not t.record(0, 0)
    assert not t.record(0, 1)
    assert not t.record(1, 5)
    assert t.record(0, 0)      # seq 0 after max 1
    assert not t.record(0, 2)
    assert t.record(1, 3)
    assert t.inversions == 2


def test_finalize_zero_delivered_is_undefined_not_zero():
    m = RunMetrics(n=8, k=8, warmup_slots=10, total_slots=100)
    rec = finalize(m)
    assert rec["throughput"] == 0.0
    assert math.isnan(rec["mean_delay"])
    assert math.isnan(rec["ooo_fraction"])


def test_finalize_basic_rates():
    m = RunMetrics(n=8, k=8, warmup_slots=100, total_slots=1100)
    m.delivered = 32000
    m.delay_sum = 32000 * 12
    m.ooo_inversions = 320
    rec = finalize(m)
    assert rec["throughput"] == pytest.approx(32000 / (64 * 1000))
    assert rec["mean_delay"] == pytest.approx(12.0)
    assert rec["ooo_fraction"] == pytest.approx(0.01)


def test_finalize_pop_east_proportions():
    m = RunMetrics(n=2, k=2, warmup_slots=0, total_slots=10)
    m.delivered = 1
    m.pop_east = np.array([[[3, 1], [3, 1]], [[0, 0], [0, 0]]], dtype=np.int64)
    rec = finalize(m)
    props = rec["pop_east_proportions"]
    assert props[0].sum() == pytest.approx(1.0)
    assert props[0, 0, 0] == pytest.approx(3 / 8)
    assert props[1].sum() == 0.0


def test_im_wait_within_factor_two_of_blocking_model():
    # sanity band, not equality: the model is a simplified estimate; the
    # measured quantity is the FIFO sojourn in slots (dispatch - arrival + 1)
    from closfab.cli import run_single
    from closfab.core import SwitchConfig
    from closfab.traffic import TrafficKind, TrafficModel

    for rho in (0.1, 0.3, 0.6):
        cfg = SwitchConfig(n=8, k=8, SP=2, seed=4)
        s = run_single(cfg, TrafficModel(TrafficKind.BERNOULLI_UNIFORM, rho), 20_000)
        model = blocking_delay(BlockingModelInput(rho=rho, mu=1.0, BD=4, n_ingr=4))
        ratio = s["mean_im_wait"] / model
        assert 0.5 <= ratio <= 2.0, (rho, s["mean_im_wait"], model)


def test_pop_east_uniform_traffic_is_even():
    # uniform arrivals spread packets evenly over every east link for both
    # dispatch modes
    from closfab.cli import run_single
    from closfab.core import SwitchConfig
    from closfab.traffic import TrafficKind, TrafficModel

    for dispatch in ("dynamic", "static"):
        cfg = SwitchConfig(n=8, k=8, SP=2, dispatch=dispatch, seed=6)
        s = run_single(cfg, TrafficModel(TrafficKind.BERNOULLI_UNIFORM, 0.7),
                       20_000, collect_pop=True)
        props = s["pop_east_proportions"]
        links = 8 * 7
        expect = 1.0 / links
        assert props.shape == (8, 8, 7)
        assert abs(props.sum() - 8.0) < 1e-9
        assert props.max() < 1.6 * expect
        assert props.min() > 0.6 * expect
