import math

import numpy as np
import pytest

from ergobands.errors import ValidationError
from ergobands.experiments import (ModelSpec, deviation_sweep, estimate_event_prob, figure_scatter, lemma_floor,
                                   ordered_map, seed_mean_sup, wilson_interval, write_sweep_csv)
from ergobands.potential import DistributionSpec, Rational


def test_wilson_interval_known_values():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and hi == pytest.approx(0.03699, abs=1e-4)
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)
    with pytest.raises(ValidationError):
        wilson_interval(1, 0)


def test_frequency_from_convergents():
    m = ModelSpec("amo")
    assert m.frequency(12) == Rational(17, 12)
    assert m.frequency(29) == Rational(41, 29)
    with pytest.raises(ValidationError):
        m.frequency(13)
    assert ModelSpec("amo", alpha="17/12").frequency(12) == Rational(17, 12)
    with pytest.raises(ValidationError):
        ModelSpec("amo", alpha="17/12").frequency(5)
    with pytest.raises(ValidationError):
        ModelSpec("gaussian")


def test_iid_prefix_consistency():
    m = ModelSpec("iid", seed=3)
    a, b = m.build(20).values, m.build(50).values
    assert np.array_equal(a, b[:20])


def test_amo_scatter_small():
    ds = figure_scatter(ModelSpec("amo", alpha="17/12"), 12)
    assert len(ds.centers) == 12
    assert np.all(np.diff(ds.centers) > 0)
    assert np.all(ds.rates >= lemma_floor(12) - 1e-12)


def test_scatter_csv_is_deterministic(tmp_path):
    m = ModelSpec("iid", seed=1)
    figure_scatter(m, 24).to_csv(tmp_path / "a.csv", "run")
    figure_scatter(m, 24).to_csv(tmp_path / "b.csv", "run")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    figure_scatter(m, 24).to_svg(tmp_path / "a.svg")
    text = (tmp_path / "a.svg").read_text()
    assert text.startswith("<svg") or text.startswith("<?xml")
    assert text.count("<circle") == 24


def test_free_rates_vanish():
    r = [float(np.max(figure_scatter(ModelSpec("free"), q).rates)) for q in (8, 32, 128)]
    assert r[0] > r[1] > r[2] and r[2] < 0.06


def test_sweep_single_q_matches_scatter(tmp_path):
    m = ModelSpec("amo")
    rows = deviation_sweep(m, [12])
    ds = figure_scatter(m, 12)
    assert rows[0].sup == pytest.approx(ds.sup_deviation())
    assert seed_mean_sup(rows) == {12: pytest.approx(ds.sup_deviation())}
    write_sweep_csv(rows, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().splitlines()[0].startswith("seed,q,sup")
    with pytest.raises(ValidationError):
        deviation_sweep(m, [29, 12])


def test_qsep_trivially_certain():
    dist = DistributionSpec.uniform_union([(-1.5, -1.0), (1.0, 1.5)])
    s = estimate_event_prob("qsep", dist, 40.0, 4, 30)
    assert s.p_hat == 1.0 and s.interval[1] == 1.0
    with pytest.raises(ValidationError):
        estimate_event_prob("qsep", dist, 1.0, 4, 10)
    with pytest.raises(ValidationError):
        estimate_event_prob("qnr", dist, 1.0, 8, 30, n=4)


def test_event_prob_independent_of_workers():
    dist = DistributionSpec.uniform_union([(-1.5, -1.0), (1.0, 1.5)])
    a = estimate_event_prob("qsep", dist, 0.05, 40, 30, seed=5)
    b = estimate_event_prob("qsep", dist, 0.05, 40, 30, seed=5, workers=2)
    assert a.to_dict() == b.to_dict()


def test_ordered_map_keeps_order():
    assert ordered_map(math.sqrt, [9, 4, 1], workers=2) == [3.0, 2.0, 1.0]
