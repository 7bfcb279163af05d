import math

import numpy as np
import pytest

from ergobands.errors import ValidationError
from ergobands.potential import (FIGURE_IID, DistributionSpec, Rational, cf_convergents, explicit, make_rng,
                                 partial_quotients, quasiperiodic_seq, read_csv, sample_iid, write_csv)


def test_sqrt2_convergents_end_at_1393_over_985():
    conv = cf_convergents("sqrt2", 9)
    assert [str(r) for r in conv][:4] == ["1/1", "3/2", "7/5", "17/12"]
    assert str(conv[-1]) == "1393/985"


def test_golden_minus_one_drops_duplicate_denominator():
    assert [str(r) for r in cf_convergents("golden-1", 6)] == ["1/1", "1/2", "2/3", "3/5", "5/8", "8/13"]


def test_partial_quotients_of_quadratic_irrationals():
    assert partial_quotients("sqrt2", 6) == [1, 2, 2, 2, 2, 2]
    assert partial_quotients("sqrt3", 5) == [1, 1, 2, 1, 2]
    assert partial_quotients("golden", 5) == [1, 1, 1, 1, 1]


def test_rational_alpha_terminates():
    with pytest.raises(ValidationError):
        partial_quotients("7/5", 5)


def test_rational_rejects_common_factor():
    with pytest.raises(ValidationError):
        Rational(2, 4)
    assert str(Rational.parse("239/169")) == "239/169"


def test_iid_samples_inside_support_and_prefix_consistent():
    a = sample_iid(FIGURE_IID, 50, 3).values
    b = sample_iid(FIGURE_IID, 200, 3).values
    assert np.array_equal(a, b[:50])
    assert np.all((np.abs(b) >= 1.0) & (np.abs(b) <= 1.5))


def test_uniform_union_weights_by_length():
    d = DistributionSpec.uniform_union([(0, 1), (2, 5)])
    x = d.sample(make_rng(0), 40000)
    assert abs(np.mean(x < 1.5) - 0.25) < 0.01


def test_bernoulli_frequencies():
    x = DistributionSpec.bernoulli(-1, 1, 0.3).sample(make_rng(1), 20000)
    assert set(np.unique(x)) == {-1.0, 1.0}
    assert abs(np.mean(x == -1) - 0.3) < 0.015


@pytest.mark.parametrize("bad", [
    dict(kind="uniform_union", intervals=((1.0, 0.0),)),
    dict(kind="uniform_union", intervals=((0.0, 2.0), (1.0, 3.0))),
    dict(kind="atoms", atoms=(0.0, 1.0), probs=(0.5, 0.6)),
    dict(kind="nope"),
])
def test_distribution_validation(bad):
    with pytest.raises(ValidationError):
        DistributionSpec(**bad)


def test_distribution_dict_roundtrip():
    for d in (FIGURE_IID, DistributionSpec.bernoulli(0, 2, 0.25), DistributionSpec.constant(1.5)):
        assert DistributionSpec.from_dict(d.to_dict()) == d


def test_quasiperiodic_values_and_bound():
    pot = quasiperiodic_seq(math.exp(0.25), math.sqrt(3), Rational(17, 12))
    k = np.arange(12)
    ref = 2 * math.exp(0.25) * np.cos(2 * np.pi * (math.sqrt(3) + k * 17 / 12))
    assert np.allclose(pot.values, ref, atol=1e-12)
    assert pot.bound == pytest.approx(2 * math.exp(0.25))


def test_periodic_indexing_and_window():
    pot = explicit([1.0, -2.0, 0.5])
    assert pot[3] == 1.0 and pot[-1] == 0.5
    assert pot.energy_window() == (-14.0, 14.0)
    with pytest.raises(ValueError):
        pot.values[0] = 3.0


def test_csv_roundtrip(tmp_path):
    pot = sample_iid(FIGURE_IID, 17, 5)
    write_csv(pot, tmp_path / "v.csv")
    assert (tmp_path / "v.csv").read_text().startswith("# period=17 seed=5")
    back = read_csv(tmp_path / "v.csv")
    assert np.array_equal(back.values, pot.values)


def test_csv_period_mismatch(tmp_path):
    (tmp_path / "v.csv").write_text("# period=3 seed=0\n1.0\n2.0\n")
    with pytest.raises(ValidationError):
        read_csv(tmp_path / "v.csv")
