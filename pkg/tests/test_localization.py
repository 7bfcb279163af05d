import math

import numpy as np
import pytest

from ergobands.errors import ValidationError
from ergobands.floquet import eigenpairs
from ergobands.localization import (center_drift, center_drifts, check_decay_bound, circle_distance, default_C,
                                    localization_profile, separation_report, wronskian)


def test_circle_distance():
    assert circle_distance(0, 9, 10) == 1 and circle_distance(2, 7, 10) == 5
    assert list(circle_distance(np.arange(4), 0, 4)) == [0, 1, 2, 1]


def test_delta_profile_is_clamped_and_flagged():
    psi = np.zeros(10)
    psi[3] = 1.0
    p = localization_profile(psi, 1, 1)
    assert p.center == 3 and p.clamped
    assert all(v == p.floor for _, v in p.decay_points)


def test_synthetic_exponential_rate():
    q = 61
    psi = np.exp(-0.3 * circle_distance(np.arange(q), 5, q))
    psi /= np.linalg.norm(psi)
    p = localization_profile(psi, 2, 1)
    assert p.center == 5
    assert p.fitted_rate == pytest.approx(-0.3, abs=1e-6)
    assert all(d > 2 for d, _ in p.decay_points)


def test_ties_pick_lowest_index():
    assert localization_profile(np.array([0.5, 0.7, 0.7, 0.1]), 1, 0).center == 1


def test_flat_vector_has_no_decay():
    p = localization_profile(np.full(16, 0.25 + 0j), 1, 1)
    assert abs(p.fitted_rate) < 1e-12


def test_zero_vector_rejected():
    with pytest.raises(ValidationError):
        localization_profile(np.zeros(5), 1, 1)


def test_decay_bound_checks():
    q = 41
    psi = np.exp(-0.5 * circle_distance(np.arange(q), 0, q))
    p = localization_profile(psi / np.linalg.norm(psi), 2, 1)
    assert check_decay_bound(p, 0.6, 0.1) == (True, 0.0)
    ok, worst = check_decay_bound(p, 0.9, 0.1)
    assert not ok and worst > 0
    # monotone in epsilon
    assert check_decay_bound(p, 0.9, 0.3)[0]
    # vacuous when gamma <= 2 eps
    assert check_decay_bound(localization_profile(np.ones(8), 1, 1), 0.0, 0.1) == (True, 0.0)


def test_default_C():
    assert default_C(0.1, 0.5) == 2.0
    assert default_C(1.0, 0.1) == pytest.approx(20.0)


def test_wronskian_antisymmetry_and_telescoping():
    rng = np.random.default_rng(0)
    a = rng.normal(size=9) + 1j * rng.normal(size=9)
    b = rng.normal(size=9) + 1j * rng.normal(size=9)
    assert np.allclose(wronskian(a, a), 0)
    W = wronskian(a, b)
    assert abs(np.sum(W - np.roll(W, 1))) < 1e-12
    with pytest.raises(ValidationError):
        wronskian(a, b[:5])


def test_wronskian_identity_for_eigenpairs():
    V = np.random.default_rng(1).uniform(-2, 2, 24)
    pairs = eigenpairs(V, 0.0, 256)
    p, r = pairs[3], pairs[17]
    W = wronskian(p, r)
    for x in range(24):
        lhs = W[x] - W[x - 1]
        rhs = (p.E - r.E) * p.psi[x] * r.psi[x]
        assert abs(complex(lhs - rhs)) < 1e-10


def test_impurity_bound_state_does_not_drift():
    V = np.zeros(101)
    V[40] = 5.0
    d = center_drift(V, 101)
    assert d.drift == 0 and not d.flat and set(d.centers) == {40}


def test_free_drift_is_flagged_sentinel():
    d = center_drifts(np.zeros(12))
    assert all(x.flat and x.drift == 6 for x in d)


def test_drift_ignores_kappa_shift_by_period():
    V = np.random.default_rng(2).uniform(-3, 3, 30)
    k = np.linspace(0, math.pi / 30, 5)
    a = center_drifts(V, k)
    b = center_drifts(V, k + 2 * math.pi / 30)
    assert [x.centers for x in a] == [x.centers for x in b]


def test_separation_free_q5():
    rep = separation_report(np.zeros(5), 0.1)
    # 2cos(2 pi m / 5): 2, then two double eigenvalues
    assert rep.min_gap == 0 and not rep.qsep
    assert float(rep.min_distinct_gap) == pytest.approx(2 - 2 * math.cos(2 * math.pi / 5), abs=1e-12)


def test_separation_two_sites():
    rep = separation_report(np.zeros(2), 0.1)
    assert float(rep.min_gap) == pytest.approx(4.0) and rep.qsep and rep.gap_argmin == (1, 2)


def test_adjacent_gap_is_global_min():
    rng = np.random.default_rng(3)
    for q in range(2, 11):
        V = rng.uniform(-2, 2, q)
        rep = separation_report(V, 0.1)
        ev = np.linalg.eigvalsh(np.diag(V) + np.diag(np.ones(q - 1), 1) + np.diag(np.ones(q - 1), -1)
                                + (np.eye(q, k=q - 1) + np.eye(q, k=1 - q) if q > 2 else np.diag(np.ones(q - 1), 1)
                                   + np.diag(np.ones(q - 1), -1)))
        brute = min(abs(a - b) for i, a in enumerate(ev) for b in ev[i + 1:])
        assert float(rep.min_gap) == pytest.approx(brute, abs=1e-9)
