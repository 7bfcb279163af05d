import math

import numpy as np
import pytest

from ergobands.errors import NearSingularError, ValidationError
from ergobands.potential import explicit
from ergobands.resonance import (Arc, ResonanceReport, circle_diameter, classify_site, default_grid,
                                 green_entry, qnr_check, resonance_energy_set, resonant_set)
from oracles import gauss_inverse


def test_single_site_arc():
    assert green_entry([0.7], Arc(0, 0, 1), 0.2, 0, 0) == pytest.approx(1 / 0.5)


def test_green_entries_match_gauss_inverse_on_wrapped_arcs():
    rng = np.random.default_rng(0)
    for _ in range(60):
        q = int(rng.integers(8, 14))
        n = int(rng.integers(0, 4))
        V = rng.uniform(-2, 2, q)
        E = rng.uniform(-3, 3)
        arc = Arc(int(rng.integers(0, q)), n, q)
        s = arc.sites()
        L = len(s)
        G = gauss_inverse(np.diag(V[s]) + np.diag(np.ones(L - 1), 1) + np.diag(np.ones(L - 1), -1) - E * np.eye(L))
        for i in range(L):
            for k in range(L):
                assert green_entry(V, arc, E, s[i], s[k]) == pytest.approx(abs(G[i, k]), rel=1e-9)


def test_gauge_phases_do_not_change_moduli():
    rng = np.random.default_rng(1)
    V = rng.uniform(-2, 2, 10)
    arc = Arc(8, 3, 10)  # wraps through site 0
    s = arc.sites()
    k = rng.uniform(0, 2 * math.pi)
    H = np.diag(V[s]).astype(complex)
    for i in range(6):
        H[i + 1, i] = np.exp(1j * k)
        H[i, i + 1] = np.exp(-1j * k)
    G = np.linalg.inv(H - 0.4 * np.eye(7))
    assert green_entry(V, arc, 0.4, s[0], s[6]) == pytest.approx(abs(G[0, 6]), rel=1e-10)


def test_reflection_symmetry():
    V = np.array([0.3, -1.0, 0.5, -1.0, 0.3, 9.0])
    arc = Arc(2, 2, 6)
    assert green_entry(V, arc, 0.1, 0, 1) == pytest.approx(green_entry(V, arc, 0.1, 4, 3))


def test_near_singular_denominator():
    with pytest.raises(NearSingularError) as exc:
        green_entry([0.0, 0.0, 0.0], Arc(1, 1, 3), 0.0, 0, 2)
    assert exc.value.magnitude == -math.inf
    assert not classify_site([0.0, 0.0, 0.0], 1, 0.0, 0.1, 1, 0.0)


def test_arc_bounds():
    with pytest.raises(ValidationError):
        Arc(0, 3, 5)
    with pytest.raises(ValidationError):
        Arc(0, 1, 9).position(4)


def test_deep_well_is_resonant_and_far_energy_is_not():
    # |G(1, 0)| = |G(1, 2)| = 10/20; the background of 10s has gamma(0) = arccosh(5)
    V = np.array([10.0, 0.0, 10.0, 10.0, 10.0])
    assert not classify_site(V, 1, 0.0, 0.1, 1, math.acosh(5.0))
    W = np.random.default_rng(2).uniform(-1, 1, 30)
    # gamma(E) at E = 40 is about log 40
    assert classify_site(W, 7, 40.0, 0.2, 5, math.log(40.0))


def test_epsilon_above_gamma_leaves_only_singular_sites():
    V = np.random.default_rng(3).uniform(-1, 1, 20)
    rep = resonant_set(V, 0.31, 3.0, 3, 0.5)
    assert rep.resonant_sites == [] and rep.diameter == 0 and rep.qnr


def test_circle_diameter():
    assert circle_diameter([], 10) == 0 and circle_diameter([4], 10) == 0
    assert circle_diameter([0, 9], 10) == 1
    assert circle_diameter([0, 5, 7], 10) == 5


def test_free_case_is_translation_invariant():
    rep = resonant_set(np.zeros(20), 0.37, 0.05, 4, 0.0)
    assert rep.diameter in (0, 10)
    assert len(rep.resonant_sites) in (0, 20)


def test_report_json():
    rep = ResonanceReport(0.5, 0.1, 3, 20, [1, 2], 1, True)
    assert rep.to_json() == '{"E": 0.5, "diameter": 1, "epsilon": 0.1, "n": 3, "qnr": true, "resonant_sites": [1, 2]}'


def test_qnr_true_for_huge_constant_potential():
    V = explicit(np.full(30, 1e6))
    ok, failing = qnr_check(V, 0.1, 4, lambda E: np.log(np.abs(1e6 - E)))
    assert ok and failing == []


def test_failing_energy_refails_individually():
    V = explicit(np.random.default_rng(4).uniform(-2, 2, 40))
    ok, failing = qnr_check(V, 0.05, 4, 0.3)
    assert not ok
    assert not resonant_set(V, failing[0], 0.05, 4, 0.3).qnr


def test_default_grid_spacing():
    g = default_grid(explicit(np.zeros(10), bound=1.0))
    assert g[0] == -13.0 and g[-1] == 13.0
    assert np.diff(g).max() == pytest.approx(1e-3 * 26.0)


def test_three_site_resonance_intervals():
    # |G(1,0)| = |G(1,2)| = 1/|E^2 - 2| on three free sites: resonant iff |E^2 - 2| <= e^-0.1
    grid = np.linspace(-3, 3, 601) + 1e-4
    got = resonance_energy_set(np.zeros(3), 1, 0.1, 1, 0.0, grid)
    a, b = math.sqrt(2 - math.exp(-0.1)), math.sqrt(2 + math.exp(-0.1))
    assert len(got) == 2
    assert got[0] == pytest.approx((-b, -a), abs=2e-4)
    assert got[1] == pytest.approx((a, b), abs=2e-4)


def test_resonance_interval_count_bound():
    rng = np.random.default_rng(5)
    for n in (1, 2, 4):
        V = rng.uniform(-2, 2, 3 * n + 3)
        got = resonance_energy_set(V, 0, 0.05, n, 0.4, np.linspace(-5, 5, 2001))
        assert len(got) <= 2 * n + 1
