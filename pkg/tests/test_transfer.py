import math

import numpy as np
import pytest

from ergobands.errors import PrecisionError, ValidationError
from ergobands.transfer import (det_poly, log_abs_det_polys, log_norm, log_norms, required_precision,
                                transfer_product)
from oracles import lu_det


def _dense_product(V, E):
    M = np.eye(2)
    for v in V:
        M = np.array([[E - v, -1.0], [1.0, 0.0]]) @ M
    return M


def test_scaled_product_matches_dense():
    rng = np.random.default_rng(0)
    for q in (1, 2, 7, 30):
        V = rng.uniform(-2, 2, q)
        E = rng.uniform(-3, 3)
        assert np.allclose(transfer_product(V, E).unscaled(), _dense_product(V, E), rtol=1e-12, atol=1e-12)


def test_mp_product_matches_double_and_is_unimodular():
    V = np.random.default_rng(1).uniform(-2, 2, 25)
    d = transfer_product(V, 0.3)
    m = transfer_product(V, 0.3, 256)
    assert float(m.trace()) == pytest.approx(d.trace(), rel=1e-10)
    assert abs(float(m.det()) - 1.0) < 1e-60
    assert abs(d.det() - 1.0) < 1e-9


def test_product_entries_are_dirichlet_determinants():
    V = np.random.default_rng(2).uniform(-2, 2, 6)
    E = 0.7
    M = transfer_product(V, E).unscaled()
    # D = det(E - H|arc) = (-1)^len P
    D = lambda a, b: (-1) ** (b - a + 1) * det_poly(V, a, b, E)
    assert M[0, 0] == pytest.approx(D(0, 5))
    assert M[0, 1] == pytest.approx(-D(1, 5))
    assert M[1, 0] == pytest.approx(D(0, 4))
    assert M[1, 1] == pytest.approx(-D(1, 4))


def test_det_poly_matches_lu_oracle():
    rng = np.random.default_rng(3)
    for _ in range(50):
        L = int(rng.integers(1, 9))
        V = rng.uniform(-3, 3, 12)
        a = int(rng.integers(-5, 10))
        E = rng.uniform(-4, 4)
        sites = [V[(a + k) % 12] for k in range(L)]
        H = np.diag(sites) + np.diag(np.ones(L - 1), 1) + np.diag(np.ones(L - 1), -1)
        ref = lu_det(H - E * np.eye(L)).real
        assert det_poly(V, a, a + L - 1, E) == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_det_poly_empty_arc_is_one_and_too_long_arc_fails():
    assert det_poly([1.0, 2.0], 1, 0, 0.3) == 1.0
    with pytest.raises(ValidationError):
        det_poly([1.0, 2.0], 0, 2, 0.3)


def test_log_norms_vectorised_matches_scalar():
    rng = np.random.default_rng(4)
    V = rng.uniform(-2, 2, (3, 400))
    E = np.array([-1.0, 0.2, 2.5])
    L = log_norms(V, E)
    assert L.shape == (3, 3)
    for i, e in enumerate(E):
        for s in range(3):
            assert L[i, s] == pytest.approx(log_norm(V[s], e), rel=1e-10)


def test_log_norm_survives_overflow_range():
    # growth factor (E + sqrt(E^2 - 4))/2 per step: the norm is ~1e6000, far past double range
    lam = (1e3 + math.sqrt(1e6 - 4)) / 2
    assert log_norm(np.zeros(2000), 1e3) == pytest.approx(2000 * math.log(lam), rel=1e-9)


def test_log_abs_det_polys_prefixes():
    rng = np.random.default_rng(5)
    V = rng.uniform(-2, 2, (2, 9))
    E = np.array([0.1, -1.3])
    out = log_abs_det_polys(V, E)
    for i, e in enumerate(E):
        for s in range(2):
            for k in range(10):
                assert out[i, s, k] == pytest.approx(math.log(abs(det_poly(V[s], 0, k - 1, e))), abs=1e-9)


def test_precision_floor_and_heuristic():
    with pytest.raises(PrecisionError):
        transfer_product([0.0], 0.0, 32)
    V = np.random.default_rng(6).uniform(-1.5, 1.5, 400)
    bits = required_precision(V)
    assert bits % 64 == 0 and bits >= 128
    assert required_precision(np.zeros(4)) == 128
