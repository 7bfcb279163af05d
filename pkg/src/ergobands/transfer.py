"""2x2 transfer matrices: scaled double products, MPFR products, Dirichlet determinants.

Conventions
-----------
One step is ``T(v, E) = [[E - v, -1], [1, 0]]`` and the q-step product is
``T(V[q-1], E) @ ... @ T(V[0], E)``.  With ``D[a,b](E) = det(E - H|[a,b])``
(Dirichlet restriction, ``D = 1`` on empty arcs) the product is::

    [[ D[0,q-1], -D[1,q-1] ],
     [ D[0,q-2], -D[1,q-2] ]]

and ``det_poly`` returns ``P[a,b] = det(H|[a,b] - E) = (-1)**(b-a+1) * D[a,b]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import gmpy2
import numpy as np
from gmpy2 import mpfr

from .errors import PrecisionError, ValidationError

DOUBLE = 53
MIN_BITS = 64
_LN2 = math.log(2.0)


def mp_context(bits: int):
    if bits < MIN_BITS:
        raise PrecisionError(f"precision {bits} bits is below the {MIN_BITS}-bit minimum")
    return gmpy2.context(gmpy2.get_context(), precision=int(bits))


def use_double(precision: int | None) -> bool:
    """None and 53 select double arithmetic; anything else must be >= MIN_BITS."""
    if precision is None or precision == DOUBLE:
        return True
    if precision < MIN_BITS:
        raise PrecisionError(f"precision {precision} bits is below the {MIN_BITS}-bit minimum")
    return False


def is_mp(x) -> bool:
    return isinstance(x, type(mpfr(0)))


def to_mp(x, bits: int):
    """Round ``x`` (float, str, int or mpfr) to an mpfr of ``bits`` bits."""
    return mpfr(x, int(bits))


def mp_log(x) -> float:
    """Natural log of |x| as a float, valid far outside the double exponent range."""
    if x == 0:
        return -math.inf
    e, m = gmpy2.frexp(abs(x))
    return math.log(float(m)) + e * _LN2


def transfer_step(v, E):
    if is_mp(E):
        return [[E - v, mpfr(-1)], [mpfr(1), mpfr(0)]]
    return np.array([[E - v, -1.0], [1.0, 0.0]])


@dataclass(frozen=True)
class ScaledMatrix2:
    """``exp(log_scale) * [[a, b], [c, d]]``.

    Double entries are kept with max|entry| in [1/2, 2] by exact power-of-two
    rescaling; MPFR entries carry their own exponent and ``log_scale`` stays 0.
    """

    a: object
    b: object
    c: object
    d: object
    log_scale: float = 0.0
    precision: int = DOUBLE

    @property
    def entries(self):
        return ((self.a, self.b), (self.c, self.d))

    def unscaled(self) -> np.ndarray:
        s = math.exp(self.log_scale)
        return np.array([[float(self.a), float(self.b)], [float(self.c), float(self.d)]]) * s

    def det(self):
        """Determinant of the unscaled matrix (1 for products of transfer steps)."""
        core = self.a * self.d - self.b * self.c
        if self.precision > DOUBLE:
            return core
        return float(core) * math.exp(2.0 * self.log_scale)

    def trace(self):
        t = self.a + self.d
        if self.precision > DOUBLE:
            return t
        return float(t) * math.exp(self.log_scale)

    def log_norm(self) -> float:
        """log of the largest singular value."""
        if self.precision > DOUBLE:
            e, _ = gmpy2.frexp(max(abs(self.a), abs(self.b), abs(self.c), abs(self.d)))
            with mp_context(self.precision):
                s = gmpy2.mul_2exp(mpfr(1), -e)
                a, b, c, d = (float(x * s) for x in (self.a, self.b, self.c, self.d))
            return _log_sigma_max(a, b, c, d) + e * _LN2
        return _log_sigma_max(float(self.a), float(self.b), float(self.c), float(self.d)) + self.log_scale


def _log_sigma_max(a, b, c, d) -> float:
    # sigma_max^2 = (F + sqrt(F^2 - 4 det^2)) / 2 with F the squared Frobenius norm.
    f = a * a + b * b + c * c + d * d
    det = a * d - b * c
    disc = max(f * f - 4.0 * det * det, 0.0)
    s2 = 0.5 * (f + math.sqrt(disc))
    return 0.5 * math.log(s2)


def transfer_product(V, E, precision: int | None = None) -> ScaledMatrix2:
    """Product T(V[q-1], E) ... T(V[0], E).

    ``precision`` None or 53 selects the scaled double path; otherwise entries
    are MPFR numbers of that many bits.
    """
    values = _values(V)
    if values.size == 0:
        raise ValidationError("empty potential")
    if use_double(precision):
        E = float(E)
        a, b, c, d = 1.0, 0.0, 0.0, 1.0
        log_scale = 0.0
        for v in values.tolist():
            x = E - v
            a, b, c, d = x * a - c, x * b - d, a, b
            m = max(abs(a), abs(b), abs(c), abs(d))
            if m > 2.0 or m < 0.5:
                _, e = math.frexp(m)
                a, b, c, d = (math.ldexp(a, -e), math.ldexp(b, -e), math.ldexp(c, -e), math.ldexp(d, -e))
                log_scale += e * _LN2
        return ScaledMatrix2(a, b, c, d, log_scale, DOUBLE)
    with mp_context(precision):
        E = mpfr(E)
        one, zero = mpfr(1), mpfr(0)
        a, b, c, d = one, zero, zero, one
        for v in values.tolist():
            x = E - v
            a, b, c, d = x * a - c, x * b - d, a, b
        return ScaledMatrix2(a, b, c, d, 0.0, int(precision))


def log_norm(V, E, precision: int | None = None) -> float:
    return transfer_product(V, E, precision).log_norm()


def log_norms(values: np.ndarray, energies: np.ndarray) -> np.ndarray:
    """Vectorised log||T(V[n-1],E)...T(V[0],E)|| for a batch of potentials.

    ``values`` has shape (..., n) and broadcasts against ``energies`` of shape (m,);
    the result has shape (m, ...).  Double arithmetic with power-of-two rescaling.
    """
    values = np.asarray(values, dtype=float)
    E = np.asarray(energies, dtype=float).reshape((-1,) + (1,) * (values.ndim - 1))
    shape = np.broadcast_shapes(E.shape, values.shape[:-1])
    a = np.ones(shape)
    b = np.zeros(shape)
    c = np.zeros(shape)
    d = np.ones(shape)
    expo = np.zeros(shape, dtype=np.int64)
    n = values.shape[-1]
    for k in range(n):
        x = E - values[..., k]
        a, b, c, d = x * a - c, x * b - d, a, b
        if k % 8 == 7 or k == n - 1:
            m = np.maximum(np.maximum(np.abs(a), np.abs(b)), np.maximum(np.abs(c), np.abs(d)))
            _, e = np.frexp(m)
            a, b, c, d = np.ldexp(a, -e), np.ldexp(b, -e), np.ldexp(c, -e), np.ldexp(d, -e)
            expo += e
    f = a * a + b * b + c * c + d * d
    det = a * d - b * c
    s2 = 0.5 * (f + np.sqrt(np.maximum(f * f - 4.0 * det * det, 0.0)))
    return 0.5 * np.log(s2) + expo * _LN2


def _values(V) -> np.ndarray:
    return np.asarray(getattr(V, "values", V), dtype=float)


def arc_values(V, a: int, b: int) -> np.ndarray:
    """V read cyclically on the arc a, a+1, ..., b (b may exceed q-1 or be negative)."""
    values = _values(V)
    q = values.size
    length = b - a + 1
    if length > q:
        raise ValidationError(f"arc [{a}, {b}] has {length} sites, more than q = {q}")
    if length <= 0:
        return values[:0]
    return values[np.arange(a, b + 1) % q]


def det_poly(V, a: int, b: int, E, precision: int | None = None):
    """P[a,b](E) = det(H|[a,b] - E) with Dirichlet boundary conditions; 1 if a > b."""
    sites = arc_values(V, a, b)
    if use_double(precision):
        p_prev, p = 0.0, 1.0
        E = float(E)
        for v in sites.tolist():
            p_prev, p = p, (v - E) * p - p_prev
        return p
    with mp_context(precision):
        E = mpfr(E)
        p_prev, p = mpfr(0), mpfr(1)
        for v in sites.tolist():
            p_prev, p = p, (v - E) * p - p_prev
        return p


def log_abs_det_polys(values: np.ndarray, energies: np.ndarray) -> np.ndarray:
    """log|P| of every prefix of the rows of ``values``, vectorised.

    ``values`` has shape (s, L); the result has shape (m, s, L + 1) where
    ``[..., k]`` is log|P| over the first k sites (k = 0 gives log 1 = 0).
    """
    values = np.asarray(values, dtype=float)
    E = np.asarray(energies, dtype=float)[:, None]
    s, L = values.shape
    out = np.zeros((E.shape[0], s, L + 1))
    p_prev = np.zeros((E.shape[0], s))
    p = np.ones((E.shape[0], s))
    shift = np.zeros((E.shape[0], s))
    with np.errstate(divide="ignore"):
        for k in range(L):
            p_prev, p = p, (values[None, :, k] - E) * p - p_prev
            m = np.maximum(np.abs(p), np.abs(p_prev))
            big = m > 1e150
            if big.any():
                _, e = np.frexp(np.where(big, m, 1.0))
                p, p_prev = np.ldexp(p, -e), np.ldexp(p_prev, -e)
                shift += e * _LN2
            out[:, :, k + 1] = np.log(np.abs(p)) + shift
    return out


def required_precision(V, energies=None, safety: float = 1.5, guard: int = 64) -> int:
    """Bits needed so trace cancellation (about gamma*q nats) leaves ``guard`` bits.

    gamma_max is taken from a double-precision pilot over ``energies`` (default:
    64 points across the spectral hull).  Rounded up to a multiple of 64.
    """
    values = _values(V)
    q = values.size
    if energies is None:
        energies = np.linspace(values.min() - 2.0, values.max() + 2.0, 64)
    gmax = max(float(np.max(log_norms(values[None, :], np.asarray(energies)))) / q, 0.0)
    bits = safety * gmax * q / _LN2 + guard
    return max(128, int(math.ceil(bits / 64.0)) * 64)
