"""Discriminant, bands and Floquet eigenpairs of the q-periodic operator.

The Floquet matrix ``A(kappa)`` acts on Z_q by
``(A psi)(x) = e^{i kappa} psi(x-1) + e^{-i kappa} psi(x+1) + V(x) psi(x)``.
Writing ``psi(x) = e^{i kappa x} phi(x)`` turns it into the real tridiagonal
matrix with unit hoppings and corners ``M[0, q-1] = e^{i q kappa}``,
``M[q-1, 0] = e^{-i q kappa}``; every solver below works in that gauge.

Eigenvalues of ``A(kappa)`` are the roots of ``Delta(E) = 2 cos(q kappa)``
where ``Delta`` is the trace of the q-step transfer matrix.  Band j is swept
by the j-th eigenvalue between ``kappa = 0`` (``Delta = 2``) and
``kappa = pi/q`` (``Delta = -2``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import gmpy2
import numpy as np
from gmpy2 import mpc, mpfr

from .errors import CertificationError, PrecisionError, ValidationError
from .transfer import DOUBLE, mp_context, mp_log, required_precision, use_double

# Below this many bits of slack the value of Delta near +-2 is not trustworthy.
_SLACK_BITS = 20
_MAX_NEWTON = 400


def _values(V) -> np.ndarray:
    return np.asarray(getattr(V, "values", V), dtype=float)


class Discriminant:
    """Repeated MPFR evaluation of Delta, Delta' and Delta'' for one potential."""

    def __init__(self, V, precision: int):
        self.values = _values(V)
        if self.values.size == 0:
            raise ValidationError("empty potential")
        self.q = int(self.values.size)
        self.precision = int(precision)
        with mp_context(self.precision):
            self._v = [mpfr(float(v)) for v in self.values]

    def __call__(self, E, order: int = 0):
        """Returns (Delta, Delta', Delta'') up to ``order`` (others None)."""
        with mp_context(self.precision):
            E = mpfr(E)
            out = self._eval(E, order)
        return out

    def _eval(self, E, order):
        # x_k = D[0,k], y_k = D[1,k] with D = det(E - H|arc); Delta = x_{q-1} - y_{q-2}.
        zero, one = mpfr(0), mpfr(1)
        x2, x1 = zero, one
        dx2 = dx1 = ddx2 = ddx1 = zero
        y2, y1 = zero, one
        dy2 = dy1 = ddy2 = ddy1 = zero
        for k, v in enumerate(self._v):
            s = E - v
            x = s * x1 - x2
            if order >= 1:
                dx = x1 + s * dx1 - dx2
                if order >= 2:
                    ddx = 2 * dx1 + s * ddx1 - ddx2
                    ddx2, ddx1 = ddx1, ddx
                dx2, dx1 = dx1, dx
            x2, x1 = x1, x
            if k >= 1:
                y = s * y1 - y2
                if order >= 1:
                    dy = y1 + s * dy1 - dy2
                    if order >= 2:
                        ddy = 2 * dy1 + s * ddy1 - ddy2
                        ddy2, ddy1 = ddy1, ddy
                    dy2, dy1 = dy1, dy
                y2, y1 = y1, y
        # after the loop y2 = D[1, q-2] (the seeds cover q = 1 and q = 2)
        y_end, dy_end, ddy_end = y2, dy2, ddy2
        mag = max(abs(x1), abs(y_end), one)
        delta = x1 - y_end
        d1 = (dx1 - dy_end) if order >= 1 else None
        d2 = (ddx1 - ddy_end) if order >= 2 else None
        self.last_error = float(mag) * self.q * 2.0 ** (-self.precision + 2) if mag < mpfr("1e300") else math.inf
        if self.last_error > 2.0 ** (-_SLACK_BITS) * max(float(min(abs(delta), mpfr(1e300))), 1.0):
            raise PrecisionError(
                f"Delta cancellation exceeds {self.precision} bits at q={self.q} "
                f"(log2 magnitude {mp_log(mag) / math.log(2):.0f}); raise precision")
        return delta, d1, d2


def discriminant(V, E, precision: int | None = None):
    """Delta(E) = trace of the q-step transfer matrix, in MPFR."""
    if precision is None:
        precision = required_precision(V)
    return Discriminant(V, precision)(E)[0]


def char_poly_value(V, E, kappa: float, precision: int | None = None):
    """det(A(kappa) - E) = (-1)^q (Delta(E) - 2 cos(q kappa))."""
    if precision is None:
        precision = required_precision(V)
    ev = Discriminant(V, precision)
    with mp_context(precision):
        delta = ev(E)[0]
        c = 2 * gmpy2.cos(ev.q * mpfr(kappa))
        val = delta - c
        return val if ev.q % 2 == 0 else -val


def floquet_matrix(V, kappa: float) -> np.ndarray:
    """Dense complex q x q Floquet matrix in the hopping-phase form."""
    values = _values(V)
    q = values.size
    A = np.diag(values.astype(complex))
    fwd, back = np.exp(1j * kappa), np.exp(-1j * kappa)
    for x in range(q):
        A[x, (x - 1) % q] += fwd
        A[x, (x + 1) % q] += back
    return A


def gauge_matrix(V, corner_sign: float) -> np.ndarray:
    """Real symmetric form at kappa = 0 (sign +1) or kappa = pi/q (sign -1)."""
    values = _values(V)
    q = values.size
    if q == 1:
        return np.array([[values[0] + 2.0 * corner_sign]])
    M = np.diag(values) + np.diag(np.ones(q - 1), 1) + np.diag(np.ones(q - 1), -1)
    M[0, q - 1] += corner_sign
    M[q - 1, 0] += corner_sign
    return M


def _count_below(vals_mp, E, corner_sign: int) -> int:
    """Number of eigenvalues < E of the real cyclic matrix (Sylvester inertia)."""
    q = len(vals_mp)
    if q <= 2:
        if q == 1:
            return int(vals_mp[0] + 2 * corner_sign < E)
        off = 1 + corner_sign
        a, b = vals_mp[0] - E, vals_mp[1] - E
        tr, det = a + b, a * b - off * off
        # both negative: det > 0 and tr < 0; one negative: det < 0
        if det < 0:
            return 1
        if det > 0:
            return 2 if tr < 0 else 0
        return 1 if tr < 0 else 0
    tiny = gmpy2.mul_2exp(mpfr(1), -gmpy2.get_context().precision)
    d_last = vals_mp[q - 1] - E
    f = mpfr(corner_sign)
    count = 0
    d = vals_mp[0] - E
    for i in range(q - 2):
        if d == 0:
            d = tiny
        if d < 0:
            count += 1
        inv = 1 / d
        d_last -= f * f * inv
        d_next = vals_mp[i + 1] - E - inv
        f = -f * inv
        d = d_next
    # row q-2 couples to q-1 through 1 + fill
    if d == 0:
        d = tiny
    if d < 0:
        count += 1
    g = 1 + f
    d_last -= g * g / d
    return count + int(d_last < 0)


@dataclass(frozen=True)
class Band:
    index: int
    left: object
    right: object
    q: int
    closed_left: bool = False
    closed_right: bool = False
    precision: int = DOUBLE

    @property
    def center(self):
        return (self.left + self.right) / 2

    @property
    def width(self):
        return self.right - self.left

    @property
    def log_width_rate(self) -> float:
        """-q^-1 log(width)."""
        return -mp_log(self.width) / self.q


def _safe_newton(f, lo, hi, x0, flo_sign: int, tol_bits: int):
    """Root of f in [lo, hi] given sign(f(lo)) = flo_sign and sign(f(hi)) = -flo_sign.

    ``f`` returns (value, derivative) or (value, derivative, noise); a value
    within its noise counts as a root.  Newton steps that leave the bracket or
    fail to halve it fall back to bisection.
    """
    x = x0 if lo < x0 < hi else (lo + hi) / 2
    last_width = hi - lo
    for _ in range(_MAX_NEWTON):
        fx, dfx, *noise = f(x)
        if fx == 0 or (noise and abs(fx) <= noise[0]):
            return x
        if (fx > 0) == (flo_sign > 0):
            lo = x
        else:
            hi = x
        width = hi - lo
        scale = max(abs(lo), abs(hi), mpfr(1))
        if width <= scale * gmpy2.mul_2exp(mpfr(1), -tol_bits):
            return (lo + hi) / 2
        if dfx != 0:
            xn = x - fx / dfx
            if abs(xn - x) <= scale * gmpy2.mul_2exp(mpfr(1), -tol_bits) and lo <= xn <= hi:
                return xn
            if lo < xn < hi and abs(xn - x) < last_width / 2:
                last_width = abs(xn - x) * 2
                x = xn
                continue
        last_width = width
        x = (lo + hi) / 2
    raise CertificationError(f"root refinement did not converge in [{float(lo)}, {float(hi)}]")


class _EdgeSolver:
    """Certified eigenvalues of the kappa = 0 or kappa = pi/q gauge matrix."""

    def __init__(self, disc: Discriminant, corner_sign: int):
        self.disc = disc
        self.sign = corner_sign
        self.target = 2 * corner_sign
        self.bits = disc.precision
        self.tol_bits = self.bits - 16
        self.vals = disc._v
        self.closed: set[int] = set()

    def g(self, E):
        delta, d1, _ = self.disc(E, 1)
        return delta - self.target, d1, self.disc.last_error

    def count(self, E) -> int:
        with mp_context(self.bits):
            return _count_below(self.vals, mpfr(E), self.sign)

    def solve(self) -> list:
        q = self.disc.q
        approx = np.linalg.eigvalsh(gauge_matrix(self.disc.values, self.sign))
        lo_bound = float(self.disc.values.min()) - 3.0
        hi_bound = float(self.disc.values.max()) + 3.0
        with mp_context(self.bits):
            seps = [mpfr(lo_bound)] + [mpfr((approx[i] + approx[i + 1]) / 2) for i in range(q - 1)] + [mpfr(hi_bound)]
        # Weyl: eigvalsh is backward stable, so each approximation is within
        # `weyl` of the true eigenvalue; well-separated midpoints need no count.
        weyl = 8.0 * q * np.finfo(float).eps * (2.0 + float(np.abs(self.disc.values).max()))
        counts = [0] + [i + 1 if approx[i + 1] - approx[i] > 4.0 * weyl else self.count(seps[i + 1])
                        for i in range(q - 1)] + [q]
        roots: list = [None] * q
        i = 0
        while i < q:
            # find the next certified separator after seps[i]
            k = i + 1
            while counts[k] != k:
                k += 1
            self._fill(roots, seps[i], seps[k], i, k, approx)
            i = k
        return roots

    def _fill(self, roots, lo, hi, c_lo, c_hi, approx):
        """Place the eigenvalues with indices c_lo..c_hi-1 lying in (lo, hi)."""
        m = c_hi - c_lo
        with mp_context(self.bits):
            if m == 1:
                roots[c_lo] = self._simple(lo, hi, approx[c_lo])
                return
            if m == 2:
                pair = self._pair(lo, hi, approx[c_lo], approx[c_lo + 1])
                if pair is not None:
                    roots[c_lo], roots[c_lo + 1] = pair
                    if pair[0] == pair[1]:
                        self.closed.update((c_lo, c_lo + 1))
                    return
            self._bisect_counts(roots, lo, hi, c_lo, c_hi, approx)

    def _fsign_at(self, E) -> int:
        return 1 if self.g(E)[0] > 0 else -1

    def _simple(self, lo, hi, x0):
        s = self._fsign_at(lo)
        if self._fsign_at(hi) == s:
            raise CertificationError(f"no sign change of Delta - {self.target} on [{float(lo)}, {float(hi)}]")
        return _safe_newton(self.g, lo, hi, mpfr(x0), s, self.tol_bits)

    def _pair(self, lo, hi, a0, b0):
        """Two eigenvalues bordering one gap (or a closed gap)."""
        # Tighten to a small window around the double-precision cluster.
        span = abs(b0 - a0) + 1e-12 * max(1.0, abs(a0))
        wlo, whi = mpfr(a0 - span), mpfr(b0 + span)
        if not (lo < wlo and whi < hi):
            wlo, whi = lo, hi
        c_lo, c_hi = self.count(wlo), self.count(whi)
        if c_hi - c_lo != 2:
            wlo, whi = lo, hi
        d_lo = self.disc(wlo, 1)[1]
        d_hi = self.disc(whi, 1)[1]
        if (d_lo > 0) == (d_hi > 0):
            return None

        def dprime(E):
            _, d1, d2 = self.disc(E, 2)
            return d1, d2

        crit = _safe_newton(dprime, wlo, whi, mpfr((a0 + b0) / 2), 1 if d_lo > 0 else -1, self.tol_bits)
        g_c = self.g(crit)[0]
        noise = self.disc.last_error * 64
        # Inside an open gap |Delta| > 2 with the sign of the target.
        if g_c * self.target <= noise:
            return crit, crit
        s = self._fsign_at(wlo)
        left = _safe_newton(self.g, wlo, crit, mpfr(a0), s, self.tol_bits)
        right = _safe_newton(self.g, crit, whi, mpfr(b0), -s, self.tol_bits)
        return left, right

    def _bisect_counts(self, roots, lo, hi, c_lo, c_hi, approx):
        min_width = gmpy2.mul_2exp(max(abs(lo), abs(hi), mpfr(1)), -self.bits // 2)
        stack = [(lo, hi, c_lo, c_hi)]
        while stack:
            a, b, ca, cb = stack.pop()
            m = cb - ca
            if m == 0:
                continue
            if m == 1:
                roots[ca] = self._simple(a, b, approx[ca])
                continue
            if b - a < min_width:
                if m > 2:
                    raise CertificationError(f"{m} eigenvalues unresolved near {float(a)}")
                mid = (a + b) / 2
                pair = self._pair(a, b, float(mid), float(mid)) or (mid, mid)
                roots[ca], roots[ca + 1] = pair
                if pair[0] == pair[1]:
                    self.closed.update((ca, ca + 1))
                continue
            mid = (a + b) / 2
            cm = self.count(mid)
            stack.append((mid, b, cm, cb))
            stack.append((a, mid, ca, cm))


def bands(V, precision: int | None = None) -> list[Band]:
    """All q bands, edges refined in MPFR at ``precision`` bits."""
    values = _values(V)
    q = values.size
    if precision is None:
        precision = required_precision(values)
    disc = Discriminant(values, precision)
    periodic = _EdgeSolver(disc, +1)
    anti = _EdgeSolver(disc, -1)
    p_roots = periodic.solve()
    a_roots = anti.solve()
    out = []
    for j in range(q):
        p, a = p_roots[j], a_roots[j]
        p_closed, a_closed = j in periodic.closed, j in anti.closed
        if p <= a:
            out.append(Band(j + 1, p, a, q, p_closed, a_closed, precision))
        else:
            out.append(Band(j + 1, a, p, q, a_closed, p_closed, precision))
    for j in range(q - 1):
        if out[j].right > out[j + 1].left:
            slack = abs(out[j].right) * 2.0 ** (-precision + 32)
            if out[j].right - out[j + 1].left > slack:
                raise CertificationError(f"bands {j + 1} and {j + 2} overlap")
    return out


def eigenvalues(V, kappa: float, precision: int | None = None, band_list: list[Band] | None = None) -> list:
    """The q eigenvalues of A(kappa), one per band, sorted."""
    values = _values(V)
    if band_list is None:
        band_list = bands(values, precision)
    precision = band_list[0].precision
    disc = Discriminant(values, precision)
    q = disc.q
    with mp_context(precision):
        t = 2 * gmpy2.cos(q * mpfr(kappa))

        def g(E):
            d0, d1, _ = disc(E, 1)
            return d0 - t, d1, disc.last_error

        # periodic / antiperiodic eigenvalues are band edges already
        at_edge = abs(abs(math.cos(q * kappa)) - 1.0) < 1e-15
        out = []
        for b in band_list:
            if b.left == b.right:
                out.append(b.left)
                continue
            gl = disc(b.left)[0] - t
            gr = disc(b.right)[0] - t
            if at_edge:
                out.append(b.left if abs(gl) <= abs(gr) else b.right)
                continue
            if gl == 0:
                out.append(b.left)
                continue
            if gr == 0:
                out.append(b.right)
                continue
            if (gl > 0) == (gr > 0):
                # t sits at a band edge up to rounding
                out.append(b.left if abs(gl) <= abs(gr) else b.right)
                continue
            out.append(_safe_newton(g, b.left, b.right, b.center, 1 if gl > 0 else -1, precision - 16))
        return out


@dataclass(frozen=True)
class EigenPair:
    kappa: float
    j: int
    E: object
    psi: list = field(repr=False)
    residual: float = 0.0
    precision: int = DOUBLE

    @property
    def q(self) -> int:
        return len(self.psi)

    def log_abs(self) -> np.ndarray:
        return np.array([mp_log(abs(z)) if self.precision > DOUBLE else
                         (math.log(abs(z)) if z != 0 else -math.inf) for z in self.psi])

    def as_complex(self) -> np.ndarray:
        return np.array([complex(z) for z in self.psi])


def _cyclic_solve(diag: list, corner, rhs: list):
    """Solve M x = rhs; M tridiagonal with unit hoppings, M[0,-1] = corner, M[-1,0] = conj(corner).

    Tridiagonal elimination plus a Sherman-Morrison correction for the corners.
    Works for Python complex and gmpy2 mpc alike.
    """
    n = len(diag)
    lower = corner.conjugate() if hasattr(corner, "conjugate") else corner
    if n == 1:
        return [rhs[0] / (diag[0] + corner + lower)]
    if n == 2:
        a, d = diag
        b = 1 + corner
        c = 1 + lower
        det = a * d - b * c
        return [(d * rhs[0] - b * rhs[1]) / det, (a * rhs[1] - c * rhs[0]) / det]
    gam = -(abs(diag[0]) + 1)
    bb = list(diag)
    bb[0] = diag[0] - gam
    bb[n - 1] = diag[n - 1] - lower * corner / gam
    u = [0] * n
    u[0], u[n - 1] = gam, lower
    x = _thomas(bb, rhs)
    z = _thomas(bb, u)
    fact = (x[0] + corner * x[n - 1] / gam) / (1 + z[0] + corner * z[n - 1] / gam)
    return [xi - fact * zi for xi, zi in zip(x, z)]


def _thomas(diag: list, rhs: list):
    n = len(diag)
    c = [0] * n
    d = [0] * n
    piv = diag[0]
    if piv == 0:
        piv = _tiny(piv)
    c[0] = 1 / piv
    d[0] = rhs[0] / piv
    for i in range(1, n):
        piv = diag[i] - c[i - 1]
        if piv == 0:
            piv = _tiny(piv)
        c[i] = 1 / piv
        d[i] = (rhs[i] - d[i - 1]) / piv
    x = [0] * n
    x[n - 1] = d[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = d[i] - c[i] * x[i + 1]
    return x


def _tiny(like):
    if isinstance(like, (float, complex, int)):
        return 1e-300
    return gmpy2.mul_2exp(mpfr(1), -gmpy2.get_context().precision * 2)


def eigenvector(V, kappa: float, E, precision: int | None = None, j: int = 0, iterations: int = 3) -> EigenPair:
    """Unit eigenvector of A(kappa) at the certified eigenvalue E by inverse iteration.

    Phase is fixed so that psi is real positive at its modulus maximiser
    (lowest index among ties).
    """
    values = _values(V)
    q = values.size
    if precision is None:
        precision = E.precision if hasattr(E, "precision") and E.precision > DOUBLE else required_precision(values)
    rng = np.random.Generator(np.random.PCG64(12345))
    start = (rng.random(q) + 0.5).tolist()
    if use_double(precision):
        return _inverse_iteration(values, kappa, float(E), start, iterations, j, DOUBLE,
                                  cexp=lambda t: complex(math.cos(t), math.sin(t)), num=float)
    with mp_context(precision):
        return _inverse_iteration(values, kappa, mpfr(E), start, iterations, j, precision,
                                  cexp=lambda t: mpc(gmpy2.cos(t), gmpy2.sin(t)), num=mpfr)


def _inverse_iteration(values, kappa, E, start, iterations, j, precision, cexp, num):
    q = len(values)
    corner = cexp(q * num(kappa))
    vals = [num(float(v)) for v in values]
    # an exact eigenvalue makes the shifted matrix singular; a few-ulp offset
    # changes only the convergence rate, not the limit vector
    bits = 46 if precision <= DOUBLE else precision - 6
    shift = E + (abs(E) + 1) * 2.0 ** -bits if precision <= DOUBLE else E + (abs(E) + 1) * gmpy2.mul_2exp(mpfr(1), -bits)
    diag = [v - shift for v in vals]
    x = [num(s) for s in start]
    for _ in range(iterations):
        x = _cyclic_solve(diag, corner, x)
        norm = _norm(x)
        x = [xi / norm for xi in x]
    residual = float(_norm(_apply(vals, corner, x, E)))
    tol = 1e-20 if precision >= 256 else (1e-9 if precision <= DOUBLE else 2.0 ** (-precision / 2))
    if not residual <= tol * max(1.0, float(abs(E))):
        raise CertificationError(f"inverse iteration residual {residual:.3e} above {tol:.1e}")
    # back to the hopping-phase form, then fix the global phase
    phases = [cexp(num(kappa) * k) for k in range(q)]
    psi = [p * xi for p, xi in zip(phases, x)]
    mods = [abs(z) for z in psi]
    top = max(mods)
    tie = top * (1 - (2.0 ** (-precision / 2) if precision > DOUBLE else 1e-9))
    nu = next(i for i, m in enumerate(mods) if m >= tie)
    rot = abs(psi[nu]) / psi[nu]
    psi = [z * rot for z in psi]
    return EigenPair(float(kappa), j, E, psi, residual, precision)


def _norm(x):
    return sum(abs(xi) ** 2 for xi in x) ** 0.5 if isinstance(x[0], (float, complex)) else gmpy2.sqrt(sum(abs(xi) ** 2 for xi in x))


def _apply(vals, corner, x, E):
    q = len(vals)
    lower = corner.conjugate()
    if q == 1:
        return [(vals[0] + corner + lower - E) * x[0]]
    out = []
    for i in range(q):
        left = x[i - 1] if i > 0 else 0
        right = x[i + 1] if i < q - 1 else 0
        s = (vals[i] - E) * x[i] + left + right
        if i == 0:
            s += corner * x[q - 1]
        if i == q - 1:
            s += lower * x[0]
        out.append(s)
    return out


def eigenpairs(V, kappa: float, precision: int | None = None, band_list: list[Band] | None = None) -> list[EigenPair]:
    """Eigenpairs of A(kappa), one per band; precision 53 gives double eigenvectors."""
    values = _values(V)
    if band_list is None:
        band_list = bands(values, None if use_double(precision) else precision)
    evs = eigenvalues(values, kappa, band_list=band_list)
    prec = band_list[0].precision if precision is None else precision
    return [eigenvector(values, kappa, E, prec, j=i + 1) for i, E in enumerate(evs)]


def thouless_sensitivity(V, precision: int | None = None, band_list: list[Band] | None = None) -> list[float]:
    """|E_j(0) - E_j(pi/q)| per band."""
    values = _values(V)
    if band_list is None:
        band_list = bands(values, precision)
    q = values.size
    e0 = eigenvalues(values, 0.0, band_list=band_list)
    e1 = eigenvalues(values, math.pi / q, band_list=band_list)
    return [abs(a - b) for a, b in zip(e0, e1)]


def write_bands_csv(band_list: list[Band], path, provenance: str = "") -> None:
    digits = max(17, int(band_list[0].precision * math.log10(2)) + 2)
    lines = []
    if provenance:
        lines += ["# " + line for line in provenance.splitlines()]
    lines.append("j,left,right,center,width,log_width_rate")
    for b in band_list:
        fmt = lambda x: _fmt(x, digits)
        lines.append(",".join([str(b.index), fmt(b.left), fmt(b.right), fmt(b.center), fmt(b.width),
                               repr(b.log_width_rate)]))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _fmt(x, digits: int) -> str:
    if isinstance(x, float):
        return repr(x)
    if x == 0:
        return "0"
    mant, exp, _ = gmpy2.digits(x, 10, digits)
    sign = "-" if mant.startswith("-") else ""
    mant = mant.lstrip("-")
    return f"{sign}{mant[0]}.{mant[1:]}e{exp - 1:+d}"
