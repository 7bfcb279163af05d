"""Localization centres, decay checks, Wronskians and eigenvalue separation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .floquet import EigenPair, bands, eigenpairs, eigenvalues, floquet_matrix
from .transfer import DOUBLE, mp_context, mp_log, use_double

DEFAULT_KAPPA_POINTS = 9
FLAT_RATIO = 2.0


def circle_distance(x, y, q: int):
    d = np.mod(np.asarray(x) - np.asarray(y), q)
    return np.minimum(d, q - d)


def default_C(gamma_max: float, epsilon: float) -> float:
    """Smallest C >= 2 with 2*gamma_max/C <= epsilon."""
    if epsilon <= 0:
        raise ValidationError("epsilon must be positive")
    return max(2.0, 2.0 * gamma_max / epsilon)


def _log_moduli(psi, precision: int) -> np.ndarray:
    if isinstance(psi, EigenPair):
        return psi.log_abs()
    if isinstance(psi, np.ndarray) and psi.dtype != object:
        with np.errstate(divide="ignore"):
            return np.log(np.abs(psi))
    return np.array([mp_log(abs(z)) for z in psi])


@dataclass
class LocalizationProfile:
    j: int
    kappa: float
    center: int
    q: int
    log_abs: np.ndarray = field(repr=False)
    C: float
    n: int
    fitted_rate: float
    fit_residual: float
    clamped: bool
    floor: float

    @property
    def distances(self) -> np.ndarray:
        return circle_distance(np.arange(self.q), self.center, self.q)

    @property
    def decay_points(self) -> list[tuple[int, float]]:
        d = self.distances
        keep = d > self.C * self.n
        return [(int(a), float(b)) for a, b in zip(d[keep], self.log_abs[keep])]

    def to_json(self) -> str:
        return json.dumps({"j": self.j, "kappa": self.kappa, "center": self.center, "C": self.C, "n": self.n,
                           "fitted_rate": _finite(self.fitted_rate), "fit_residual": _finite(self.fit_residual),
                           "clamped": self.clamped, "decay_points": self.decay_points}, sort_keys=True)

    def write_decay_csv(self, path, provenance: str = "") -> None:
        lines = ["# " + line for line in provenance.splitlines()] if provenance else []
        lines.append("distance,log_abs_psi")
        lines += [f"{d},{v!r}" for d, v in self.decay_points]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def _finite(x: float):
    return x if math.isfinite(x) else None


def localization_profile(pair, C: float, n: int, precision: int | None = None) -> LocalizationProfile:
    """Centre (argmax |psi|, lowest index on ties), decay table and OLS decay rate.

    ``pair`` is an EigenPair or a bare vector.  log 0 is clamped to
    -precision*ln2 and the profile is flagged.
    """
    if isinstance(pair, EigenPair):
        j, kappa, prec = pair.j, pair.kappa, pair.precision
    else:
        j, kappa, prec = 0, 0.0, DOUBLE
    if precision is not None:
        prec = precision
    logs = _log_moduli(pair, prec)
    q = logs.size
    if q == 0 or not np.any(np.isfinite(logs)):
        raise ValidationError("eigenvector is identically zero")
    floor = -prec * math.log(2.0)
    clamped = bool(np.any(logs < floor))
    logs = np.maximum(logs, floor)
    center = int(np.argmax(logs))
    d = circle_distance(np.arange(q), center, q)
    keep = d > C * n
    rate, resid = math.nan, math.nan
    if np.unique(d[keep]).size >= 2:
        A = np.stack([d[keep].astype(float), np.ones(int(keep.sum()))], axis=1)
        coef, *_ = np.linalg.lstsq(A, logs[keep], rcond=None)
        rate = float(coef[0])
        resid = float(np.sqrt(np.mean((A @ coef - logs[keep]) ** 2)))
    return LocalizationProfile(j, float(kappa), center, q, logs, float(C), int(n), rate, resid, clamped, floor)


def check_decay_bound(profile: LocalizationProfile, gamma_at_E: float, epsilon: float, C: float | None = None,
                      n: int | None = None) -> tuple[bool, float]:
    """log|psi(x)| <= -(gamma - 2 eps) * dist for every x with dist > C n.

    Returns (passed, worst excess); vacuous (True, 0.0) when gamma <= 2 eps.
    """
    C = profile.C if C is None else C
    n = profile.n if n is None else n
    rate = gamma_at_E - 2.0 * epsilon
    if rate <= 0:
        return True, 0.0
    d = profile.distances
    keep = d > C * n
    if not keep.any():
        return True, 0.0
    excess = float(np.max(profile.log_abs[keep] + rate * d[keep]))
    return excess <= 0.0, max(excess, 0.0)


@dataclass
class CenterDrift:
    j: int
    drift: int
    centers: list[int]
    flat: bool


def _flat(mods: np.ndarray) -> bool:
    lo = mods.min()
    return lo > 0 and mods.max() / lo < FLAT_RATIO


def kappa_grid(q: int, points: int = DEFAULT_KAPPA_POINTS) -> np.ndarray:
    return np.linspace(0.0, math.pi / q, points)


def _moduli_double(values: np.ndarray, kappa: float) -> np.ndarray:
    _, vecs = np.linalg.eigh(floquet_matrix(values, kappa))
    return np.abs(vecs).T  # row j is band j+1


def _moduli_mp(values, kappa, precision, band_list) -> np.ndarray:
    pairs = eigenpairs(values, kappa, precision, band_list)
    return np.exp(np.array([p.log_abs() for p in pairs]))


def center_drifts(V, kappas=None, precision: int | None = None) -> list[CenterDrift]:
    """Per-band max over kappa of ||nu(kappa) - nu(0)||_q.

    A band whose eigenvector is flat (max/min modulus < 2) at some kappa gets
    the sentinel floor(q/2) and ``flat=True``.  ``precision`` None or 53 uses a
    dense double Hermitian solve; higher values use certified MPFR eigenpairs.
    """
    values = np.asarray(getattr(V, "values", V), dtype=float)
    q = values.size
    ks = kappa_grid(q) if kappas is None else np.asarray(kappas, dtype=float)
    if use_double(precision):
        mods = [_moduli_double(values, k) for k in ks]
    else:
        band_list = bands(values, precision)
        mods = [_moduli_mp(values, k, precision, band_list) for k in ks]
    out = []
    for j in range(q):
        rows = [m[j] for m in mods]
        centers = [int(np.argmax(r)) for r in rows]
        if any(_flat(r) for r in rows):
            out.append(CenterDrift(j + 1, q // 2, centers, True))
            continue
        drift = int(max(circle_distance(c, centers[0], q) for c in centers))
        out.append(CenterDrift(j + 1, drift, centers, False))
    return out


def center_drift(V, j: int, kappas=None, precision: int | None = None) -> CenterDrift:
    """Drift of band j (1-based)."""
    q = np.asarray(getattr(V, "values", V)).size
    if not 1 <= j <= q:
        raise ValidationError(f"band index {j} outside 1..{q}")
    return center_drifts(V, kappas, precision)[j - 1]


def wronskian(psi, psi_prime):
    """W(x) = psi'(x) psi(x+1) - psi(x) psi'(x+1), indices mod q."""
    a = psi.psi if isinstance(psi, EigenPair) else psi
    b = psi_prime.psi if isinstance(psi_prime, EigenPair) else psi_prime
    if len(a) != len(b):
        raise ValidationError("vectors must have equal length")
    if isinstance(a, np.ndarray) and isinstance(b, np.ndarray):
        return b * np.roll(a, -1) - a * np.roll(b, -1)
    q = len(a)
    return [b[x] * a[(x + 1) % q] - a[x] * b[(x + 1) % q] for x in range(q)]


@dataclass
class SeparationReport:
    min_gap: object
    epsilon: float
    threshold: float
    qsep: bool
    gap_argmin: tuple[int, int]
    min_distinct_gap: object
    precision: int

    def to_json(self) -> str:
        return json.dumps({"min_gap": str(self.min_gap), "min_distinct_gap": str(self.min_distinct_gap),
                           "epsilon": self.epsilon, "threshold": self.threshold, "qsep": self.qsep,
                           "gap_argmin": list(self.gap_argmin), "precision": self.precision}, sort_keys=True)


def separation_report(V, epsilon: float, precision: int | None = None, band_list=None) -> SeparationReport:
    """Minimum adjacent gap of the kappa = 0 spectrum, counted with multiplicity."""
    values = np.asarray(getattr(V, "values", V), dtype=float)
    q = values.size
    if band_list is None:
        band_list = bands(values, precision)
    prec = band_list[0].precision
    threshold = math.exp(-epsilon * q)
    if q == 1:
        return SeparationReport(math.inf, epsilon, threshold, True, (1, 1), math.inf, prec)
    with mp_context(prec):
        ev = eigenvalues(values, 0.0, band_list=band_list)
        gaps = [ev[i + 1] - ev[i] for i in range(q - 1)]
        i = min(range(q - 1), key=lambda k: gaps[k])
        distinct = [g for g in gaps if g > 0]
        # a doubly degenerate edge comes out of two independent solves; tiny gaps there are rounding
        slack = 2.0 ** (-prec / 2)
        min_distinct = min((g for g in distinct if g > slack), default=math.inf)
        min_gap = gaps[i] if gaps[i] > slack else 0 * gaps[i]
    return SeparationReport(min_gap, float(epsilon), threshold, bool(min_gap >= threshold), (i + 1, i + 2),
                            min_distinct, prec)
