"""Arc Green functions via Cramer's rule, resonant sites and the Q_NR event."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import NearSingularError, ValidationError
from .transfer import DOUBLE, det_poly, log_abs_det_polys, mp_log

DEFAULT_GRID_FRACTION = 1e-3


def _values(V) -> np.ndarray:
    return np.asarray(getattr(V, "values", V), dtype=float)


def singular_floor_log(precision: int | None) -> float:
    """log of the near-singular floor 2^(-precision/4)."""
    bits = DOUBLE if precision is None else precision
    return -bits / 4.0 * math.log(2.0)


def circle_distance(x: int, y: int, q: int) -> int:
    d = (x - y) % q
    return min(d, q - d)


def circle_diameter(sites, q: int) -> int:
    sites = sorted(set(int(s) % q for s in sites))
    if len(sites) <= 1:
        return 0
    # max pairwise circle distance; O(k^2) is fine for k <= q
    arr = np.array(sites)
    d = np.abs(arr[:, None] - arr[None, :])
    return int(np.minimum(d, q - d).max())


@dataclass(frozen=True)
class Arc:
    center: int
    half_length: int
    q: int

    def __post_init__(self):
        if not 0 <= self.half_length <= self.q // 2:
            raise ValidationError(f"half length {self.half_length} outside [0, {self.q // 2}]")

    @property
    def start(self) -> int:
        return self.center - self.half_length

    @property
    def end(self) -> int:
        return self.center + self.half_length

    def sites(self) -> list[int]:
        return [x % self.q for x in range(self.start, self.end + 1)]

    def position(self, x: int) -> int:
        off = (x - self.start) % self.q
        if off > 2 * self.half_length:
            raise ValidationError(f"site {x} is not on the arc centred at {self.center}")
        return off


def green_entry(V, arc: Arc, E, x: int, y: int, precision: int | None = None, floor_log: float | None = None):
    """|G(x, y)| for the Dirichlet restriction of H to ``arc`` (Cramer's rule).

    Raises NearSingularError when |P(arc)| is below the floor.
    """
    px, py = arc.position(x), arc.position(y)
    k1, k2 = min(px, py), max(px, py)
    a, b = arc.start, arc.end
    den = det_poly(V, a, b, E, precision)
    if floor_log is None:
        floor_log = singular_floor_log(precision)
    log_den = mp_log(den) if not isinstance(den, float) else (math.log(abs(den)) if den else -math.inf)
    if log_den < floor_log:
        raise NearSingularError(f"|P(arc)| = exp({log_den:.2f}) below floor", log_den)
    num = det_poly(V, a, a + k1 - 1, E, precision) * det_poly(V, a + k2 + 1, b, E, precision)
    return abs(num / den)


@dataclass
class ResonanceReport:
    E: float
    epsilon: float
    n: int
    q: int
    resonant_sites: list[int]
    diameter: int
    qnr: bool
    notes: dict = field(default_factory=lambda: {"diameter": "max pairwise circle distance"})

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps({k: d[k] for k in ("E", "epsilon", "n", "resonant_sites", "diameter", "qnr")}, sort_keys=True)


def _arc_logs(arcs: np.ndarray, energies) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """log|G(c, c-n)|, log|G(c, c+n)| and log|P(arc)| for rows of (s, 2n+1) arc values.

    Shapes (m, s) for m energies; c is the middle site of each arc.
    """
    n = (arcs.shape[1] - 1) // 2
    E = np.atleast_1d(np.asarray(energies, dtype=float))
    pa = log_abs_det_polys(arcs, E)
    pr = log_abs_det_polys(arcs[:, n + 1:], E)
    log_arc = pa[:, :, 2 * n + 1]
    # Cramer: G(c, c-n) keeps the block right of c, G(c, c+n) the block left of c
    with np.errstate(invalid="ignore"):
        return pr[:, :, n] - log_arc, pa[:, :, n] - log_arc, log_arc


def edge_green_logs(V, n: int, energies):
    """log|G(x, x-n)|, log|G(x, x+n)| and log|P(B_n(x))| for every x and energy.

    Arrays of shape (len(energies), q); double arithmetic with rescaling.
    """
    values = _values(V)
    q = values.size
    if not 1 <= n <= q // 2:
        raise ValidationError(f"need 1 <= n <= q//2, got n={n}, q={q}")
    x = np.arange(q)
    arcs = values[(x[:, None] + np.arange(-n, n + 1)[None, :]) % q]
    return _arc_logs(arcs, energies)


def _gamma_column(gamma, E) -> np.ndarray:
    E = np.atleast_1d(np.asarray(E, dtype=float))
    g = gamma(E) if callable(gamma) else np.full(E.shape, float(gamma))
    return np.asarray(g, dtype=float).reshape(-1, 1)


def _resonant(g_minus, g_plus, log_arc, gam, epsilon, n, precision) -> np.ndarray:
    thresh = -(gam - epsilon) * n
    nonres = (g_minus < thresh) & (g_plus < thresh) & (log_arc >= singular_floor_log(precision))
    return ~nonres


def _resonant_mask(V, energies, epsilon, n, gamma, precision):
    return _resonant(*edge_green_logs(V, n, energies), _gamma_column(gamma, energies), epsilon, n, precision)


def classify_site(V, x: int, E, epsilon: float, n: int, gamma_at_E: float, precision: int | None = None) -> bool:
    """True iff x is (E, epsilon, n)-non-resonant."""
    q = _values(V).size
    arc = Arc(x % q, n, q)
    bound = -(gamma_at_E - epsilon) * n
    try:
        g1 = green_entry(V, arc, E, x, x - n, precision)
        g2 = green_entry(V, arc, E, x, x + n, precision)
    except NearSingularError:
        return False
    log1 = mp_log(g1) if not isinstance(g1, float) else (math.log(g1) if g1 else -math.inf)
    log2 = mp_log(g2) if not isinstance(g2, float) else (math.log(g2) if g2 else -math.inf)
    return log1 < bound and log2 < bound


def resonant_set(V, E: float, epsilon: float, n: int, gamma, precision: int | None = None) -> ResonanceReport:
    values = _values(V)
    q = values.size
    if q <= 2 * n:
        raise ValidationError(f"need q > 2n, got q={q}, n={n}")
    mask = _resonant_mask(values, np.array([float(E)]), epsilon, n, gamma, precision)[0]
    sites = [int(i) for i in np.flatnonzero(mask)]
    diam = circle_diameter(sites, q)
    return ResonanceReport(float(E), float(epsilon), int(n), q, sites, diam, diam <= 2 * n)


def default_grid(V, fraction: float = DEFAULT_GRID_FRACTION, window=None) -> np.ndarray:
    lo, hi = window if window is not None else V.energy_window()
    return np.linspace(lo, hi, int(math.ceil((hi - lo) / (fraction * (hi - lo)))) + 1)


def qnr_check(V, epsilon: float, n: int, gamma, energies=None, precision: int | None = None,
              chunk: int = 256) -> tuple[bool, list[float]]:
    """Whether every grid energy has resonant-site diameter <= 2n; failing energies as witnesses."""
    values = _values(V)
    q = values.size
    if q <= 2 * n:
        raise ValidationError(f"need q > 2n, got q={q}, n={n}")
    E = default_grid(V) if energies is None else np.asarray(energies, dtype=float)
    failing = []
    for start in range(0, E.size, chunk):
        Ec = E[start:start + chunk]
        mask = _resonant_mask(values, Ec, epsilon, n, gamma, precision)
        counts = mask.sum(axis=1)
        for i in np.flatnonzero(counts > 1):
            if circle_diameter(np.flatnonzero(mask[i]), q) > 2 * n:
                failing.append(float(Ec[i]))
    return (not failing), failing


def resonance_energy_set(V, x: int, epsilon: float, n: int, gamma, energies, precision: int | None = None,
                         refine: int = 100) -> list[tuple[float, float]]:
    """Energies at which site x is resonant, as grid-resolved closed intervals.

    Interval ends are bisected to (grid spacing)/``refine``.
    """
    values = _values(V)
    q = values.size
    if q <= 2 * n or n < 1:
        raise ValidationError(f"need 1 <= n and q > 2n, got q={q}, n={n}")
    E = np.asarray(energies, dtype=float)
    arc = values[np.arange(x - n, x + n + 1) % q][None, :]

    def resonant(Es):
        logs = _arc_logs(arc, Es)
        return _resonant(*logs, _gamma_column(gamma, Es), epsilon, n, precision)[:, 0]

    mask = resonant(E)
    spacing = float(np.min(np.diff(E))) if E.size > 1 else 1.0
    tol = spacing / refine
    out = []
    i = 0
    while i < E.size:
        if not mask[i]:
            i += 1
            continue
        j = i
        while j + 1 < E.size and mask[j + 1]:
            j += 1
        lo = E[i] if i == 0 else _bisect_edge(resonant, E[i - 1], E[i], tol)
        hi = E[j] if j == E.size - 1 else _bisect_edge(resonant, E[j + 1], E[j], tol)
        out.append((float(lo), float(hi)))
        i = j + 1
    return out


def _bisect_edge(resonant, outside: float, inside: float, tol: float) -> float:
    while abs(inside - outside) > tol:
        mid = 0.5 * (inside + outside)
        if resonant(np.array([mid]))[0]:
            inside = mid
        else:
            outside = mid
    return inside
