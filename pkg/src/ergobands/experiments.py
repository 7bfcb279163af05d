"""Scenario runner: band/Lyapunov scatter, deviation sweeps, event probabilities."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from .errors import CertificationError, ValidationError
from .floquet import bands
from .localization import center_drifts, default_C, separation_report
from .lyapunov import LyapunovCurve, amo_curve, curve_key, energy_grid, free_curve, lyapunov_birkhoff, lyapunov_iid_mc
from .potential import (FIGURE_IID, DistributionSpec, PotentialSeq, Rational, cf_convergents, explicit,
                        quasiperiodic_seq, sample_iid)
from .resonance import default_grid, qnr_check

AMO_LAMBDA = math.exp(0.25)
AMO_THETA = math.sqrt(3.0)
DEFAULT_SEEDS = tuple(range(8))
GAMMA_SPACING = 0.025
Z95 = 1.959963984540054


def ordered_map(fn, items, workers: int = 1) -> list:
    """map(fn, items) in input order; a process pool when workers > 1."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class ModelSpec:
    """kind is 'iid', 'amo' or 'free'."""

    kind: str
    dist: DistributionSpec = FIGURE_IID
    amplitude: float = AMO_LAMBDA
    theta: float = AMO_THETA
    alpha: str = "sqrt2"
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("iid", "amo", "free"):
            raise ValidationError(f"unknown model kind {self.kind!r}")

    def frequency(self, q: int) -> Rational:
        """The rotation p/q: given explicitly, or the convergent of ``alpha`` with denominator q."""
        if "/" in self.alpha and "sqrt" not in self.alpha:
            r = Rational.parse(self.alpha)
            if r.q != q:
                raise ValidationError(f"alpha {r} does not have period {q}")
            return r
        for r in cf_convergents(self.alpha, 64):
            if r.q == q:
                return r
            if r.q > q:
                break
        raise ValidationError(f"{q} is not a convergent denominator of {self.alpha}")

    def build(self, q: int, seed: int | None = None) -> PotentialSeq:
        if q < 1:
            raise ValidationError(f"q must be >= 1, got {q}")
        if self.kind == "iid":
            # no per-q stream: runs at different q share a prefix
            return sample_iid(self.dist, q, self.seed if seed is None else seed)
        if self.kind == "amo":
            return quasiperiodic_seq(self.amplitude, self.theta, self.frequency(q), q)
        return explicit(np.zeros(q), bound=0.0, origin="free")

    def describe(self) -> dict:
        if self.kind == "iid":
            return {"kind": "iid", "dist": self.dist.to_dict(), "seed": self.seed}
        if self.kind == "amo":
            return {"kind": "amo", "lambda": self.amplitude, "theta": self.theta, "alpha": self.alpha}
        return {"kind": "free"}


_CURVES: dict[str, LyapunovCurve] = {}


def reference_curve(model: ModelSpec, q: int | None = None, cache_dir=None) -> LyapunovCurve:
    """gamma reference for ``model``; i.i.d. curves are cached per distribution."""
    if model.kind == "free":
        return free_curve(energy_grid(-6.0, 6.0, GAMMA_SPACING))
    if model.kind == "amo":
        lo, hi = -2.0 - 2.0 * model.amplitude, 2.0 + 2.0 * model.amplitude
        grid = energy_grid(lo, hi, GAMMA_SPACING)
        if model.amplitude >= 1.0:
            return amo_curve(model.amplitude, grid)
        return lyapunov_birkhoff(model.amplitude, model.theta, model.alpha, grid)
    return iid_curve(model.dist, cache_dir=cache_dir)


def iid_curve(dist: DistributionSpec, seed: int = 0, cache_dir=None) -> LyapunovCurve:
    """Monte Carlo gamma on the spectral hull, padded coarsely out to the window K."""
    b = dist.bound
    lo, hi = dist.support_min - 2.0, dist.support_max + 2.0
    window = (-(2.0 + b + 10.0), 2.0 + b + 10.0)
    grid = energy_grid(lo, hi, GAMMA_SPACING, window=window)
    key = curve_key("iid_mc", {"dist": dist.to_dict(), "seed": seed, "grid": [lo, hi, GAMMA_SPACING]})
    if key in _CURVES:
        return _CURVES[key]
    path = Path(cache_dir) / f"gamma-{key}.csv" if cache_dir else None
    if path is not None and path.exists():
        curve = LyapunovCurve.from_csv(path)
    else:
        curve = lyapunov_iid_mc(dist, grid, seed=seed)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            curve.to_csv(path)
    _CURVES[key] = curve
    return curve


@dataclass
class ScatterDataset:
    centers: np.ndarray
    rates: np.ndarray
    curve: LyapunovCurve = field(repr=False)
    meta: dict
    closed: np.ndarray = field(default=None, repr=False)

    @property
    def gamma_at_centers(self) -> np.ndarray:
        return self.curve(self.centers)

    @property
    def stderr_at_centers(self) -> np.ndarray:
        return self.curve.stderr_at(self.centers)

    @property
    def deviations(self) -> np.ndarray:
        return self.rates - self.gamma_at_centers

    def sup_deviation(self) -> float:
        return float(np.max(np.abs(self.deviations)))

    def mean_deviation(self) -> float:
        return float(np.mean(np.abs(self.deviations)))

    def excess_p90(self) -> float:
        """90th percentile of rate - gamma - 3*stderr."""
        return float(np.percentile(self.deviations - 3.0 * self.stderr_at_centers, 90))

    def to_csv(self, path, provenance: str = "") -> None:
        lines = ["# " + line for line in provenance.splitlines()] if provenance else []
        lines.append("j,center,rate,gamma,stderr")
        g, s = self.gamma_at_centers, self.stderr_at_centers
        for j, (c, r) in enumerate(zip(self.centers, self.rates)):
            lines.append(f"{j + 1},{c:.17g},{r:.17g},{g[j]:.17g},{s[j]:.17g}")
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    def to_svg(self, path, provenance: str = "") -> None:
        Path(path).write_text(scatter_svg(self, provenance), encoding="utf-8")


def lemma_floor(q: int) -> float:
    """Lower bound (ln q - ln 2pi)/q on every rate, from width <= 2pi/q."""
    return (math.log(q) - math.log(2.0 * math.pi)) / q


def figure_scatter(model: ModelSpec, q: int, precision: int | None = None, curve: LyapunovCurve | None = None,
                   seed: int | None = None) -> ScatterDataset:
    V = model.build(q, seed)
    band_list = bands(V, precision)
    centers = np.array([float(b.center) for b in band_list])
    rates = np.array([b.log_width_rate for b in band_list])
    floor = lemma_floor(q)
    bad = np.flatnonzero(rates < floor - 1e-12)
    if bad.size:
        raise CertificationError(f"band {int(bad[0]) + 1} is wider than 2pi/q")
    if curve is None:
        curve = reference_curve(model, q)
    closed = np.array([b.closed_left or b.closed_right for b in band_list])
    meta = {"model": model.describe(), "q": q, "precision": band_list[0].precision,
            "seed": model.seed if seed is None else seed}
    return ScatterDataset(centers, rates, curve, meta, closed)


@dataclass
class SweepRow:
    seed: int
    q: int
    sup: float
    mean: float
    excess_p90: float
    stderr_at_sup: float


def _sweep_one(model: ModelSpec, curve: LyapunovCurve, precision, item) -> SweepRow:
    seed, q = item
    ds = figure_scatter(model, q, precision, curve, seed)
    dev = np.abs(ds.deviations)
    k = int(np.argmax(dev))
    return SweepRow(seed, q, float(dev[k]), float(dev.mean()), ds.excess_p90(), float(ds.stderr_at_centers[k]))


def deviation_sweep(model: ModelSpec, q_list, precision: int | None = None, seeds=None,
                    workers: int = 1) -> list[SweepRow]:
    """sup_j and mean_j |rate_j - gamma(b_j)| for every (seed, q)."""
    q_list = list(q_list)
    if any(b <= a for a, b in zip(q_list, q_list[1:])):
        raise ValidationError("q_list must be increasing")
    seeds = [model.seed] if seeds is None else list(seeds)
    curve = reference_curve(model)
    items = [(s, q) for s in seeds for q in q_list]
    return ordered_map(partial(_sweep_one, model, curve, precision), items, workers)


def seed_mean_sup(rows: list[SweepRow]) -> dict[int, float]:
    """Mean over seeds of the sup deviation, per q."""
    out: dict[int, list[float]] = {}
    for r in rows:
        out.setdefault(r.q, []).append(r.sup)
    return {q: float(np.mean(v)) for q, v in sorted(out.items())}


def write_sweep_csv(rows: list[SweepRow], path, provenance: str = "") -> None:
    lines = ["# " + line for line in provenance.splitlines()] if provenance else []
    lines.append("seed,q,sup,mean,excess_p90,stderr_at_sup")
    lines += [f"{r.seed},{r.q},{r.sup:.17g},{r.mean:.17g},{r.excess_p90:.17g},{r.stderr_at_sup:.17g}" for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        raise ValidationError("trials must be positive")
    p = successes / trials
    denom = 1.0 + z * z / trials
    mid = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, mid - half)
    hi = 1.0 if successes == trials else min(1.0, mid + half)
    return lo, hi


@dataclass
class TrialSummary:
    event: str
    epsilon: float
    n: int | None
    q: int
    trials: int
    successes: int
    interval: tuple[float, float]

    @property
    def p_hat(self) -> float:
        return self.successes / self.trials

    def to_dict(self) -> dict:
        return {"event": self.event, "epsilon": self.epsilon, "n": self.n, "q": self.q, "trials": self.trials,
                "successes": self.successes, "p_hat": self.p_hat, "wilson95": list(self.interval)}


def _qnr_trial(dist, q, seed, epsilon, n, curve, precision, t) -> bool:
    V = sample_iid(dist, q, seed, t)
    return qnr_check(V, epsilon, n, curve, default_grid(V), precision)[0]


def _qsep_trial(dist, q, seed, epsilon, precision, t) -> bool:
    V = sample_iid(dist, q, seed, t)
    return separation_report(V, epsilon, precision).qsep


def estimate_event_prob(event: str, dist: DistributionSpec, epsilon: float, q: int, trials: int, seed: int = 0,
                        n: int | None = None, precision: int | None = None, curve: LyapunovCurve | None = None,
                        workers: int = 1) -> TrialSummary:
    """Monte Carlo frequency of Q_NR(eps, n, q) or Q_Sep(eps, q); trial t uses substream (seed, t)."""
    if trials < 30:
        raise ValidationError("need at least 30 trials")
    if event == "qnr":
        if n is None or n < 1 or q <= 2 * n:
            raise ValidationError("qnr needs 1 <= n and q > 2n")
        if curve is None:
            curve = iid_curve(dist)
        fn = partial(_qnr_trial, dist, q, seed, epsilon, n, curve, precision)
    elif event == "qsep":
        fn = partial(_qsep_trial, dist, q, seed, epsilon, precision)
    else:
        raise ValidationError(f"unknown event {event!r}")
    hits = sum(ordered_map(fn, range(trials), workers))
    return TrialSummary(event, float(epsilon), n, q, trials, int(hits), wilson_interval(int(hits), trials))


@dataclass
class DriftTrial:
    trial: int
    qnr: bool
    qsep: bool
    max_drift: int
    bound: float
    eligible: int
    flat: int

    @property
    def included(self) -> bool:
        return self.qnr and self.qsep

    @property
    def ok(self) -> bool:
        return self.max_drift <= self.bound


def _drift_trial(dist, q, seed, epsilon, n, C, eps_sep, curve, t) -> DriftTrial:
    V = sample_iid(dist, q, seed, t)
    qnr = qnr_check(V, epsilon, n, curve, default_grid(V))[0]
    qsep = separation_report(V, eps_sep).qsep
    drifts = center_drifts(V)
    E = np.linalg.eigvalsh(np.diag(V.values) + np.diag(np.ones(q - 1), 1) + np.diag(np.ones(q - 1), -1))
    eligible = [d for d, e in zip(drifts, np.sort(E)) if not d.flat and curve(e) > 4 * epsilon]
    worst = max((d.drift for d in eligible), default=0)
    return DriftTrial(t, qnr, qsep, worst, C * n, len(eligible), sum(d.flat for d in drifts))


def drift_trials(dist: DistributionSpec, q: int, trials: int, epsilon: float, n: int, eps_sep: float,
                 seed: int = 0, C: float | None = None, curve: LyapunovCurve | None = None,
                 workers: int = 1) -> list[DriftTrial]:
    """Centre drift over the kappa grid for i.i.d. trials, with their Q_NR / Q_Sep verdicts."""
    if curve is None:
        curve = iid_curve(dist)
    if C is None:
        lo, hi = dist.support_min - 2.0, dist.support_max + 2.0
        C = default_C(float(np.max(curve(np.linspace(lo, hi, 201)))), epsilon)
    fn = partial(_drift_trial, dist, q, seed, epsilon, n, C, eps_sep, curve)
    return ordered_map(fn, range(trials), workers)


# fixed canvas; data box [X0, X1] x [Y1, Y0] in SVG user units (y grows downward)
SVG_W, SVG_H = 640, 480
X0, X1, Y0, Y1 = 60.0, 620.0, 440.0, 20.0


def scatter_svg(ds: ScatterDataset, provenance: str = "") -> str:
    """Blue band points over the red gamma polyline; x = energy, y = rate, linear axes."""
    xs, ys = ds.centers, ds.rates
    lo = min(float(xs.min()), float(ds.curve.energies.min())) if ds.curve.method != "iid_mc" else float(xs.min()) - 0.25
    hi = max(float(xs.max()), float(ds.curve.energies.max())) if ds.curve.method != "iid_mc" else float(xs.max()) + 0.25
    E = ds.curve.energies[(ds.curve.energies >= lo) & (ds.curve.energies <= hi)]
    G = ds.curve(E)
    ymax = max(float(ys.max()), float(G.max()) if G.size else 0.0) * 1.1 or 1.0
    ymin = min(0.0, float(ys.min()))

    def px(x):
        return X0 + (x - lo) / (hi - lo) * (X1 - X0)

    def py(y):
        return Y0 - (y - ymin) / (ymax - ymin) * (Y0 - Y1)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {SVG_W} {SVG_H}" width="{SVG_W}" height="{SVG_H}">']
    if provenance:
        out.append("<!--\n" + provenance.replace("--", "- -") + "\n-->")
    out.append(f'<rect x="{X0}" y="{Y1}" width="{X1 - X0}" height="{Y0 - Y1}" fill="none" stroke="black"/>')
    for k in range(5):
        xv = lo + (hi - lo) * k / 4
        yv = ymin + (ymax - ymin) * k / 4
        out.append(f'<text x="{px(xv):.2f}" y="{Y0 + 18:.2f}" font-size="11" text-anchor="middle">{xv:.2f}</text>')
        out.append(f'<text x="{X0 - 6:.2f}" y="{py(yv) + 4:.2f}" font-size="11" text-anchor="end">{yv:.3f}</text>')
    if E.size:
        pts = " ".join(f"{px(e):.2f},{py(g):.2f}" for e, g in zip(E, G))
        out.append(f'<polyline points="{pts}" fill="none" stroke="red" stroke-width="1.5"/>')
    for x, y in zip(xs, ys):
        out.append(f'<circle cx="{px(x):.2f}" cy="{py(y):.2f}" r="2" fill="blue"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
