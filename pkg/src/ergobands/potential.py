"""Potential sequences on the discrete circle and rational frequency approximants."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import mpmath
import numpy as np

from .errors import ValidationError

# Default margin around the spectral hull when building the energy window K.
WINDOW_MARGIN = 10.0


@dataclass(frozen=True)
class DistributionSpec:
    """Single-site distribution of an i.i.d. potential.

    ``kind`` is one of ``uniform_union``, ``bernoulli``, ``atoms``, ``constant``.
    For ``uniform_union`` the weight of each interval is proportional to its
    length. ``bernoulli`` takes two atoms and the probability ``p`` of the first.
    """

    kind: str
    intervals: tuple[tuple[float, float], ...] = ()
    atoms: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()
    value: float = 0.0

    def __post_init__(self):
        self.validate()

    @classmethod
    def uniform_union(cls, intervals):
        return cls("uniform_union", intervals=tuple((float(a), float(b)) for a, b in intervals))

    @classmethod
    def bernoulli(cls, a, b, p=0.5):
        return cls("bernoulli", atoms=(float(a), float(b)), probs=(float(p), 1.0 - float(p)))

    @classmethod
    def discrete(cls, atoms, probs):
        return cls("atoms", atoms=tuple(map(float, atoms)), probs=tuple(map(float, probs)))

    @classmethod
    def constant(cls, value):
        return cls("constant", value=float(value))

    def validate(self):
        if self.kind == "uniform_union":
            if not self.intervals:
                raise ValidationError("uniform_union needs at least one interval")
            ordered = sorted(self.intervals)
            for a, b in ordered:
                if not (math.isfinite(a) and math.isfinite(b)) or b <= a:
                    raise ValidationError(f"degenerate interval [{a}, {b}]")
            for (_, b0), (a1, _) in zip(ordered, ordered[1:]):
                if a1 <= b0:
                    raise ValidationError(f"intervals overlap near {a1}")
        elif self.kind in ("bernoulli", "atoms"):
            if len(self.atoms) != len(self.probs) or not self.atoms:
                raise ValidationError("atoms and probs must have equal nonzero length")
            if self.kind == "bernoulli" and len(self.atoms) != 2:
                raise ValidationError("bernoulli takes exactly two atoms")
            if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-12:
                raise ValidationError(f"probabilities {self.probs} must be >= 0 and sum to 1")
            if not all(math.isfinite(a) for a in self.atoms):
                raise ValidationError("atoms must be finite")
        elif self.kind == "constant":
            if not math.isfinite(self.value):
                raise ValidationError("constant value must be finite")
        else:
            raise ValidationError(f"unknown distribution kind {self.kind!r}")

    @property
    def bound(self) -> float:
        """Support bound S1 = max |v| over the support."""
        if self.kind == "uniform_union":
            return max(max(abs(a), abs(b)) for a, b in self.intervals)
        if self.kind == "constant":
            return abs(self.value)
        return max(abs(a) for a in self.atoms)

    @property
    def support_min(self) -> float:
        if self.kind == "uniform_union":
            return min(a for a, _ in self.intervals)
        return self.value if self.kind == "constant" else min(self.atoms)

    @property
    def support_max(self) -> float:
        if self.kind == "uniform_union":
            return max(b for _, b in self.intervals)
        return self.value if self.kind == "constant" else max(self.atoms)

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Inverse-CDF draws, one uniform per site, so shorter samples are prefixes of longer ones."""
        u = rng.random(size)
        if self.kind == "constant":
            return np.full(size, self.value)
        if self.kind == "uniform_union":
            ordered = sorted(self.intervals)
            lo = np.array([a for a, _ in ordered])
            hi = np.array([b for _, b in ordered])
            cum = np.concatenate([[0.0], np.cumsum(hi - lo)])
            t = u * cum[-1]
            which = np.clip(np.searchsorted(cum, t, side="right") - 1, 0, len(lo) - 1)
            return np.minimum(lo[which] + (t - cum[which]), hi[which])
        atoms = np.array(self.atoms)
        cum = np.cumsum(self.probs)
        which = np.clip(np.searchsorted(cum, u, side="right"), 0, len(atoms) - 1)
        return atoms[which]

    def to_dict(self) -> dict:
        if self.kind == "uniform_union":
            return {"kind": self.kind, "intervals": [list(iv) for iv in self.intervals]}
        if self.kind == "constant":
            return {"kind": self.kind, "value": self.value}
        return {"kind": self.kind, "atoms": list(self.atoms), "probs": list(self.probs)}

    @classmethod
    def from_dict(cls, d: dict) -> "DistributionSpec":
        kind = d.get("kind")
        if kind == "uniform_union":
            return cls.uniform_union(d["intervals"])
        if kind == "constant":
            return cls.constant(d["value"])
        if kind in ("bernoulli", "atoms"):
            return cls(kind, atoms=tuple(map(float, d["atoms"])), probs=tuple(map(float, d["probs"])))
        raise ValidationError(f"unknown distribution kind {kind!r}")


# The i.i.d. model of the reference figure.
FIGURE_IID = DistributionSpec.uniform_union([(-1.5, -1.0), (1.0, 1.5)])


@dataclass(frozen=True)
class Rational:
    p: int
    q: int

    def __post_init__(self):
        if self.q < 1:
            raise ValidationError(f"denominator must be positive, got {self.q}")
        if math.gcd(self.p, self.q) != 1:
            raise ValidationError(f"{self.p}/{self.q} is not in lowest terms")

    def __str__(self):
        return f"{self.p}/{self.q}"

    @classmethod
    def parse(cls, text: str) -> "Rational":
        m = re.fullmatch(r"\s*(-?\d+)\s*/\s*(\d+)\s*", text)
        if not m:
            raise ValidationError(f"cannot parse rational {text!r}")
        f = Fraction(int(m.group(1)), int(m.group(2)))
        return cls(f.numerator, f.denominator)


@dataclass(frozen=True, eq=False)
class PotentialSeq:
    """A length-q potential V(0..q-1) on Z_q with its generation metadata."""

    values: np.ndarray
    bound: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or v.size < 1:
            raise ValidationError("potential must be a nonempty 1-d sequence")
        if not np.all(np.isfinite(v)):
            raise ValidationError("potential values must be finite")
        if np.max(np.abs(v)) > self.bound * (1 + 1e-12) + 1e-300:
            raise ValidationError(f"max|V| = {np.max(np.abs(v))} exceeds declared bound {self.bound}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def period(self) -> int:
        return int(self.values.size)

    def __len__(self):
        return self.period

    def __getitem__(self, k):
        return float(self.values[k % self.period])

    def __eq__(self, other):
        return isinstance(other, PotentialSeq) and np.array_equal(self.values, other.values)

    def __hash__(self):
        return hash(self.values.tobytes())

    def energy_window(self, margin: float = WINDOW_MARGIN) -> tuple[float, float]:
        """K = [-(2 + S1) - margin, 2 + S1 + margin]; contains every spectrum with |V| <= S1."""
        r = 2.0 + self.bound + margin
        return (-r, r)

    def spectral_hull(self) -> tuple[float, float]:
        return (float(self.values.min()) - 2.0, float(self.values.max()) + 2.0)


def explicit(values: Sequence[float], bound: float | None = None, **meta) -> PotentialSeq:
    v = np.asarray(values, dtype=float)
    b = float(np.max(np.abs(v))) if bound is None else float(bound)
    return PotentialSeq(v, b, {"origin": "explicit", **meta})


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """PCG64 generator for ``seed``; ``stream`` indices give independent substreams."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=tuple(stream))))


def sample_iid(dist: DistributionSpec, q: int, seed: int, *stream: int) -> PotentialSeq:
    if q < 1:
        raise ValidationError(f"q must be >= 1, got {q}")
    dist.validate()
    values = dist.sample(make_rng(seed, *stream), q)
    return PotentialSeq(values, dist.bound, {"origin": "iid", "seed": int(seed), "stream": list(stream), "dist": dist.to_dict()})


def quasiperiodic_seq(amplitude: float, theta: float, alpha: Rational, q: int | None = None) -> PotentialSeq:
    """V(k) = 2*amplitude*cos(2*pi*(theta + k*p/q)) on Z_q."""
    if q is None:
        q = alpha.q
    if q < 1:
        raise ValidationError(f"q must be >= 1, got {q}")
    if amplitude < 0:
        raise ValidationError("amplitude must be nonnegative")
    frac_theta = math.fmod(theta, 1.0)
    # k*p reduced exactly mod the denominator keeps the phase accurate for large k.
    k = np.arange(q, dtype=np.int64)
    phase = frac_theta + ((k * alpha.p) % alpha.q) / alpha.q
    values = 2.0 * amplitude * np.cos(2.0 * np.pi * phase)
    return PotentialSeq(values, 2.0 * amplitude, {
        "origin": "quasiperiodic", "amplitude": amplitude, "theta": theta, "alpha": str(alpha)})


# Quadratic irrationals as (P, D, Q) meaning (P + sqrt(D)) / Q.
QUADRATIC_NAMES = {
    "sqrt2": (0, 2, 1),
    "sqrt3": (0, 3, 1),
    "golden": (1, 5, 2),
    "golden-1": (-1, 5, 2),
}


def _quadratic_partial_quotients(P: int, D: int, Q: int, count: int) -> list[int]:
    r = math.isqrt(D)
    if r * r == D:
        raise ValidationError(f"sqrt({D}) is rational")
    # Normalise so that Q divides D - P^2.
    if (D - P * P) % Q:
        P, D, Q = P * abs(Q), D * Q * Q, Q * abs(Q)
        r = math.isqrt(D)
    out = []
    for _ in range(count):
        # sqrt(D) is irrational, so floor((P + sqrt D)/Q) is exact in integers.
        a = (P + r) // Q if Q > 0 else -((P + r) // -Q) - 1
        out.append(a)
        P = a * Q - P
        Q = (D - P * P) // Q
    return out


def _real_partial_quotients(alpha, count: int, dps: int = 60) -> list[int]:
    with mpmath.workdps(dps):
        x = mpmath.mpf(alpha)
        tol = mpmath.mpf(10) ** (-(dps // 2))
        out = []
        for i in range(count):
            a = int(mpmath.floor(x))
            out.append(a)
            frac = x - a
            if i < count - 1 and abs(frac) < tol:
                raise ValidationError(f"continued fraction of {alpha} terminates after {i + 1} terms: {out}")
            if i < count - 1:
                x = 1 / frac
        return out


def parse_alpha(text: str):
    """Accepts a quadratic-irrational name, ``(P+sqrtD)/Q``, ``p/q`` or a decimal."""
    t = text.strip().lower()
    if t in QUADRATIC_NAMES:
        return QUADRATIC_NAMES[t]
    m = re.fullmatch(r"\(?\s*(-?\d+)?\s*\+?\s*sqrt\(?(\d+)\)?\s*\)?\s*(?:/\s*(\d+))?", t)
    if m:
        return (int(m.group(1) or 0), int(m.group(2)), int(m.group(3) or 1))
    if "/" in t:
        return Fraction(t)
    return t


def partial_quotients(alpha, count: int) -> list[int]:
    if isinstance(alpha, str):
        alpha = parse_alpha(alpha)
    if isinstance(alpha, tuple):
        return _quadratic_partial_quotients(*alpha, count)
    if isinstance(alpha, (Fraction, int)):
        f = Fraction(alpha)
        out = []
        while len(out) < count:
            a = f.numerator // f.denominator
            out.append(a)
            f -= a
            if f == 0 and len(out) < count:
                raise ValidationError(f"{alpha} is rational; expansion terminates as {out}")
            if f:
                f = 1 / f
        return out
    return _real_partial_quotients(alpha, count)


def cf_convergents(alpha, count: int) -> list[Rational]:
    """First ``count`` convergents p_n/q_n with strictly increasing q_n.

    When a_1 = 1 the zeroth convergent shares q = 1 with the first and is dropped.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    a = partial_quotients(alpha, count + 1)
    p_prev, p = 1, a[0]
    q_prev, q = 0, 1
    conv = [(p, q)]
    for an in a[1:]:
        p_prev, p = p, an * p + p_prev
        q_prev, q = q, an * q + q_prev
        conv.append((p, q))
    out = []
    for p, q in conv:
        if out and out[-1].q == q:
            out.pop()
        out.append(Rational(p, q))
    return out[:count]


def write_csv(pot: PotentialSeq, path, header: str = "") -> None:
    seed = pot.meta.get("seed", "none")
    lines = [f"# period={pot.period} seed={seed}"]
    if header:
        lines.append(header)
    lines += [repr(float(v)) for v in pot.values]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_csv(path) -> PotentialSeq:
    text = Path(path).read_text(encoding="utf-8").splitlines()
    meta = {"origin": "csv"}
    period = None
    values = []
    for line in text:
        if line.startswith("#"):
            for key, val in re.findall(r"(\w+)=(\S+)", line):
                if key == "period":
                    period = int(val)
                elif key == "seed" and val != "none":
                    meta["seed"] = int(val)
            continue
        if line.strip():
            values.append(float(line))
    if period is not None and period != len(values):
        raise ValidationError(f"declared period {period} but found {len(values)} values")
    return explicit(values, **meta)
