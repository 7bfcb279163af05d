"""Lyapunov exponent estimators and the reference curves used downstream."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import mpmath
import numpy as np

from .errors import ValidationError
from .potential import QUADRATIC_NAMES, DistributionSpec, make_rng
from .transfer import log_norms

DEFAULT_STEPS = 10_000
DEFAULT_SAMPLES = 200


@dataclass(frozen=True, eq=False)
class LyapunovCurve:
    energies: np.ndarray
    gamma: np.ndarray
    stderr: np.ndarray
    method: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        if e.ndim != 1 or e.size < 2 or np.any(np.diff(e) <= 0):
            raise ValidationError("curve energies must be a strictly increasing grid")
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "gamma", np.asarray(self.gamma, dtype=float))
        object.__setattr__(self, "stderr", np.asarray(self.stderr, dtype=float))

    def __call__(self, E):
        """Linear interpolation, clamped at the grid ends."""
        return np.interp(E, self.energies, self.gamma)

    def stderr_at(self, E):
        return np.interp(E, self.energies, self.stderr)

    @property
    def min(self) -> float:
        return float(self.gamma.min())

    @property
    def max(self) -> float:
        return float(self.gamma.max())

    def cache_key(self) -> str:
        return curve_key(self.method, self.params)

    def to_csv(self, path, provenance: str = "") -> None:
        lines = [f"# method={self.method} key={self.cache_key()}",
                 "# params=" + json.dumps(self.params, sort_keys=True)]
        if provenance:
            lines += ["# " + line for line in provenance.splitlines()]
        lines.append("energy,gamma,stderr")
        lines += [f"{e!r},{g!r},{s!r}" for e, g, s in zip(self.energies.tolist(), self.gamma.tolist(), self.stderr.tolist())]
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "LyapunovCurve":
        method, params = "csv", {}
        rows = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line.startswith("# method="):
                method = line.split()[1].split("=", 1)[1]
            elif line.startswith("# params="):
                params = json.loads(line[len("# params="):])
            elif line and not line.startswith("#") and not line.startswith("energy"):
                rows.append([float(x) for x in line.split(",")])
        arr = np.array(rows)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2], method, params)


def curve_key(method: str, params: dict) -> str:
    blob = json.dumps({"method": method, **params}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def energy_grid(lo: float, hi: float, spacing: float, window: tuple[float, float] | None = None,
                outer_points: int = 40) -> np.ndarray:
    """Uniform grid on [lo, hi]; optionally padded with a coarse grid out to ``window``."""
    n = max(2, int(math.ceil((hi - lo) / spacing)) + 1)
    grid = np.linspace(lo, hi, n)
    if window is not None:
        left = np.linspace(window[0], lo, outer_points, endpoint=False)
        right = np.linspace(hi, window[1], outer_points + 1)[1:]
        grid = np.concatenate([left[left < lo], grid, right[right > hi]])
    return grid


def lyapunov_iid_mc(dist: DistributionSpec, energies, n: int = DEFAULT_STEPS, samples: int = DEFAULT_SAMPLES,
                    seed: int = 0, chunk: int = 64) -> LyapunovCurve:
    """Mean of n^-1 log||Phi_n(E)|| over independent potentials.

    Sample s uses the substream ``(seed, s)`` and is shared by every energy
    (common random numbers), so the curve is smooth in E and independent of
    how the grid is chunked.
    """
    if n < 1 or samples < 2:
        raise ValidationError("need n >= 1 and samples >= 2")
    E = np.asarray(energies, dtype=float)
    pots = np.stack([dist.sample(make_rng(seed, s), n) for s in range(samples)])
    est = np.empty((E.size, samples))
    for start in range(0, E.size, chunk):
        est[start:start + chunk] = log_norms(pots, E[start:start + chunk]) / n
    gamma = est.mean(axis=1)
    stderr = est.std(axis=1, ddof=1) / math.sqrt(samples)
    return LyapunovCurve(E, gamma, stderr, "iid_mc",
                         {"dist": dist.to_dict(), "n": n, "samples": samples, "seed": int(seed),
                          "grid": [float(E[0]), float(E[-1]), int(E.size)]})


def alpha_value(alpha) -> float:
    """Float value of a frequency given as a number, 'p/q', or a quadratic-irrational name."""
    if isinstance(alpha, str):
        key = alpha.strip().lower()
        if key in QUADRATIC_NAMES:
            P, D, Q = QUADRATIC_NAMES[key]
            with mpmath.workdps(40):
                return float((P + mpmath.sqrt(D)) / Q)
        if "/" in key:
            p, q = key.split("/")
            return int(p) / int(q)
        return float(key)
    return float(alpha)


def lyapunov_birkhoff(amplitude: float, theta: float, alpha, energies, n: int = 100_000) -> LyapunovCurve:
    """n^-1 log||Phi_n(E)|| along the orbit theta, theta + alpha, ... of the cosine potential."""
    if n < 1:
        raise ValidationError("need n >= 1")
    a = alpha_value(alpha)
    k = np.arange(n, dtype=float)
    with mpmath.workdps(30):
        a_frac = float(mpmath.mpf(a) % 1)
    phase = np.mod(math.fmod(theta, 1.0) + np.mod(k * a_frac, 1.0), 1.0)
    values = 2.0 * amplitude * np.cos(2.0 * np.pi * phase)
    E = np.asarray(energies, dtype=float)
    gamma = log_norms(values, E) / n
    return LyapunovCurve(E, gamma, np.zeros_like(gamma), "birkhoff",
                         {"amplitude": amplitude, "theta": theta, "alpha": str(alpha), "n": n,
                          "grid": [float(E[0]), float(E[-1]), int(E.size)]})


def amo_oracle(lam: float, E=None) -> float:
    """log(lam) on the spectrum of the almost Mathieu operator with coupling 2*lam, lam >= 1."""
    if lam < 1:
        raise ValidationError(f"closed form only covers lam >= 1, got {lam}")
    return math.log(lam)


def amo_curve(lam: float, energies) -> LyapunovCurve:
    E = np.asarray(energies, dtype=float)
    g = np.full(E.shape, amo_oracle(lam))
    return LyapunovCurve(E, g, np.zeros_like(g), "amo_oracle", {"lambda": lam})


def free_curve(energies) -> LyapunovCurve:
    """gamma(E) = arccosh(max(|E|/2, 1)) for V = 0."""
    E = np.asarray(energies, dtype=float)
    g = np.arccosh(np.maximum(np.abs(E) / 2.0, 1.0))
    return LyapunovCurve(E, g, np.zeros_like(g), "free", {})
