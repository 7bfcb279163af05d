"""Command-line front end.

Every subcommand takes the same keys, from flags or a JSON ``--config`` file
(flags win).  Outputs go to ``--out`` with a ``#`` provenance header; the
one-line summary goes to stdout, errors go to stderr as JSON.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ErgobandsError, ValidationError
from .experiments import (DEFAULT_SEEDS, ModelSpec, deviation_sweep, estimate_event_prob, figure_scatter,
                          iid_curve, reference_curve, seed_mean_sup, write_sweep_csv)
from .floquet import bands, eigenpairs, write_bands_csv
from .localization import center_drifts, default_C, localization_profile, separation_report
from .lyapunov import amo_curve, energy_grid, lyapunov_birkhoff, lyapunov_iid_mc
from .potential import FIGURE_IID, DistributionSpec, cf_convergents, read_csv
from .resonance import default_grid, qnr_check, resonant_set

SUBCOMMANDS = ("bands", "scatter", "lyapunov", "resonance", "localize", "separation", "prob", "convergents")
LONG_Q = 985

# key: (type, default, help)
KEYS = {
    "model": (str, "iid", "potential model: free | iid | iid-uniform-union | amo"),
    "dist": (str, None, "i.i.d. single-site law as JSON, e.g. {\"kind\": \"uniform_union\", \"intervals\": [[-1, 1]]}; "
                        "default: uniform on [-3/2,-1] U [1,3/2]"),
    "potential": (str, None, "CSV file with one value per line; overrides --model"),
    "q": (int, 100, "period, 1 <= q; q >= 985 needs --long"),
    "precision_bits": (int, None, "MPFR bits, >= 64; default: chosen from a double pilot"),
    "epsilon": (str, "0.2gmin", "epsilon > 0; a number, or '<f>gmin' for f times the minimum of gamma"),
    "n": (int, 8, "arc half-length, 1 <= n < q/2"),
    "kappa_points": (int, 9, "kappa grid size on [0, pi/q], >= 2"),
    "kappa": (float, 0.0, "Floquet phase for localize"),
    "energy": (float, None, "single energy for resonance; default: whole grid over K"),
    "seed": (int, 0, "master seed, >= 0"),
    "seeds": (int, len(DEFAULT_SEEDS), "number of seeds 0..k-1 in the scatter sweep, >= 1"),
    "trials": (int, 100, "Monte Carlo trials for prob, >= 30"),
    "event": (str, "qnr", "event for prob: qnr | qsep"),
    "grid": (float, 0.025, "energy grid spacing for lyapunov, > 0"),
    "samples": (int, 200, "independent potentials per energy in lyapunov, >= 2"),
    "steps": (int, 10000, "product length per sample in lyapunov, >= 1"),
    "lam": (float, math.exp(0.25), "AMO coupling lambda > 0; potential 2*lambda*cos"),
    "theta": (float, math.sqrt(3.0), "AMO phase"),
    "alpha": (str, "sqrt2", "frequency: p/q, quadratic-irrational name (sqrt2, sqrt3, golden, golden-1) or (P+sqrtD)/Q"),
    "count": (int, 9, "number of convergents, >= 1"),
    "sweep": (str, None, "comma-separated increasing q list for scatter; writes a deviation table"),
    "out": (str, "out", "output directory"),
    "workers": (int, 1, "worker processes, >= 1; outputs do not depend on it"),
    "long": (bool, False, "allow q >= 985"),
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ergobands", description="Bands, Lyapunov exponents and localization for periodic "
                                                   "approximations of ergodic Schroedinger operators.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"{name} pipeline")
        p.add_argument("--config", help="JSON file with any of the keys below (flags override)")
        for key, (typ, default, text) in KEYS.items():
            flag = "--" + key.replace("_", "-")
            if typ is bool:
                p.add_argument(flag, action="store_const", const=True, default=None, help=f"{text}")
            else:
                p.add_argument(flag, type=typ, default=None, help=f"{text} (default: {default})")
    return parser


def resolve_config(ns: argparse.Namespace) -> dict:
    cfg = {k: v[1] for k, v in KEYS.items()}
    if ns.config:
        try:
            loaded = json.loads(Path(ns.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ValidationError("config must be a JSON object")
        unknown = sorted(set(loaded) - set(KEYS))
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        for k, v in loaded.items():
            cfg[k] = _coerce(k, v)
    for k in KEYS:
        v = getattr(ns, k, None)
        if v is not None:
            cfg[k] = v
    _check_ranges(cfg)
    return cfg


def _coerce(key: str, v):
    typ = KEYS[key][0]
    if v is None:
        return None
    if key == "dist" and isinstance(v, dict):
        return json.dumps(v, sort_keys=True)
    if key == "sweep" and isinstance(v, list):
        return ",".join(str(int(x)) for x in v)
    if typ in (int, float):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValidationError(f"config key {key} must be numeric")
        if typ is int and v != int(v):
            raise ValidationError(f"config key {key} must be an integer")
    elif typ is bool and not isinstance(v, bool):
        raise ValidationError(f"config key {key} must be true or false")
    return typ(v)


def _check_ranges(cfg: dict) -> None:
    def need(cond, msg):
        if not cond:
            raise ValidationError(msg)

    need(cfg["q"] >= 1, "q must be >= 1")
    need(cfg["q"] < LONG_Q or cfg["long"], f"q >= {LONG_Q} is a long run; pass --long")
    need(cfg["precision_bits"] is None or cfg["precision_bits"] >= 64, "precision-bits must be >= 64")
    need(cfg["n"] >= 1, "n must be >= 1")
    need(cfg["kappa_points"] >= 2, "kappa-points must be >= 2")
    need(cfg["seed"] >= 0, "seed must be >= 0")
    need(cfg["seeds"] >= 1, "seeds must be >= 1")
    need(cfg["trials"] >= 30, "trials must be >= 30")
    need(cfg["event"] in ("qnr", "qsep"), "event must be qnr or qsep")
    need(cfg["grid"] > 0, "grid must be > 0")
    need(cfg["samples"] >= 2 and cfg["steps"] >= 1, "need samples >= 2 and steps >= 1")
    need(cfg["lam"] > 0, "lam must be > 0")
    need(cfg["count"] >= 1, "count must be >= 1")
    need(cfg["workers"] >= 1, "workers must be >= 1")
    need(cfg["model"] in ("free", "iid", "iid-uniform-union", "amo"), f"unknown model {cfg['model']!r}")


def config_hash(cfg: dict) -> str:
    blob = json.dumps({k: v for k, v in cfg.items() if k not in ("out", "workers")}, sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def provenance(cfg: dict, command: str, precision=None) -> str:
    return (f"ergobands {__version__} command={command} config_hash={config_hash(cfg)} "
            f"seed={cfg['seed']} precision={precision if precision is not None else cfg['precision_bits']}")


def _dist(cfg) -> DistributionSpec:
    if cfg["dist"] is None:
        return FIGURE_IID
    try:
        return DistributionSpec.from_dict(json.loads(cfg["dist"]))
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise ValidationError(f"bad dist: {exc}") from exc


def _model(cfg) -> ModelSpec:
    kind = "iid" if cfg["model"] == "iid-uniform-union" else cfg["model"]
    return ModelSpec(kind, dist=_dist(cfg), amplitude=cfg["lam"], theta=cfg["theta"], alpha=cfg["alpha"],
                     seed=cfg["seed"])


def _potential(cfg):
    if cfg["potential"]:
        return read_csv(cfg["potential"])
    return _model(cfg).build(cfg["q"])


def _curve_for(cfg, V=None):
    model = _model(cfg)
    if cfg["potential"] or model.kind == "iid":
        return iid_curve(_dist(cfg))
    return reference_curve(model)


def parse_epsilon(text, curve=None) -> float:
    s = str(text).strip().lower()
    if s.endswith("gmin"):
        if curve is None:
            raise ValidationError("relative epsilon needs a gamma curve")
        eps = float(s[:-4] or 1.0) * curve.min
    else:
        eps = float(s)
    if not eps > 0:
        raise ValidationError("epsilon must be > 0")
    return eps


def _write_json(path: Path, obj: dict, prov: str) -> None:
    path.write_text(json.dumps({"provenance": prov, **obj}, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def cmd_bands(cfg, out: Path) -> str:
    V = _potential(cfg)
    band_list = bands(V, cfg["precision_bits"])
    prec = band_list[0].precision
    write_bands_csv(band_list, out / "bands.csv", provenance(cfg, "bands", prec))
    closed = sum(b.closed_left or b.closed_right for b in band_list)
    return f"bands: q={V.period} precision={prec} closed_gaps={closed} -> {out / 'bands.csv'}"


def cmd_scatter(cfg, out: Path) -> str:
    model = _model(cfg)
    ds = figure_scatter(model, cfg["q"], cfg["precision_bits"])
    prov = provenance(cfg, "scatter", ds.meta["precision"])
    ds.to_csv(out / "scatter.csv", prov)
    ds.to_svg(out / "scatter.svg", prov)
    ds.curve.to_csv(out / "gamma.csv", prov)
    msg = f"scatter: q={cfg['q']} sup_dev={ds.sup_deviation():.4f} mean_dev={ds.mean_deviation():.4f}"
    if cfg["sweep"]:
        qs = [int(x) for x in cfg["sweep"].split(",")]
        for q in qs:
            if q >= LONG_Q and not cfg["long"]:
                raise ValidationError(f"q >= {LONG_Q} is a long run; pass --long")
        seeds = range(cfg["seeds"]) if model.kind == "iid" else [cfg["seed"]]
        rows = deviation_sweep(model, qs, cfg["precision_bits"], seeds, cfg["workers"])
        write_sweep_csv(rows, out / "sweep.csv", prov)
        means = seed_mean_sup(rows)
        msg += " sweep_mean_sup=" + ",".join(f"{q}:{v:.4f}" for q, v in means.items())
    return msg + f" -> {out}"


def cmd_lyapunov(cfg, out: Path) -> str:
    model = _model(cfg)
    if model.kind == "iid":
        d = model.dist
        grid = energy_grid(d.support_min - 2.0, d.support_max + 2.0, cfg["grid"])
        curve = lyapunov_iid_mc(d, grid, cfg["steps"], cfg["samples"], cfg["seed"])
    elif model.kind == "amo":
        grid = energy_grid(-2.0 - 2.0 * cfg["lam"], 2.0 + 2.0 * cfg["lam"], cfg["grid"])
        curve = amo_curve(cfg["lam"], grid) if cfg["lam"] >= 1 else lyapunov_birkhoff(
            cfg["lam"], cfg["theta"], cfg["alpha"], grid, cfg["steps"])
    else:
        curve = reference_curve(model)
    curve.to_csv(out / "lyapunov.csv", provenance(cfg, "lyapunov"))
    return f"lyapunov: method={curve.method} points={curve.energies.size} min={curve.min:.4f} max={curve.max:.4f}"


def cmd_resonance(cfg, out: Path) -> str:
    V = _potential(cfg)
    curve = _curve_for(cfg, V)
    eps = parse_epsilon(cfg["epsilon"], curve)
    prov = provenance(cfg, "resonance")
    notes = {"diameter": "max pairwise circle distance", "energy_grid": "uniform, spacing 1e-3*|K|"}
    if cfg["energy"] is not None:
        rep = resonant_set(V, cfg["energy"], eps, cfg["n"], curve, cfg["precision_bits"])
        _write_json(out / "resonance.json", {**json.loads(rep.to_json()), "notes": notes}, prov)
        return f"resonance: E={cfg['energy']} resonant={len(rep.resonant_sites)} diameter={rep.diameter} qnr={rep.qnr}"
    grid = default_grid(V)
    ok, failing = qnr_check(V, eps, cfg["n"], curve, grid, cfg["precision_bits"])
    _write_json(out / "resonance.json", {"epsilon": eps, "n": cfg["n"], "qnr": ok, "failing_energies": failing,
                                         "grid": [float(grid[0]), float(grid[-1]), int(grid.size)], "notes": notes}, prov)
    return f"resonance: qnr={ok} failing={len(failing)}/{grid.size}"


def cmd_localize(cfg, out: Path) -> str:
    V = _potential(cfg)
    curve = _curve_for(cfg, V)
    eps = parse_epsilon(cfg["epsilon"], curve)
    C = default_C(float(np.max(curve(np.linspace(*V.spectral_hull(), 201)))), eps)
    pairs = eigenpairs(V, cfg["kappa"], cfg["precision_bits"])
    prec = pairs[0].precision
    prov = provenance(cfg, "localize", prec)
    profiles = [json.loads(localization_profile(p, C, cfg["n"]).to_json()) for p in pairs]
    kappas = np.linspace(0.0, math.pi / V.period, cfg["kappa_points"])
    drifts = center_drifts(V, kappas)
    _write_json(out / "localize.json", {"C": C, "epsilon": eps, "profiles": profiles}, prov)
    lines = ["# " + prov, "j,drift,flat,centers"]
    lines += [f"{d.j},{d.drift},{int(d.flat)},{' '.join(map(str, d.centers))}" for d in drifts]
    (out / "drift.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    worst = max((d.drift for d in drifts if not d.flat), default=0)
    return f"localize: q={V.period} C={C:.3f} max_drift={worst} flat={sum(d.flat for d in drifts)}"


def cmd_separation(cfg, out: Path) -> str:
    V = _potential(cfg)
    eps = parse_epsilon(cfg["epsilon"], iid_curve(_dist(cfg)) if "gmin" in str(cfg["epsilon"]) else None)
    rep = separation_report(V, eps, cfg["precision_bits"])
    _write_json(out / "separation.json", json.loads(rep.to_json()), provenance(cfg, "separation", rep.precision))
    return f"separation: min_gap={float(rep.min_gap):.6e} threshold={rep.threshold:.6e} qsep={rep.qsep}"


def cmd_prob(cfg, out: Path) -> str:
    dist = _dist(cfg)
    curve = iid_curve(dist)
    eps = parse_epsilon(cfg["epsilon"], curve)
    summary = estimate_event_prob(cfg["event"], dist, eps, cfg["q"], cfg["trials"], cfg["seed"],
                                  n=cfg["n"] if cfg["event"] == "qnr" else None,
                                  precision=cfg["precision_bits"], curve=curve, workers=cfg["workers"])
    _write_json(out / "prob.json", summary.to_dict(), provenance(cfg, "prob"))
    lo, hi = summary.interval
    return f"prob: {cfg['event']} p_hat={summary.p_hat:.3f} wilson95=[{lo:.3f},{hi:.3f}]"


def cmd_convergents(cfg, out) -> str:
    return "\n".join(str(r) for r in cf_convergents(cfg["alpha"], cfg["count"]))


COMMANDS = {"bands": cmd_bands, "scatter": cmd_scatter, "lyapunov": cmd_lyapunov, "resonance": cmd_resonance,
            "localize": cmd_localize, "separation": cmd_separation, "prob": cmd_prob,
            "convergents": cmd_convergents}


def run(argv=None) -> int:
    try:
        ns = build_parser().parse_args(argv)
        cfg = resolve_config(ns)
        out = Path(cfg["out"])
        if ns.command != "convergents":
            out.mkdir(parents=True, exist_ok=True)
        print(COMMANDS[ns.command](cfg, out))
        return 0
    except ErgobandsError as exc:
        return _fail(type(exc).__name__, str(exc), exc.exit_code)
    except OSError as exc:
        return _fail("IOError", str(exc), 4)


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message, "exit_code": code}, sort_keys=True), file=sys.stderr)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
