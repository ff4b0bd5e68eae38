"""Scenario runner: ``varexp <subcommand> [--config file.json] [--set key=value]... --out dir``.

Writes ``data.csv`` (one row per sweep point, sorted by sweep keys) and
``meta.json`` (config echo, version, fitted constants). Exit status 0 on
success, 2 on invalid input, 3 when a row carries a numerical failure flag.

Random fields come from numpy's PCG64 seeded by SeedSequence([rng_seed, seed]).
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import itertools
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .exponent import build_exponent
from .grid import TensorField, gradient, make_domain, sym_gradient
from .rotgeo import dist_SO
from .varnorm import luxemburg_norm, maximal_function, modular, norm
from .whitney import coverage_mask, overlap_count, whitney_decomposition

SUBCOMMANDS = ("norm", "rigidity", "korn", "poincare", "mixed", "extend", "lusin", "gamma", "whitney", "maximal")
FLAG_FAILURE = 1
FLAG_COLD_MISMATCH = 2
FLAG_EXACT_ZERO = 4
EXIT_OK, EXIT_INVALID, EXIT_FAILURE = 0, 2, 3


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "norm": {
        "domain": {"shape": "rectangle"},
        "exponent": {"kind": "linear-ramp", "params": {"start": 1.4, "stop": 2.0}},
        "sweep": {"resolutions": [33], "seeds": list(range(10))},
    },
    "rigidity": {
        "domain": {"shape": "rectangle"},
        "exponent": {"kind": "linear-ramp", "params": {"start": 1.4, "stop": 2.0}},
        "sweep": {"resolutions": [65], "seeds": list(range(20)), "eps": [1e-3, 1e-2, 1e-1]},
    },
    "korn": {
        "domain": {"shape": "rectangle"},
        "exponent": {"kind": "linear-ramp", "params": {"start": 1.4, "stop": 2.0}},
        "sweep": {"resolutions": [65], "seeds": list(range(20)), "eps": [1e-3, 1e-2, 1e-1]},
    },
    "poincare": {
        "domain": {"shape": "rectangle"},
        "exponent": {"kind": "constant", "params": {"value": 2.0}},
        "sweep": {"resolutions": [33, 65], "seeds": list(range(5))},
    },
    "mixed": {
        "domain": {"shape": "rectangle"},
        "exponent": {"kind": "constant", "params": {"value": 1.2}},
        "field": {"eps": 0.05},
        "sweep": {"resolutions": [33], "seeds": list(range(10)), "mu": [1.0, 2.0, 4.0]},
    },
    "extend": {
        "domain": {"shape": "graph-halfspace", "slope": 0.3},
        "exponent": {"kind": "linear-ramp", "params": {"start": 1.5, "stop": 2.0}},
        "field": {"R": 0.8, "mu": 1.2, "amplitude": 0.1, "modes": 2},
        "sweep": {"resolutions": [129, 257], "seeds": list(range(3))},
    },
    "lusin": {
        "domain": {"shape": "rectangle"},
        "exponent": {"kind": "constant", "params": {"value": 2.0}},
        "field": {"amplitude": 0.3, "modes": 4},
        "sweep": {"resolutions": [33, 65], "seeds": list(range(5)), "lambda": [1.0, 2.0, 4.0]},
    },
    "gamma": {
        "domain": {"shape": "lshape"},
        "exponent": {"kind": "linear-ramp", "params": {"start": 1.3, "stop": 2.0}},
        "field": {"bump": 0.2, "cold_check": True},
        "sweep": {"resolutions": [33], "eps": [1e-1, 1e-2, 1e-3]},
    },
    "whitney": {
        "domain": {"shape": "lshape"},
        "sweep": {"resolutions": [17, 33]},
    },
    "maximal": {
        "domain": {"shape": "disk"},
        "exponent": {"kind": "linear-ramp", "params": {"start": 1.5, "stop": 2.5}},
        "sweep": {"resolutions": [33, 65], "seeds": list(range(5))},
    },
}
TOP_KEYS = {"subcommand", "domain", "exponent", "field", "sweep", "rng_seed", "output"}
SWEEP_KEYS = {"resolutions", "seeds", "eps", "lambda", "mu"}


@dataclass
class ScenarioConfig:
    subcommand: str
    domain: dict
    exponent: dict
    field: dict
    sweep: dict
    rng_seed: int = 0
    output: str | None = None

    @classmethod
    def build(cls, subcommand: str, user: dict | None = None, overrides=()) -> "ScenarioConfig":
        if subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        cfg = copy.deepcopy(DEFAULTS[subcommand])
        user = dict(user or {})
        unknown = set(user) - TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        if user.get("subcommand", subcommand) != subcommand:
            raise ConfigError("config subcommand does not match the command line")
        for key, val in user.items():
            if isinstance(val, dict) and isinstance(cfg.get(key), dict):
                cfg[key].update(val)
            else:
                cfg[key] = val
        for item in overrides:
            _apply_override(cfg, item)
        cfg.setdefault("exponent", {})
        cfg.setdefault("field", {})
        out = cls(
            subcommand=subcommand,
            domain=cfg.get("domain", {}),
            exponent=cfg["exponent"],
            field=cfg["field"],
            sweep=cfg.get("sweep", {}),
            rng_seed=cfg.get("rng_seed", 0),
            output=cfg.get("output"),
        )
        out.validate()
        return out

    def validate(self):
        if not isinstance(self.rng_seed, int) or isinstance(self.rng_seed, bool) or self.rng_seed < 0:
            raise ConfigError("rng_seed must be a non-negative integer")
        if set(self.sweep) - SWEEP_KEYS:
            raise ConfigError(f"unknown sweep keys {sorted(set(self.sweep) - SWEEP_KEYS)}")
        for key, vals in self.sweep.items():
            if not isinstance(vals, list) or not vals:
                raise ConfigError(f"sweep list {key!r} must be a nonempty list")
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
                raise ConfigError(f"sweep list {key!r} must hold numbers")
        for key in ("resolutions", "seeds"):
            if key in self.sweep and not all(isinstance(v, int) for v in self.sweep[key]):
                raise ConfigError(f"sweep list {key!r} must hold integers")
        if "shape" not in self.domain:
            raise ConfigError("domain.shape is required")

    def to_json(self) -> dict:
        return {
            "subcommand": self.subcommand,
            "domain": self.domain,
            "exponent": self.exponent,
            "field": self.field,
            "sweep": self.sweep,
            "rng_seed": self.rng_seed,
        }


def _apply_override(cfg: dict, item: str):
    if "=" not in item:
        raise ConfigError(f"--set expects key=value, got {item!r}")
    key, raw = item.split("=", 1)
    try:
        val = json.loads(raw)
    except json.JSONDecodeError:
        val = raw
    parts = key.split(".")
    node = cfg
    for part in parts[:-1]:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {key!r}")
    node[parts[-1]] = val


def rng_for(config: ScenarioConfig, seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([config.rng_seed, int(seed)])))


def random_smooth_field(domain, rng: np.random.Generator, components: int | None = None, modes: int = 4) -> np.ndarray:
    """Sum of random low-frequency sinusoids, shape grid + (components,) or grid for scalars."""
    x = domain.coords
    n = domain.dim
    comps = 1 if components is None else components
    out = np.zeros(domain.grid_shape + (comps,))
    for c in range(comps):
        for k in range(1, modes + 1):
            omega = rng.integers(-2, 3, size=n).astype(float)
            phase = rng.uniform(0.0, 2.0 * np.pi)
            amp = rng.normal() / k
            out[..., c] += amp * np.sin(np.pi * (x @ omega) + phase)
    return out[..., 0] if components is None else out


def _random_rotation(rng, n):
    q, r = np.linalg.qr(rng.normal(size=(n, n)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] *= -1
    return q


_SETUP_CACHE: dict = {}


def _setup(config: ScenarioConfig, resolution: int):
    """(domain, exponent) per resolution, reused across seeds so cached diagnostics persist."""
    key = json.dumps([config.domain, config.exponent, resolution], sort_keys=True)
    if key not in _SETUP_CACHE:
        if len(_SETUP_CACHE) > 8:
            _SETUP_CACHE.clear()
        spec = dict(config.domain)
        shape = spec.pop("shape")
        dom = make_domain(shape, resolution, **spec)
        e = config.exponent
        p = build_exponent(e.get("kind", "constant"), e.get("params", {}), dom) if e else None
        _SETUP_CACHE[key] = (dom, p)
    return _SETUP_CACHE[key]


def _domain(config: ScenarioConfig, resolution: int):
    return _setup(config, resolution)[0]


def _exponent(config: ScenarioConfig, domain):
    for dom, p in _SETUP_CACHE.values():
        if dom is domain and p is not None:
            return p
    e = config.exponent
    return build_exponent(e.get("kind", "constant"), e.get("params", {}), domain)


def _sweep(config: ScenarioConfig, *keys):
    lists = []
    for k in keys:
        if k not in config.sweep:
            raise ConfigError(f"{config.subcommand} needs sweep list {k!r}")
        lists.append(sorted(config.sweep[k]))
    return itertools.product(*lists)


def _report_row(rep):
    flag = FLAG_EXACT_ZERO if rep.exact_zero else 0
    return {"h": rep.grid_h, "lhs": rep.lhs_norm, "rhs": rep.rhs_norm, "ratio": rep.ratio}, flag


def run_norm(config):
    rows = []
    for res, seed in _sweep(config, "resolutions", "seeds"):
        dom = _domain(config, res)
        p = _exponent(config, dom)
        f = TensorField(dom, random_smooth_field(dom, rng_for(config, seed)))
        nr = luxemburg_norm(f, p)
        rho = modular(f, p)
        rows.append({"resolution": res, "seed": seed, "h": dom.h, "norm": nr.value, "modular": rho,
                     "modular_at_norm": nr.modular_at_value, "iterations": nr.iterations}, )
    return rows, {}


def _perturbed_motion(config, dom, seed, eps, korn=False):
    rng = rng_for(config, seed)
    n = dom.dim
    if korn:
        a = rng.normal(size=(n, n))
        base = 0.5 * (a - a.T)
    else:
        base = _random_rotation(rng, n)
    smooth = random_smooth_field(dom, rng, n)
    return TensorField(dom, dom.coords @ base.T + eps * smooth)


def run_rigidity(config, korn=False):
    from .rigidity import korn_report, rigidity_report

    rows = []
    fn = korn_report if korn else rigidity_report
    for res, seed, eps in _sweep(config, "resolutions", "seeds", "eps"):
        dom = _domain(config, res)
        p = _exponent(config, dom)
        rep = fn(_perturbed_motion(config, dom, seed, eps, korn), p)
        row, flag = _report_row(rep)
        rows.append({"resolution": res, "seed": seed, "eps": eps, **row, "flag": flag})
    ratios = [r["ratio"] for r in rows if math.isfinite(r["ratio"])]
    return rows, _spread(ratios)


def _spread(ratios):
    if not ratios:
        return {}
    return {"ratio_min": min(ratios), "ratio_max": max(ratios), "ratio_spread": max(ratios) / min(ratios)}


def run_poincare(config):
    from .rigidity import weighted_poincare_report

    rows = []
    for res, seed in _sweep(config, "resolutions", "seeds"):
        dom = _domain(config, res)
        p = _exponent(config, dom)
        f = TensorField(dom, random_smooth_field(dom, rng_for(config, seed)))
        row, flag = _report_row(weighted_poincare_report(f, p))
        rows.append({"resolution": res, "seed": seed, **row, "flag": flag})
    return rows, _spread([r["ratio"] for r in rows if math.isfinite(r["ratio"])])


def run_mixed(config):
    from .rigidity import MixedSplit, mixed_rigidity_decompose

    rows = []
    eps = float(config.field.get("eps", 0.05))
    for res, seed, mu in _sweep(config, "resolutions", "seeds", "mu"):
        dom = _domain(config, res)
        p = _exponent(config, dom)
        u = _perturbed_motion(config, dom, seed, eps)
        rng = rng_for(config, seed + 10**6)
        normal = rng.normal(size=dom.dim)
        side = (dom.coords - 0.5 * (dom.lo + dom.hi)) @ normal > 0
        dist = dist_SO(gradient(u).values)
        split = MixedSplit(TensorField(dom, dist * side), TensorField(dom, dist * ~side), p, p.scaled(mu))
        _, _, _, rep = mixed_rigidity_decompose(u, split, dom, mu)
        flag = FLAG_FAILURE if rep.failed else 0
        rows.append({"resolution": res, "seed": seed, "mu": mu, "h": dom.h, "residual": rep.residual,
                     "ratio_f": rep.ratio_f, "ratio_g": rep.ratio_g, "levels": rep.extra.get("levels", 0), "flag": flag})
    return rows, {}


def run_extend(config):
    from .rigidity import nitsche_extend

    rows = []
    R = float(config.field.get("R", 0.8))
    mu = float(config.field.get("mu", 1.2))
    amp = float(config.field.get("amplitude", 0.1))
    modes = int(config.field.get("modes", 2))
    for res, seed in _sweep(config, "resolutions", "seeds"):
        dom = _domain(config, res)
        p = _exponent(config, dom)
        rng = rng_for(config, seed)
        u = TensorField(dom, amp * random_smooth_field(dom, rng, dom.dim, modes))
        eu = sym_gradient(u).values
        side = dom.coords @ rng.normal(size=dom.dim) > 0
        f = TensorField(dom, eu * side[..., None, None])
        g = TensorField(dom, eu * ~side[..., None, None])
        ext = nitsche_extend(u, f, g, p, p.scaled(mu), R)
        flag = FLAG_FAILURE if ext.residual > 10 * dom.h else 0
        rows.append({"resolution": res, "seed": seed, "h": dom.h, "r": ext.r, "residual": ext.residual,
                     "c_bar": ext.c_bar, "flag": flag})
    return rows, {}


def run_lusin(config):
    from .rigidity import lusin_truncate

    rows = []
    amp = float(config.field.get("amplitude", 0.3))
    modes = int(config.field.get("modes", 4))
    for res, seed, lam in _sweep(config, "resolutions", "seeds", "lambda"):
        dom = _domain(config, res)
        rng = rng_for(config, seed)
        u = TensorField(dom, amp * random_smooth_field(dom, rng, dom.dim, modes))
        mf = maximal_function(TensorField(dom, gradient(u).pointwise_norm()), dom).values
        v, changed, rep = lusin_truncate(u, lam)
        inclusion = bool(np.all(~changed | (mf > lam)))
        flag = 0 if inclusion else FLAG_FAILURE
        rows.append({"resolution": res, "seed": seed, "lambda": lam, "h": dom.h,
                     "lipschitz_constant": rep.lipschitz_constant, "changed": rep.changed_count,
                     "changed_measure": rep.changed_measure, "rhs_iii": rep.rhs_iii,
                     "measure_constant": rep.measure_constant(), "degenerate": rep.degenerate, "flag": flag})
    return rows, {}


def run_gamma(config):
    from .linearize import COLUMNS, EnergySpec, gamma_convergence_experiment, gamma_scenario

    res = sorted(config.sweep.get("resolutions", [33]))
    if len(res) != 1:
        raise ConfigError("gamma runs one resolution at a time")
    base = gamma_scenario(res[0], float(config.field.get("bump", 0.2)), tuple(sorted(config.sweep["eps"], reverse=True)))
    p = _exponent(config, base.domain)
    spec = EnergySpec(base.domain, p, base.h, base.dirichlet_mask, base.density, base.epsilons)
    table = gamma_convergence_experiment(spec, bool(config.field.get("cold_check", True)))
    rows = [{c: r[c] for c in COLUMNS} for r in table.rows]
    meta = {"linear_energy": table.linear_energy, "linear_grad_norm": table.linear_grad_norm,
            "diagnostics": table.diagnostics,
            "compactness_constants": [r["modular"] / r["compactness_rhs"] for r in table.rows]}
    return rows, meta


def run_whitney(config, out: Path | None = None):
    rows, cubes_json = [], {}
    for (res,) in _sweep(config, "resolutions"):
        dom = _domain(config, res)
        cubes = whitney_decomposition(dom)
        n = dom.dim
        ok = all(math.sqrt(n) * c.side < dom.cube_distance(c.lo, c.hi) <= 4 * math.sqrt(n) * c.side for c in cubes)
        over = int(overlap_count(dom, cubes).max())
        cover = bool(coverage_mask(dom, cubes)[dom.inside_mask].all())
        flag = 0 if ok and cover and over <= 4**n else FLAG_FAILURE
        rows.append({"resolution": res, "h": dom.h, "cubes": len(cubes), "max_overlap": over,
                     "covered": int(cover), "predicates": int(ok), "flag": flag})
        cubes_json[str(res)] = [c.to_json() for c in cubes]
    return rows, {"cubes": cubes_json}


def run_maximal(config):
    rows = []
    for res, seed in _sweep(config, "resolutions", "seeds"):
        dom = _domain(config, res)
        p = _exponent(config, dom)
        f = TensorField(dom, random_smooth_field(dom, rng_for(config, seed)))
        loc = maximal_function(f, dom, "local")
        glob = maximal_function(f, dom, "global")
        nf = norm(f, p)
        rows.append({"resolution": res, "seed": seed, "h": dom.h,
                     "ratio_local": norm(loc, p) / nf, "ratio_global": norm(glob, p) / nf,
                     "sup_ratio": float(loc.values.max() / np.abs(f.values[dom.active_mask]).max())})
    return rows, {}


RUNNERS = {
    "norm": run_norm,
    "rigidity": run_rigidity,
    "korn": lambda c: run_rigidity(c, korn=True),
    "poincare": run_poincare,
    "mixed": run_mixed,
    "extend": run_extend,
    "lusin": run_lusin,
    "gamma": run_gamma,
    "whitney": run_whitney,
    "maximal": run_maximal,
}


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def rows_to_csv(rows: list) -> str:
    buf = io.StringIO()
    if not rows:
        return ""
    cols = list(rows[0])
    if "flag" not in cols:
        cols.append("flag")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in rows:
        flag = int(r.get("flag", 0))
        nums = [r[c] for c in cols if c != "flag"]
        bad = any(isinstance(v, float) and not math.isfinite(v) for v in nums)
        if bad and not flag & FLAG_EXACT_ZERO:
            flag |= FLAG_FAILURE
        r["flag"] = flag
        writer.writerow([_cell(r[c]) for c in cols])
    return buf.getvalue()


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    return obj


def run(config: ScenarioConfig, out_dir) -> int:
    """Execute a scenario and write data.csv and meta.json into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from exc
    rows, meta = RUNNERS[config.subcommand](config)
    text = rows_to_csv(rows)
    (out / "data.csv").write_text(text)
    cubes = meta.pop("cubes", None)
    if cubes is not None:
        (out / "whitney.json").write_text(json.dumps(cubes, sort_keys=True))
    failed = sum(1 for r in rows if int(r.get("flag", 0)) & FLAG_FAILURE)
    record = {
        "config": config.to_json(),
        "version": __version__,
        "rng": "numpy PCG64, SeedSequence([rng_seed, seed])",
        "rows": len(rows),
        "failed_rows": failed,
        "fitted": meta,
    }
    (out / "meta.json").write_text(json.dumps(_json_safe(record), indent=2, sort_keys=True))
    return EXIT_FAILURE if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="varexp", description=__doc__.splitlines()[0])
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", help="JSON scenario file")
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                    help="override a config entry, dotted keys allowed (repeatable)")
    ap.add_argument("--out", required=True, help="output directory")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    try:
        user = {}
        if args.config:
            with open(args.config) as fh:
                user = json.load(fh)
            if not isinstance(user, dict):
                raise ConfigError("config must be a JSON object")
        config = ScenarioConfig.build(args.subcommand, user, args.overrides)
        return run(config, args.out)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"varexp: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, TypeError, KeyError) as exc:
        # invalid scenario parameters surface from the library as ValueError
        print(f"varexp: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
