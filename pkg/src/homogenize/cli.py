"""Config-driven experiment harness.

``homogenize run --config exp.json`` validates the config, runs the requested
stages in a fixed order and writes ``<outdir>/<stage>/<name>.{csv,json}`` plus
``<outdir>/manifest.json``.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
import time
from importlib import resources
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import jsonschema
import numpy as np

from . import analysis, estimators, io, pathgen, solvers
from .drivers import center_observable, make_observable, make_system
from .errors import ConfigError, HomogenizeError, StageError

STAGE_ORDER = ("estimate", "paths", "fast", "sde", "compare", "moments", "cohomology")
ESTIMATION_STAGES = ("estimate",)
SEED_STREAMS = {"estimate": 1, "paths": 2, "fast": 3, "corrected": 4, "naive": 5,
                "moments": 6, "cohomology": 7, "centering": 8}

DEFAULTS = {
    "centering": {"n_samples": 1_000_000},
    "slow_system": {"preset": "mcshane"},
    "scaling": {"n": [100, 1000]},
    "ensemble": {"n_paths": 1000, "sde_paths": 1000},
    "horizon": {"T": 1.0},
    "estimate": {"method": "auto", "orbit_len": 1_000_000, "lag_L": None, "taper": False,
                 "t_max": 20.0, "orbit_time": 100_000.0},
    "sde": {"scheme": "ito-euler", "dt": 1e-3},
    "fast": {},
    "moments": {"p": 2, "n": 10_000, "t_grid": [0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0],
                "n_paths": 1000},
    "tolerances": {},
    "output_dir": "homogenize-out",
    "threads": 1,
}

PRESETS = {
    "drivers": ["doubling", "cat", "pomeau-manneville", "lorenz", "suspension"],
    "observables": ["trig", "fourier", "torus_trig", "coordinates", "fiber", "constant", "zero"],
    "slow_systems": ["mcshane", "linear"],
    "stages": list(STAGE_ORDER),
}


def package_version():
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0.0.0"


def load_schema():
    text = resources.files("homogenize").joinpath("schema/config.schema.json").read_text()
    return json.loads(text)


def _dotted(path):
    return ".".join(str(p) for p in path)


def _first_required(schema, key):
    # name the innermost required field, e.g. "seeds.master" for a missing "seeds"
    sub = schema.get("properties", {}).get(key, {})
    req = sub.get("required", [])
    return f"{key}.{_first_required(sub, req[0])}" if len(req) == 1 else key


def _schema_errors(doc):
    schema = load_schema()
    validator = jsonschema.Draft202012Validator(schema)
    out = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        where = _dotted(err.absolute_path)
        pointer = "/".join(map(str, err.absolute_path))
        if err.validator == "required":
            missing = _first_required(err.schema, err.message.split("'")[1])
            out.append(f"{where + '.' if where else ''}{missing} required")
        else:
            out.append(f"{where or '(root)'}: {err.message} (at /{pointer})")
    return out


def _merge(defaults, given):
    out = copy.deepcopy(defaults)
    for k, v in given.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _pm_alpha(driver):
    if driver.get("kind") in ("pomeau-manneville", "pm"):
        return driver.get("alpha")
    if driver.get("kind") == "suspension":
        return _pm_alpha(driver.get("base", {}))
    return None


def _default_centering(cfg, system):
    obs_kind = cfg["observable"]["kind"]
    inner = cfg["observable"].get("base", {}).get("kind") if obs_kind == "fiber" else obs_kind
    base = system.base if system.kind == "suspension" else system
    trig = inner in ("trig", "fourier", "torus_trig", "zero")
    # a non-constant roof reweights the fiber, so Lebesgue-centered lifts are not centered
    flat = system.kind != "suspension" or system.roof.kind == "constant"
    return "analytic" if (trig and base.lebesgue_invariant and flat) else "empirical"


def _alpha_errors(doc):
    driver, stages = doc.get("driver"), doc.get("stages")
    if not isinstance(driver, dict) or not isinstance(stages, list):
        return []
    alpha = _pm_alpha(driver)
    if isinstance(alpha, (int, float)) and alpha >= 0.5 and any(
            s in stages for s in ESTIMATION_STAGES):
        return ["driver.alpha: estimation needs alpha < 1/2; for alpha >= 1/2 the "
                "correlations are not summable and no Green-Kubo estimate exists"]
    return []


def _semantic_errors(cfg):
    errs = _alpha_errors(cfg)
    stages = cfg["stages"]
    try:
        system = make_system(cfg["driver"])
    except HomogenizeError as exc:
        return errs + [f"driver: {exc}"]
    try:
        obs = make_observable(cfg["observable"])
    except (HomogenizeError, KeyError, TypeError, ValueError) as exc:
        return errs + [f"observable: {exc}"]
    try:
        sde = solvers.make_sde(cfg["slow_system"])
    except (HomogenizeError, KeyError, ValueError) as exc:
        sde = None
        errs.append(f"slow_system: {exc}")
    needs_sde = any(s in stages for s in ("fast", "sde", "compare"))
    if sde is not None and needs_sde and sde.e != obs.dim_e:
        errs.append(f"slow_system: noise dimension {sde.e} does not match observable "
                    f"dimension {obs.dim_e}")
    method = cfg["estimate"]["method"]
    if method == "green-kubo-discrete" and not system.is_map:
        errs.append("estimate.method: green-kubo-discrete needs a map driver")
    if method in ("green-kubo-flow", "induced") and not system.is_flow:
        errs.append(f"estimate.method: {method} needs a flow driver")
    if method == "induced" and system.kind != "suspension":
        errs.append("estimate.method: induced needs a suspension driver")
    if "sde" in stages and "estimate" not in stages and not (
            "sigma" in cfg["sde"] and "E" in cfg["sde"]):
        errs.append("sde: sigma and E required when the estimate stage is not run")
    if "compare" in stages:
        for dep in ("fast", "sde"):
            if dep not in stages:
                errs.append(f"stages: compare needs the {dep} stage")
        if len(cfg["scaling"]["n"]) < 2:
            errs.append("scaling.n: compare needs at least two values of n")
    if "cohomology" in stages:
        if "cohomology" not in cfg:
            errs.append("cohomology required when the cohomology stage is run")
        if not system.is_map:
            errs.append("cohomology: needs a map driver")
    if "moments" in stages:
        g = cfg["moments"]["t_grid"]
        if max(g) / min(g) < 10 - 1e-9:
            errs.append("moments.t_grid: must span at least one decade")
    try:
        analysis.Tolerances.from_mapping(cfg["tolerances"])
    except HomogenizeError as exc:
        errs.append(str(exc))
    return errs


def validate_config(doc):
    """Return the resolved config or raise :class:`ConfigError` with every violation."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"(root): invalid JSON: {exc}"]) from None
    errs = _schema_errors(doc)
    if errs:
        raise ConfigError(errs + _alpha_errors(doc))
    cfg = _merge(DEFAULTS, doc)
    if "cohomology" in cfg:
        cfg["cohomology"] = _merge({"n": 1_000_000, "T": 1.0}, cfg["cohomology"])
    errs = _semantic_errors(cfg)
    if errs:
        raise ConfigError(errs)
    system = make_system(cfg["driver"])
    cfg["centering"].setdefault("mode", _default_centering(cfg, system))
    cfg["stages"] = [s for s in STAGE_ORDER if s in cfg["stages"]]
    return cfg


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


class _Run:
    """State shared between stages of one experiment."""

    def __init__(self, cfg, outdir, threads):
        self.cfg = cfg
        self.outdir = Path(outdir)
        self.threads = threads
        self.master = cfg["seeds"]["master"]
        self.tol = analysis.Tolerances.from_mapping(cfg["tolerances"])
        self.system = make_system(cfg["driver"])
        self.files = {}
        self.results = {}
        self._obs = None

    def seed(self, stream):
        return (self.master, SEED_STREAMS[stream])

    @property
    def obs(self):
        if self._obs is None:
            raw = make_observable(self.cfg["observable"])
            c = self.cfg["centering"]
            if "offset" in c:
                raw = raw.with_offset(c["offset"])
            elif c["mode"] == "empirical":
                raw = center_observable(self.system, raw, c["n_samples"], self.seed("centering"))
            self._obs = raw
        return self._obs

    def path(self, stage, name):
        return self.outdir / stage / name

    def record(self, counts):
        for k, v in counts.items():
            self.files[str(Path(k))] = v

    def write_json(self, stage, name, obj):
        p = io.write_json(self.path(stage, f"{name}.json"), obj)
        self.files[str(p)] = None

    def write_csv(self, stage, name, header, rows):
        p = self.path(stage, f"{name}.csv")
        self.files[str(p)] = io.write_csv(p, header, rows)


def _stage_estimate(run):
    c = run.cfg["estimate"]
    sysm, obs, seed = run.system, run.obs, run.seed("estimate")
    method = c["method"]
    if method == "auto":
        method = ("green-kubo-discrete" if sysm.is_map else
                  "induced" if sysm.kind == "suspension" else "green-kubo-flow")
    if method == "green-kubo-discrete":
        stats = estimators.green_kubo_discrete(sysm, obs, c["lag_L"], c["orbit_len"], seed,
                                               taper=c["taper"])
    elif method == "induced":
        stats, induced = estimators.induced_stats(sysm, obs, c["orbit_len"], seed, c["lag_L"],
                                                  taper=c["taper"])
        run.write_json("estimate", "induced", {
            "rbar": induced.rbar, "tilde_sigma": induced.tilde_sigma,
            "tilde_E": induced.tilde_E, "H_term": induced.H_term})
    else:
        stats = estimators.green_kubo_flow(sysm, obs, c["t_max"], c.get("quad_dt"),
                                           c["orbit_time"], seed,
                                           tail_ratio=run.tol.tail_ratio)
    run.results["stats"] = stats
    run.write_json("estimate", "diffusion_stats", stats.to_json())


def _stage_paths(run):
    T = run.cfg["horizon"]["T"]
    R = run.cfg["ensemble"]["n_paths"]
    for n in run.cfg["scaling"]["n"]:
        if run.system.is_map:
            paths = pathgen.discrete_paths(run.system, run.obs, n, T, run.seed("paths"), R,
                                           threads=run.threads)
        else:
            paths = pathgen.flow_paths(run.system, run.obs, n, T, run.seed("paths"), R,
                                       quad_dt=run.cfg["fast"].get("quad_dt"),
                                       threads=run.threads)
        p = run.path("paths", f"paths_n{n}.csv")
        run.files[str(p)] = io.write_paths(p.with_suffix(""), paths)
        if R >= 100 and T >= 1.0:
            mean, se = estimators.ensemble_E(paths)
            run.write_json("paths", f"ensemble_E_n{n}", {"n": n, "n_paths": R, "E": mean,
                                                        "stderr": se})


def _stage_fast(run):
    sde = solvers.make_sde(run.cfg["slow_system"])
    T = run.cfg["horizon"]["T"]
    R = run.cfg["ensemble"]["n_paths"]
    out = {}
    for n in run.cfg["scaling"]["n"]:
        if run.system.is_map:
            ens = solvers.solve_fast_discrete(sde, run.system, run.obs, n, T, run.seed("fast"), R)
        else:
            ens = solvers.solve_fast_flow(sde, run.system, run.obs, n, T, run.seed("fast"), R,
                                          quad_dt=run.cfg["fast"].get("quad_dt"))
        out[n] = ens
        run.record(io.write_trajectories(run.path("fast", f"fast_n{n}"), ens))
    run.results["fast"] = out


def _stats_fingerprint(sigma, E):
    blob = json.dumps({"sigma": np.asarray(sigma).tolist(), "E": np.asarray(E).tolist()},
                      sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _stage_sde(run):
    sde = solvers.make_sde(run.cfg["slow_system"])
    c = run.cfg["sde"]
    if "sigma" in c and "E" in c:
        sigma, E = np.asarray(c["sigma"], float), np.asarray(c["E"], float)
    else:
        stats = run.results["stats"]
        sigma, E = stats.sigma, stats.E
    fp = _stats_fingerprint(sigma, E)
    T, R = run.cfg["horizon"]["T"], run.cfg["ensemble"]["sde_paths"]
    corr = solvers.solve_limit_sde(sde, sigma, E, T, c["dt"], run.seed("corrected"), R,
                                   scheme=c["scheme"])
    naive = solvers.solve_limit_sde(sde, sigma, E, T, c["dt"], run.seed("naive"), R,
                                    scheme="strat-heun", corrected=False)
    run.record(io.write_trajectories(run.path("sde", "corrected"), corr, fp))
    run.record(io.write_trajectories(run.path("sde", "naive"), naive, fp))
    run.results["corrected"], run.results["naive"] = corr, naive


def _stage_compare(run):
    rep = analysis.convergence_report(run.results["fast"], run.results["corrected"],
                                      run.results["naive"], run.tol)
    run.results["report"] = rep
    run.write_json("compare", "report", rep.to_json())
    rows = []
    for i, n in enumerate(rep.ns):
        for k in range(rep.ks_corrected.shape[1]):
            rows.append([n, k + 1, float(rep.ks_corrected[i, k]), float(rep.ks_naive[i, k]),
                         float(rep.crit_05[i]), float(rep.crit_01[i])])
    run.write_csv("compare", "ks", ["n", "coordinate", "ks_corrected", "ks_naive",
                                    "crit_05", "crit_01"], rows)
    run.write_csv("compare", "cdf", ["ensemble", "coordinate", "x", "F"],
                  ([a, k + 1, x, f] for a, k, x, f in rep.cdf_rows()))
    print(rep.to_text())


def _stage_moments(run):
    c = run.cfg["moments"]
    res = analysis.moment_slope(run.system, run.obs, c["p"], c["n"], c["t_grid"],
                                c["n_paths"], run.seed("moments"),
                                quad_dt=run.cfg["fast"].get("quad_dt"), threads=run.threads)
    tol = run.tol

    def verdict(slope, target, name, width):
        if slope is None:
            return {"status": "UNDEFINED", "tolerance": name, "detail": "norms vanish"}
        ok = abs(slope - target) <= width
        return {"status": "PASS" if ok else "FAIL", "tolerance": name,
                "detail": f"slope {slope:.4f} vs {target} +- {width}"}

    run.write_csv("moments", "norms", ["t", "norm_W", "norm_WW"],
                  ([float(t), float(a), float(b)]
                   for t, a, b in zip(res.times, res.norm_W, res.norm_WW)))
    run.write_json("moments", "slopes", {
        "p": c["p"], "n": c["n"], "n_paths": c["n_paths"],
        "slope_W": res.slope_W, "slope_WW": res.slope_WW,
        "verdicts": {"slope_W": verdict(res.slope_W, 0.5, "slope_W", tol.slope_W),
                     "slope_WW": verdict(res.slope_WW, 1.0, "slope_WW", tol.slope_WW)}})


def _stage_cohomology(run):
    c = run.cfg["cohomology"]
    v_hat = make_observable(c["v_hat"])
    chi = make_observable(c["chi"])
    triple = analysis.cohomology_triple(run.system, v_hat, chi.raw)
    res = analysis.cohomology_shift(run.system, triple, c["n"], c["T"], run.seed("cohomology"))
    bound = run.tol.cohomology_factor * c["n"] ** -0.5 * res.spread
    ok = bool(np.all(np.abs(res.observed - res.predicted) <= bound))
    run.write_json("cohomology", "shift", {
        "n": c["n"], "T": c["T"], "observed": res.observed, "predicted": res.predicted,
        "spread": res.spread, "bound": bound,
        "verdict": {"status": "PASS" if ok else "FAIL", "tolerance": "cohomology_factor"}})


STAGES = {"estimate": _stage_estimate, "paths": _stage_paths, "fast": _stage_fast,
          "sde": _stage_sde, "compare": _stage_compare, "moments": _stage_moments,
          "cohomology": _stage_cohomology}


def run_experiment(cfg, output_dir=None, threads=None):
    """Run the stages of a resolved config; returns the manifest mapping.

    A failing stage leaves earlier outputs in place, writes a manifest marked
    ``failed`` and raises :class:`StageError`.
    """
    outdir = Path(output_dir or cfg["output_dir"])
    threads = threads or cfg["threads"]
    run = _Run(cfg, outdir, threads)
    timings, failed, error = [], None, None
    for stage in cfg["stages"]:
        t0 = time.perf_counter()
        try:
            STAGES[stage](run)
        except Exception as exc:  # recorded in the manifest, then re-raised
            failed, error = stage, exc
            timings.append({"stage": stage, "seconds": time.perf_counter() - t0,
                            "status": "failed"})
            break
        timings.append({"stage": stage, "seconds": time.perf_counter() - t0, "status": "ok"})
    manifest = {
        "config_hash": config_hash(cfg),
        "version": package_version(),
        "status": "failed" if failed else "complete",
        "failed_at_stage": failed,
        "error": None if error is None else f"{type(error).__name__}: {error}",
        "stages": timings,
        "tolerances": run.tol.to_json(),
        "files": [{"path": str(Path(p).relative_to(outdir)), "bytes": Path(p).stat().st_size,
                   "rows": io.count_rows(p)} for p in sorted(run.files)],
        "config": cfg,
    }
    if "report" in run.results:
        manifest["comparison_passed"] = run.results["report"].passed
    io.write_json(outdir / "manifest.json", manifest)
    if failed:
        raise StageError(failed, error) from error
    return manifest


def _read_config(path):
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError([f"config: cannot read {path}: {exc}"]) from None


def build_parser():
    parser = argparse.ArgumentParser(prog="homogenize", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("--config", required=True)
    run.add_argument("--output-dir")
    run.add_argument("--threads", type=int)
    run.add_argument("--stages", help="comma-separated stage list overriding the config")
    val = sub.add_parser("validate", help="validate a config and print the resolved form")
    val.add_argument("--config", required=True)
    sub.add_parser("presets", help="list built-in drivers, observables and slow systems")
    sub.add_parser("schema", help="print the config JSON schema")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        print(json.dumps(PRESETS, indent=2))
        return 0
    if args.command == "schema":
        print(json.dumps(load_schema(), indent=2))
        return 0
    try:
        doc = json.loads(_read_config(args.config))
        if getattr(args, "stages", None):
            doc["stages"] = [s.strip() for s in args.stages.split(",") if s.strip()]
        cfg = validate_config(doc)
    except json.JSONDecodeError as exc:
        print(f"config: invalid JSON: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        for e in exc.errors:
            print(e, file=sys.stderr)
        return 1
    if args.command == "validate":
        print(json.dumps(cfg, indent=2, sort_keys=True))
        return 0
    if args.threads is not None and args.threads < 1:
        print("threads: must be >= 1", file=sys.stderr)
        return 1
    try:
        manifest = run_experiment(cfg, args.output_dir, args.threads)
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"output: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {len(manifest['files'])} files to {args.output_dir or cfg['output_dir']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
