"""Command-line interface: approximate, simulate, fit, gof, stats.

Every command writes its outputs plus ``manifest.json`` into ``--out``.
Exit codes: 0 ok, 2 usage or parse error, 3 invalid geometry or model,
4 repair failure, 5 non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .approximation import (
    ApproxConfig,
    GeometryError,
    RepairError,
    approximate,
    read_geojson,
    write_report_csv,
)
from .geometry import UNIT_SQUARE, PolygonGeom, elongation
from .model import GibbsModel
from .sampler import ChainConfig, run_parallel
from .statistics import feature_vector, parse_specs
from .tessellation import TTess, validate

log = logging.getLogger("ttess")

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_REPAIR, EXIT_NOCONV = 0, 2, 3, 4, 5


class UsageError(Exception):
    pass


class InputError(Exception):
    pass


# ----------------------------------------------------------------------
# helpers


def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    try:
        if p.suffix.lower() == ".toml":
            try:
                import tomllib
            except ModuleNotFoundError:
                import tomli as tomllib
            return tomllib.loads(text)
        return json.loads(text)
    except Exception as e:
        raise UsageError(f"cannot parse config {path}: {e}") from e


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as e:
        raise UsageError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise UsageError(f"{path}: invalid JSON ({e})") from e


def load_model(path) -> GibbsModel:
    data = _read_json(path)
    try:
        return GibbsModel.from_dict(data)
    except (ValueError, KeyError, TypeError) as e:
        raise InputError(f"{path}: invalid model ({e})") from e


def load_tessellation(path) -> TTess:
    data = _read_json(path)
    try:
        t = TTess.from_dict(data)
    except (ValueError, KeyError, TypeError, IndexError) as e:
        raise InputError(f"{path}: invalid tessellation ({e})") from e
    bad = validate(t)
    if bad:
        v = bad[0]
        raise InputError(f"{path}: not a T-tessellation ({v.rule}: {v.element}, {v.detail})")
    return t


def load_window(path) -> PolygonGeom:
    if path is None:
        return UNIT_SQUARE
    data = _read_json(path)
    rings = data.get("window") if isinstance(data, dict) else data
    try:
        return PolygonGeom.from_rings(rings[0], rings[1:])
    except (ValueError, TypeError, IndexError) as e:
        raise InputError(f"{path}: invalid window ({e})") from e


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_json(path: Path, data) -> None:
    _atomic_write(path, json.dumps(data, indent=1, sort_keys=False) + "\n")


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


class Run:
    """Collects outputs and writes the manifest at the end of a command."""

    def __init__(self, args, command: str, config: dict):
        self.args = args
        self.command = command
        self.config = config
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.inputs: list[str] = []
        self.start = time.time()

    def path(self, name: str) -> Path:
        self.outputs.append(name)
        return self.out / name

    def finish(self, status: int, extra: dict | None = None) -> int:
        flags = {k: v for k, v in vars(self.args).items() if k != "func"}
        manifest = {
            "command": self.command,
            "tool_version": __version__,
            "seed": self.args.seed,
            "flags": flags,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "exit_status": status,
            "duration_seconds": round(time.time() - self.start, 3),
        }
        if extra:
            manifest.update(extra)
        write_json(self.out / "manifest.json", manifest)
        return status


def chain_from(args, cfg: dict, default_samples: int | None = None) -> ChainConfig:
    c = dict(cfg.get("chain", {}))
    for key in ("n_steps", "burn_in", "thin"):
        v = getattr(args, key, None)
        if v is not None:
            c[key] = v
    n = getattr(args, "n_samples", None)
    if n is None and "n_steps" not in c:
        n = default_samples
    if n is not None:
        burn = c.get("burn_in", ChainConfig.burn_in)
        c["n_steps"] = burn + n * c.get("thin", 1)
    if "burn_in" not in c and "n_steps" in c:
        c["burn_in"] = min(ChainConfig.burn_in, c["n_steps"])
    c["seed"] = args.seed
    c.pop("mode", None)
    try:
        return ChainConfig(**c)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid chain settings: {e}") from e


def _plot(fn, *a):
    # figures are a convenience; a plotting failure must not lose the data outputs
    try:
        fn(*a)
    except Exception as e:  # pragma: no cover
        log.warning("figure not written: %s", e)


# ----------------------------------------------------------------------
# commands


def cmd_approximate(args, cfg) -> int:
    from .plotting import plot_approximation, plot_cell_distributions

    r = Run(args, "approximate", cfg)
    r.inputs.append(str(args.geojson))
    try:
        acfg = ApproxConfig.from_dict(cfg.get("approximation", {}))
    except (TypeError, ValueError) as e:
        raise UsageError(str(e)) from e
    try:
        l = read_geojson(args.geojson)
    except GeometryError:
        raise
    except (OSError, ValueError) as e:
        raise UsageError(str(e)) from e
    t, report = approximate(l, acfg)
    _atomic_write(r.path("tessellation.json"), t.to_json({"source": Path(args.geojson).name}) + "\n")
    write_report_csv(report, r.path("report.csv"))
    _plot(plot_approximation, l, t, r.path("approximation.png"))
    _plot(plot_cell_distributions, report.input_cells, report.output_cells, r.path("distributions.png"))
    log.info("approximation: %d cells, %d segments", len(t.cells), len(t.segments))
    return r.finish(EXIT_OK, {"counts": report.counts})


def cmd_simulate(args, cfg) -> int:
    from .plotting import plot_feature_traces, plot_tessellation

    r = Run(args, "simulate", cfg)
    r.inputs.append(str(args.model))
    m = load_model(args.model)
    if args.theta_zero:
        m = GibbsModel(m.specs, np.zeros(m.dim), 0.0)
    window = load_window(args.window)
    chain = chain_from(args, cfg, default_samples=1)
    sets = run_parallel(m, window, chain, args.chains, threads=args.threads)
    rows = []
    idx = 0
    for c, s in enumerate(sets):
        for t, f in zip(s.tessellations, s.features):
            meta = {"seed": args.seed, "chain": c, "model": m.to_dict()}
            _atomic_write(r.path(f"sample_{idx:04d}.json"), t.to_json(meta) + "\n")
            rows.append([idx, *[repr(float(x)) for x in f], repr(float(f @ m.theta))])
            idx += 1
    labels = [s.label for s in m.specs]
    write_csv(r.path("samples.csv"), ["index", *labels, "energy"], rows)
    feats = np.vstack([s.features for s in sets])
    _plot(plot_feature_traces, feats, labels, r.path("traces.png"))
    _plot(plot_tessellation, sets[0].last, r.path("last_sample.png"), "last retained state")
    acc = {k: float(np.mean([s.acceptance[k] for s in sets])) for k in sets[0].acceptance}
    log.info("simulate: %d samples, acceptance %s", idx, acc)
    return r.finish(EXIT_OK, {"chain": chain.to_dict(), "acceptance": acc})


def cmd_fit(args, cfg) -> int:
    from .inference import MCMLConfig, fit
    from .plotting import plot_fit

    r = Run(args, "fit", cfg)
    r.inputs += [str(args.model), str(args.observed)]
    m = load_model(args.model)
    obs = load_tessellation(args.observed)
    mc = dict(cfg.get("mcml", {}))
    if args.psi0 is not None:
        mc["psi0"] = args.psi0
    mc.setdefault("psi0", m.theta.tolist())
    if len(mc["psi0"]) != m.dim:
        raise UsageError(f"psi0 has {len(mc['psi0'])} entries for {m.dim} statistics")
    for key in ("sample_size", "max_outer_iterations"):
        v = getattr(args, key)
        if v is not None:
            mc[key] = v
    chain = chain_from(args, cfg)
    mc["burn_in"] = chain.burn_in
    mc["chain"] = chain
    mc["seed"] = args.seed
    mc["psi0"] = tuple(mc["psi0"])
    try:
        mcfg = MCMLConfig(**mc)
    except (TypeError, ValueError) as e:
        raise UsageError(f"invalid fit settings: {e}") from e
    res = fit(m, obs, mcfg, log=log.info)
    out = res.to_dict()
    out["line_intensity"] = m.line_intensity
    write_json(r.path("fit.json"), out)
    header = ["iteration", *[f"psi_{k + 1}" for k in range(m.dim)], "mcl"]
    rows = [[k, *[repr(float(x)) for x in p], repr(v)] for k, (p, _, v) in enumerate(res.outer_trace)]
    write_csv(r.path("trace.csv"), header, rows)
    _plot(plot_fit, res, r.path("fit.png"))
    status = EXIT_OK if res.converged else EXIT_NOCONV
    if not res.converged:
        log.warning("fit did not converge in %d outer iterations", len(res.outer_trace))
    return r.finish(status, {"converged": res.converged})


def cmd_gof(args, cfg) -> int:
    from .gof import default_r_grid, envelope_test
    from .plotting import plot_envelope

    r = Run(args, "gof", cfg)
    r.inputs += [str(args.model), str(args.observed)]
    m = load_model(args.model)
    if args.fit is not None:
        r.inputs.append(str(args.fit))
        fitted = _read_json(args.fit)
        try:
            m = m.with_theta(fitted["theta_hat"])
        except (KeyError, ValueError) as e:
            raise InputError(f"{args.fit}: no usable theta_hat ({e})") from e
    obs = load_tessellation(args.observed)
    g = cfg.get("gof", {})
    n_total = args.m if args.m is not None else int(g.get("m", 500))
    if n_total < 2:
        raise UsageError("m must be at least 2")
    n_r = int(g.get("n_r", 50))
    r_grid = default_r_grid(obs.window, n_r)
    if "r_max" in g:
        r_grid = float(g["r_max"]) * np.arange(1, n_r + 1) / n_r
    chain = chain_from(args, cfg)
    res = envelope_test(obs, m, n_total, chain, r_grid, threads=args.threads, grid_size=int(g.get("grid_size", 256)))
    rows = [
        [repr(float(a)), repr(float(b)), repr(float(c)), repr(float(d)), repr(float(e))]
        for a, b, c, d, e in zip(r_grid, res.f_obs.values, res.f_ref.values, res.lower, res.upper)
    ]
    write_csv(r.path("envelope.csv"), ["r", "f_obs", "f_ref", "lower", "upper"], rows)
    summary = res.summary()
    summary["chain"] = chain.to_dict()
    summary["theta"] = m.theta.tolist()
    write_json(r.path("envelope.json"), summary)
    _plot(plot_envelope, res, r.path("envelope.png"))
    log.info(
        "gof: X_obs=%.4g max X_i=%.4g p=%.3g band equivalence holds", res.mad_obs, res.half_width, res.p_value
    )
    return r.finish(EXIT_OK, {"p_value": res.p_value})


def cmd_stats(args, cfg) -> int:
    from .plotting import plot_cell_histograms
    from .statistics import FeatureSpec, raw_statistic

    r = Run(args, "stats", cfg)
    r.inputs.append(str(args.tessellation))
    t = load_tessellation(args.tessellation)
    rows = []
    for cid, c in sorted(t.cells.items()):
        ring = [t.points[v] for v in c.boundary]
        rows.append(
            {"cell": cid, "area": c.area, "perimeter": c.perimeter, "n_vertices": len(ring), "elongation": elongation(ring)}
        )
    write_csv(
        r.path("cells.csv"),
        ["cell", "area", "perimeter", "n_vertices", "elongation"],
        [[d["cell"], repr(d["area"]), repr(d["perimeter"]), d["n_vertices"], repr(d["elongation"])] for d in rows],
    )
    specs = parse_specs(cfg.get("statistics", ["n_cells", "sum_sq_areas", "angle_acute", "n_long_cells", "n_segments"]))
    stats = {s.label: raw_statistic(FeatureSpec(s.name, s.l0), t) for s in specs}
    out = {"statistics": stats}
    if args.model is not None:
        m = load_model(args.model)
        out["features"] = dict(zip([s.label for s in m.specs], feature_vector(m.specs, t).tolist()))
    write_json(r.path("stats.json"), out)
    _plot(plot_cell_histograms, rows, r.path("cells.png"))
    return r.finish(EXIT_OK)


# ----------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    common.add_argument("--config", help="TOML or JSON file with option sections")
    common.add_argument("--threads", type=int, default=1, help="parallel chains")
    common.add_argument("--quiet", action="store_true")
    common.add_argument("--out", default=".", help="output directory")

    chain = argparse.ArgumentParser(add_help=False)
    chain.add_argument("--n-steps", dest="n_steps", type=int)
    chain.add_argument("--burn-in", dest="burn_in", type=int)
    chain.add_argument("--thin", type=int)

    p = argparse.ArgumentParser(prog="ttess", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"ttess {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("approximate", parents=[common], help="GeoJSON landscape to T-tessellation")
    a.add_argument("geojson")
    a.set_defaults(func=cmd_approximate)

    s = sub.add_parser("simulate", parents=[common, chain], help="sample a Gibbs model")
    s.add_argument("model")
    s.add_argument("--window", help="JSON with a 'window' ring list (default unit square)")
    s.add_argument("--n-samples", dest="n_samples", type=int)
    s.add_argument("--chains", type=int, default=1)
    s.add_argument("--theta-zero", action="store_true", help="ignore theta (completely random model)")
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", parents=[common, chain], help="Monte Carlo maximum likelihood")
    f.add_argument("model")
    f.add_argument("observed")
    f.add_argument("--psi0", type=float, nargs="+")
    f.add_argument("--sample-size", dest="sample_size", type=int)
    f.add_argument("--max-outer", dest="max_outer_iterations", type=int)
    f.set_defaults(func=cmd_fit)

    g = sub.add_parser("gof", parents=[common, chain], help="envelope test on the empty-space function")
    g.add_argument("model")
    g.add_argument("observed")
    g.add_argument("--fit", help="fit.json whose theta_hat replaces the model theta")
    g.add_argument("--m", type=int, help="number of simulations plus one (default 500)")
    g.set_defaults(func=cmd_gof)

    st = sub.add_parser("stats", parents=[common], help="per-cell table and statistics")
    st.add_argument("tessellation")
    st.add_argument("--model")
    st.set_defaults(func=cmd_stats)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s"
    )
    try:
        cfg = load_config(args.config)
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
        return args.func(args, cfg)
    except UsageError as e:
        log.error("%s", e)
        return EXIT_USAGE
    except (InputError, GeometryError) as e:
        log.error("%s", e)
        return EXIT_INPUT
    except RepairError as e:
        log.error("repair failed: %s", e)
        return EXIT_REPAIR


if __name__ == "__main__":
    sys.exit(main())
