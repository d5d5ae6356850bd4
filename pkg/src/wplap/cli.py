"""Command-line front end: ``wplap {solve,oscillation,sharpness,cz-sweep}``.

Exit codes: 0 success, 2 input/output failure, 3 invalid configuration,
4 numerical failure. Failures print a JSON error document to stderr and,
when an output directory is known, write it to ``error.json`` there.
"""

import argparse
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import io as wio
from .analysis import (corner_exact, cz_ratio, datum_sweep, hypothesis_tag, linearity_fit,
                       threshold_fit, weight_bmo_estimate)
from .errors import ArtifactIOError, ConfigError, WplapError
from .geometry import corner_domain
from .matrixweight import PowerField, QuadratureSpec
from .mesh import mesh_generate
from .oscillation import BallSampler, bmo_seminorm, cmp_quantities, muckenhoupt_constant
from .solver import DiscreteVectorField, SolveConfig, solve

log = logging.getLogger("wplap")

EXIT = {"ok": 0, "io": 2, "config": 3, "numeric": 4}


@dataclass
class RunConfig:
    command: str
    config: dict
    out: Path
    seed: int = 0
    threads: int = 1
    format: str = "csv"
    base: Path = field(default_factory=Path.cwd)

    @property
    def provenance(self):
        return wio.provenance(self.config, self.seed)

    def path(self, p):
        """Resolve a path from the config relative to the config file."""
        p = Path(p)
        return p if p.is_absolute() else self.base / p


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None, help="run seed (overrides config)")
    common.add_argument("--threads", type=int, default=1, help="worker threads (recorded)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("-v", "--verbose", action="store_true")

    p = _Parser(prog="wplap", description="Weighted p-Laplace numerical laboratory")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("solve", parents=[common], help="solve one Dirichlet problem")
    sub.add_parser("oscillation", parents=[common], help="log-BMO / A_p / CMP estimates")
    s = sub.add_parser("sharpness", parents=[common], help="corner threshold fit")
    s.add_argument("--epsilon", type=float, default=None)
    s.add_argument("--q-grid", default=None, help="'a..b', 'a..b:step' or 'q1,q2,...'")
    sub.add_parser("cz-sweep", parents=[common], help="gradient-ratio sweep")
    return p


def parse_q_grid(text):
    text = str(text).strip()
    try:
        if ".." in text:
            lo, rest = text.split("..", 1)
            hi, _, step = rest.partition(":")
            lo, hi, step = float(lo), float(hi), float(step or 1.0)
            if step <= 0 or hi < lo:
                raise ValueError("empty range")
            return list(np.round(np.arange(lo, hi + step / 2, step), 12))
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad q grid {text!r}: {exc}") from None


# ---------------------------------------------------------------- commands

def cmd_solve(run):
    cfg = run.config
    mesh_spec = wio._need(cfg, "mesh", "solve")
    if isinstance(mesh_spec, str):
        mesh_spec = str(run.path(mesh_spec))
    mesh = wio.load_mesh(mesh_spec)
    weight = wio.load_weight(cfg.get("weight", {"family": "identity"}))
    datum = dict(cfg.get("F", {"type": "bubble"}))
    if "csv" in datum:
        datum["csv"] = str(run.path(datum["csv"]))
    F = wio.load_datum(datum, mesh, run.seed)
    try:
        sc = SolveConfig(**cfg.get("solver", {}))
    except TypeError as exc:
        raise ConfigError(f"bad solver settings: {exc}") from None
    u, report = solve(mesh, weight, F, sc)
    prov = run.provenance
    out = [
        wio.write(run.out / "u.csv", wio.nodal_csv(u, prov)),
        wio.write(run.out / "grad_u.csv", wio.element_csv(mesh.gradient(u.values), prov)),
        wio.write(run.out / "report.json",
                  wio.json_text({"report": report.to_dict(), "n_nodes": mesh.n_nodes,
                                 "n_triangles": mesh.n_triangles}, prov)),
    ]
    print(f"solved p={sc.p}: {mesh.n_nodes} nodes, residual {report.final_residual:.3e}")
    return out


def _region(spec):
    if spec is None:
        return (-1.0, 1.0, -1.0, 1.0)
    if isinstance(spec, (list, tuple)):
        if len(spec) != 4:
            raise ConfigError("box region needs [x0, x1, y0, y1]")
        return tuple(map(float, spec))
    return wio.load_domain(spec)


def cmd_oscillation(run):
    cfg = run.config
    weight = wio.load_weight(wio._need(cfg, "weight", "oscillation"))
    region = _region(cfg.get("region"))
    domain = None if isinstance(region, tuple) else region
    quad = QuadratureSpec(cells=int(cfg.get("cells", 64)), domain=domain)
    sampler = BallSampler(region, float(cfg.get("max_radius", 1.0)),
                          levels=int(cfg.get("levels", 6)), grid=int(cfg.get("grid", 17)),
                          n_random=int(cfg.get("n_random", 256)), seed=run.seed, quad=quad,
                          centers=cfg.get("centers"))
    quantities = cfg.get("quantities", ["log_bmo", "muckenhoupt"])
    # on a domain, balls poking outside are evaluated both clipped to the domain
    # and on the full disk (weights are defined on the plane)
    variants = [(sampler, "")]
    if domain is not None:
        full = replace(quad, clip=False)
        variants.append((replace(sampler, quad=full), "_unclipped"))
    reports = []
    for smp, suffix in variants:
        found = []
        for q in quantities:
            if q == "log_bmo":
                found.append(bmo_seminorm(weight, smp))
            elif q == "muckenhoupt":
                found.append(muckenhoupt_constant(weight.scalar_weight(),
                                                  float(cfg.get("p", 2.0)), smp))
            elif q == "cmp":
                found.extend(cmp_quantities(weight.squared(), smp))
            else:
                raise ConfigError(f"unknown quantity {q!r}")
        for r in found:
            r.quantity += suffix
        reports += found
    prov = run.provenance
    if run.format == "json":
        doc = {"weight": weight.metadata(), "reports": [r.to_dict() for r in reports]}
        files = [wio.write(run.out / "oscillation.json", wio.json_text(doc, prov))]
    else:
        summary = [r.summary_row() for r in reports]
        balls = [{"quantity": r.quantity, "cx": c[0], "cy": c[1], "radius": rad, "value": v,
                  "clipped": int(cl)}
                 for r in reports
                 for c, rad, v, cl in zip(r.centers, r.radii, r.values, r.clipped)]
        files = [
            wio.write(run.out / "oscillation_summary.csv",
                      wio.csv_text(summary, ["quantity", "sup", "count", "seed"], prov)),
            wio.write(run.out / "oscillation_balls.csv",
                      wio.csv_text(balls, ["quantity", "cx", "cy", "radius", "value", "clipped"],
                                   prov)),
        ]
    for r in reports:
        print(f"{r.quantity}: sup {r.sup:.6g} over {r.count} balls")
    return files


def cmd_sharpness(run, epsilon=None, q_grid=None):
    cfg = run.config
    eps = epsilon if epsilon is not None else cfg.get("epsilon", 1.0)
    grid = q_grid if q_grid is not None else cfg.get("q_grid", "3..30")
    grid = parse_q_grid(grid) if isinstance(grid, str) else [float(q) for q in grid]
    lo, hi = cfg.get("levels", [4, 12])
    epsilons = cfg.get("epsilons") if epsilon is None else None
    fits = [threshold_fit(e, grid, range(int(lo), int(hi) + 1))
            for e in (epsilons or [eps])]
    prov = run.provenance
    rows = [r for f in fits for r in f.rows]
    doc = {"fits": [f.to_dict() for f in fits]}
    if len(fits) >= 2 and not any(f.inconclusive for f in fits):
        slope, r2 = linearity_fit(fits)
        doc["linearity"] = {"slope": slope, "r2": r2, "expected_slope": 1 / np.pi}
    cols = ["epsilon", "q", "annulus_k", "norm", "classification"]
    if run.format == "json":
        doc["table"] = rows
        files = [wio.write(run.out / "threshold.json", wio.json_text(doc, prov))]
    else:
        files = [wio.write(run.out / "threshold.csv", wio.csv_text(rows, cols, prov)),
                 wio.write(run.out / "threshold_summary.json", wio.json_text(doc, prov))]
    for f in fits:
        est = "inconclusive" if f.inconclusive else f"{f.q_hat:.4f}"
        print(f"epsilon={f.epsilon:g}: q_hat={est} (analytic {f.analytic_q:.4f})")
    return files


def cmd_cz_sweep(run):
    cfg = run.config
    weps = [float(e) for e in cfg.get("weight_eps", [0.05])]
    beps = [float(e) for e in cfg.get("boundary_eps", [0.05])]
    qs = [float(q) for q in cfg.get("q", [4.0])]
    hs = [float(h) for h in cfg.get("h", [0.1, 0.05])]
    nseeds = cfg.get("seeds", 20)
    seeds = list(range(nseeds)) if isinstance(nseeds, int) else [int(s) for s in nseeds]
    seeds = [run.seed * 1_000_003 + s for s in seeds]
    delta = float(cfg.get("delta", 0.25))
    try:
        sc = SolveConfig(**cfg.get("solver", {"p": 2.0}))
    except TypeError as exc:
        raise ConfigError(f"bad solver settings: {exc}") from None
    modes, freq = int(cfg.get("modes", 6)), float(cfg.get("max_frequency", 6.0))

    rows, summary = [], []
    for be in beps:
        dom = corner_domain(be)
        meshes = {h: mesh_generate(dom, h, cfg.get("grading"), (0.0, 0.0)) for h in hs}
        for we in weps:
            M = PowerField(we)
            om = M.scalar_weight()
            bmo = weight_bmo_estimate(M, dom)
            for q in qs:
                tag = hypothesis_tag(bmo, dom.delta, q, delta)
                sups = []
                for h in hs:
                    mesh = meshes[h]
                    ratios = datum_sweep(mesh, M, seeds, sc,
                                         lambda u, F: cz_ratio(u, F, om, q), modes, freq)
                    base = dict(weight_eps=we, boundary_eps=be, q=q, h=h, hypothesis=tag,
                                n_nodes=mesh.n_nodes)
                    rows += [dict(base, seed=s, ratio=float(r)) for s, r in zip(seeds, ratios)]
                    # self-test: the datum is the gradient of the computed solution
                    F0 = DiscreteVectorField.from_function(mesh, corner_exact(be).grad)
                    u0, _ = solve(mesh, M, F0, sc)
                    rows.append(dict(base, seed="self-test",
                                     ratio=cz_ratio(u0, u0.gradient(), om, q)))
                    sups.append(float(np.max(ratios)))
                change = abs(sups[-1] - sups[0]) / sups[0] if len(sups) > 1 else 0.0
                summary.append(dict(weight_eps=we, boundary_eps=be, q=q, hypothesis=tag,
                                    weight_bmo=bmo, sup_by_h=dict(zip(map(str, hs), sups)),
                                    refinement_change=change))
    prov = run.provenance
    cols = ["weight_eps", "boundary_eps", "q", "h", "seed", "ratio", "hypothesis", "n_nodes"]
    if run.format == "json":
        files = [wio.write(run.out / "cz_sweep.json",
                           wio.json_text({"rows": rows, "summary": summary}, prov))]
    else:
        files = [wio.write(run.out / "cz_sweep.csv", wio.csv_text(rows, cols, prov)),
                 wio.write(run.out / "cz_summary.json", wio.json_text({"summary": summary}, prov))]
    for s in summary:
        print(f"weight_eps={s['weight_eps']:g} boundary_eps={s['boundary_eps']:g} q={s['q']:g}: "
              f"hypothesis={s['hypothesis']} sup={s['sup_by_h']} change={s['refinement_change']:.3f}")
    return files


COMMANDS = {"solve": cmd_solve, "oscillation": cmd_oscillation, "sharpness": cmd_sharpness,
            "cz-sweep": cmd_cz_sweep}


def _error_doc(exc, kind):
    return {"error": {"kind": kind, "type": type(exc).__name__, "message": str(exc)},
            "exit_code": EXIT[kind]}


def _kind(exc):
    if isinstance(exc, (ArtifactIOError, FileNotFoundError, PermissionError)):
        return "io"
    if isinstance(exc, WplapError):
        return exc.kind
    if isinstance(exc, (ValueError, TypeError, KeyError)):
        return "config"
    if isinstance(exc, OSError):
        return "io"
    return "numeric"


def main(argv=None):
    out = None
    try:
        args = _parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
        out = Path(args.out)
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.config:
            cfg = wio.load_json(args.config)
            base = Path(args.config).resolve().parent
        else:
            cfg, base = {}, Path.cwd()
        if not isinstance(cfg, dict):
            raise ConfigError("configuration must be a JSON object")
        seed = args.seed if args.seed is not None else int(cfg.get("seed", 0))
        if seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        run = RunConfig(args.command, cfg, out, seed, args.threads, args.format, base)
        if args.command == "sharpness":
            cmd_sharpness(run, args.epsilon, args.q_grid)
        else:
            COMMANDS[args.command](run)
        return 0
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:  # noqa: BLE001 - every failure becomes an error document
        kind = _kind(exc)
        doc = _error_doc(exc, kind)
        text = json.dumps(doc, indent=1)
        print(text, file=sys.stderr)
        if out is not None:
            try:
                out.mkdir(parents=True, exist_ok=True)
                (out / "error.json").write_text(text + "\n")
            except OSError:
                pass
        return EXIT[kind]


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
