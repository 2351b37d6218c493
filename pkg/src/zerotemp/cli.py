"""Command-line driver: parameter sweeps that emit CSV or JSON-lines data.

Every command resolves its configuration from ``defaults.json``, then an
optional ``--config`` JSON file, then explicit flags, and embeds the result
in the output header.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from . import cavity_general as cg
from . import cavity_q2 as q2
from .popdyn import PopDynConfig, popdyn_run
from .sbm_graph import generate, read_graph, run_max_product, score, write_graph

OK = "ok"
UNDEFINED = "undefined"  # the quantity does not exist at this point; not a failure
ERROR = "error"


@dataclass
class SweepResult:
    name: str
    columns: list[str]
    rows: list[list] = field(default_factory=list)

    def add(self, *values):
        if len(values) != len(self.columns):
            raise ValueError(f"{self.name}: expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(list(values))

    def records(self) -> list[dict]:
        return [dict(zip(self.columns, r)) for r in self.rows]

    @property
    def failed(self) -> bool:
        if "status" not in self.columns:
            return False
        i = self.columns.index("status")
        return any(str(r[i]).startswith(ERROR) for r in self.rows)


def artifact_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def load_defaults() -> dict:
    return json.loads(resources.files("zerotemp").joinpath("defaults.json").read_text())


def parse_grid(spec) -> list[float]:
    """``"a:b:n"`` -> n evenly spaced points, ``"x,y,z"`` -> list, number -> [number]."""
    if isinstance(spec, (int, float)):
        return [float(spec)]
    if isinstance(spec, (list, tuple)):
        return [float(x) for x in spec]
    spec = str(spec).strip()
    if not spec:
        return []
    if ":" in spec:
        a, b, n = spec.split(":")
        return [float(x) for x in np.linspace(float(a), float(b), int(n))]
    return [float(x) for x in spec.split(",")]


def _fmt(v):
    if isinstance(v, np.generic):
        v = v.item()
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if v is None:
        return "nan"
    return str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, np.generic):
        return v.item()
    return v


def render(result: SweepResult, meta: dict, fmt: str) -> str:
    """CSV with ``#`` metadata lines, or JSON-lines whose first line is the metadata."""
    buf = io.StringIO()
    if fmt == "csv":
        for key, value in meta.items():
            buf.write(f"# {key}: {json.dumps(value, sort_keys=True)}\n")
        writer = csv.writer(buf, lineterminator="\r\n")
        writer.writerow(result.columns)
        for row in result.rows:
            writer.writerow([_fmt(v) for v in row])
    elif fmt == "jsonl":
        buf.write(json.dumps({"meta": meta}, sort_keys=True) + "\n")
        for rec in result.records():
            buf.write(json.dumps({k: _json_value(v) for k, v in rec.items()}) + "\n")
    else:
        raise ValueError(f"unknown format {fmt!r}")
    return buf.getvalue()


def read_table(text: str, fmt: str) -> tuple[dict, list[dict]]:
    """Parse output written by :func:`render`; values come back as floats where numeric."""
    if fmt == "jsonl":
        lines = [json.loads(x) for x in text.splitlines() if x.strip()]
        return lines[0]["meta"], lines[1:]
    meta, body = {}, []
    for line in text.splitlines(keepends=True):
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            meta[key] = json.loads(value)
        else:
            body.append(line)
    rows = list(csv.DictReader(io.StringIO("".join(body))))

    def conv(v):
        try:
            return float(v)
        except ValueError:
            return v
    return meta, [{k: conv(v) for k, v in r.items()} for r in rows]


def _map(fn, items, workers: int):
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))  # map preserves grid order
    return [fn(x) for x in items]


# --- commands -----------------------------------------------------------------


def _thresholds_q2_row(c: float):
    dt = q2.threshold_tiebreak(c)
    try:
        dn = q2.threshold_no_tiebreak(c)
        status = OK
    except q2.NoDetectablePhase:
        dn, status = math.nan, UNDEFINED + ":no_tiebreak"
    s = math.sqrt(c)
    return [c, dn, dt, dn / s, dt / s, 1.0, math.sqrt(math.pi / 2), status]


def cmd_thresholds_q2(cfg: dict) -> list[SweepResult]:
    res = SweepResult("thresholds_q2", ["c", "delta_c_no_tiebreak", "delta_c_tiebreak",
                                        "ratio_no_tiebreak", "ratio_tiebreak", "ref_true",
                                        "ref_asymptote", "status"])
    for row in _map(_thresholds_q2_row, parse_grid(cfg["grid"]), cfg.get("workers", 1)):
        res.add(*row)
    return [res]


def _params(cfg: dict, **over) -> cg.ModelParams:
    def scalar(key, default):
        v = cfg.get(key, default)
        return default if isinstance(v, (list, tuple)) or v is None else float(v)

    vals = dict(q=int(cfg["q"]), c=float(cfg["c"]), delta=scalar("delta", 0.0),
                rho=scalar("rho", 0.0), beta=scalar("beta", 1.0),
                beta_mode=cfg.get("beta_mode", "normalized"))
    vals.update(over)
    return cg.ModelParams(**vals)


def _thresholds(params: cg.ModelParams) -> tuple[float, float, float, bool, str]:
    try:
        d2 = cg.delta_c2(params)
    except cg.NoThreshold:
        d2 = math.nan
    try:
        t = cg.delta_c1(params)
    except Exception as exc:  # solver failure is a row status, not a crash
        return math.nan, math.nan, d2, False, f"{ERROR}:{type(exc).__name__}"
    if t is None:
        return math.nan, math.nan, d2, False, UNDEFINED
    status = OK if math.isfinite(d2) else UNDEFINED + ":delta_c2"
    return t.delta, t.eta2, d2, t.continuous, status


def _phase_row(args):
    cfg, delta, d1, d2 = args
    try:
        p = _params(cfg, delta=delta)
        fps = cg.solve_fixed_points(p)
        e_rand = cg.selected_accuracy(p)
        e_acc = cg.selected_accuracy(p, accurate=True)
        status = OK
    except Exception as exc:
        return [delta, 0, "", "", math.nan, math.nan, d1, d2, f"{ERROR}:{type(exc).__name__}"]
    roots = ";".join(repr(f.value) for f in fps)
    stable = ";".join("1" if f.stable else "0" for f in fps)
    return [delta, len(fps), roots, stable, e_rand, e_acc, d1, d2, status]


def cmd_phase_q(cfg: dict) -> list[SweepResult]:
    base = _params(cfg)
    d1, _, d2, _, _ = _thresholds(base.replace(delta=0.0, rho=0.0, beta=1.0))
    res = SweepResult("phase_q", ["delta", "n_roots", "roots", "stable", "eta_random",
                                  "eta_accurate", "delta_c1", "delta_c2", "status"])
    deltas = [d for d in parse_grid(cfg["grid"]) if d <= base.c]
    for row in _map(_phase_row, [(cfg, d, d1, d2) for d in deltas], cfg.get("workers", 1)):
        res.add(*row)
    out = [res]
    g_deltas = parse_grid(cfg.get("g_delta") or [])
    if g_deltas:
        gt = SweepResult("g", ["delta", "eta", "g", "g_minus_eta"])
        etas = np.linspace(1.0 / base.q, 1.0, int(cfg.get("g_points", 181)))
        for d in g_deltas:
            vals = cg.g(base.replace(delta=d), etas)
            for e, v in zip(etas, vals):
                gt.add(d, float(e), float(v), float(v - e))
        out.append(gt)
    return out


def _vs_q_row(args):
    cfg, q = args
    p = _params(cfg, q=int(q), delta=0.0, rho=0.0, beta=1.0)
    d1, eta2, d2, continuous, status = _thresholds(p)
    return [int(q), d1, eta2, d2, math.sqrt(p.c), continuous, status]


def cmd_thresholds_vs_q(cfg: dict) -> list[SweepResult]:
    cfg = dict(cfg, q=2)
    qs = [int(round(x)) for x in parse_grid(cfg["grid"])]
    res = SweepResult("thresholds_vs_q", ["q", "delta_c1", "eta2", "delta_c2", "sqrt_c",
                                          "continuous", "delta_c2_nondecreasing", "status"])
    prev = -math.inf
    for row in _map(_vs_q_row, [(cfg, q) for q in qs], cfg.get("workers", 1)):
        d2 = row[3]
        row.insert(6, bool(d2 >= prev))
        prev = d2 if math.isfinite(d2) else prev
        res.add(*row)
    return [res]


def _selected(args):
    cfg, delta, rho = args
    try:
        return cg.selected_accuracy(_params(cfg, delta=delta, rho=rho)), OK
    except Exception as exc:
        return math.nan, f"{ERROR}:{type(exc).__name__}"


def cmd_semisupervised(cfg: dict) -> list[SweepResult]:
    workers = cfg.get("workers", 1)
    deltas = parse_grid(cfg["delta"])
    rhos = parse_grid(cfg["grid"])
    vs_rho = SweepResult("vs_rho", ["delta", "rho", "eta", "status"])
    jobs = [(cfg, d, r) for d in deltas for r in rhos]
    for (c_, d, r), (eta, st) in zip(jobs, _map(_selected, jobs, workers)):
        vs_rho.add(d, r, eta, st)

    vs_delta = SweepResult("vs_delta", ["rho", "delta", "eta", "status"])
    jobs = [(cfg, d, r) for r in parse_grid(cfg["rho"]) for d in parse_grid(cfg["delta_grid"])]
    for (c_, d, r), (eta, st) in zip(jobs, _map(_selected, jobs, workers)):
        vs_delta.add(r, d, eta, st)

    crit = SweepResult("rho_critical", ["delta", "rho_critical", "eta_below", "eta_above", "jump",
                                        "status"])
    for d in deltas:
        rc = cg.rho_critical(_params(cfg, delta=d, rho=0.0))
        if rc is None:
            crit.add(d, math.nan, math.nan, math.nan, 0.0, UNDEFINED + ":continuous")
        else:
            crit.add(d, rc.rho, rc.eta_below, rc.eta_above, rc.jump, OK)
    return [vs_rho, vs_delta, crit]


def _nearest_stable(params: cg.ModelParams, x: float) -> float:
    stable = [f.value for f in cg.solve_fixed_points(params) if f.stable]
    return min(stable, key=lambda r: abs(r - x)) if stable else math.nan


def cmd_popdyn(cfg: dict) -> list[SweepResult]:
    p = _params(cfg)
    conf = PopDynConfig(sweeps=int(cfg["sweeps"]), burn_in=int(cfg["burn_in"]),
                        seed=int(cfg["seed"]), pool_size=int(cfg["pool_size"]))
    run = popdyn_run(conf, p, float(cfg["init_eta"]))
    series = SweepResult("popdyn", ["sweep", "eta"])
    for i, e in enumerate(run.eta):
        series.add(i, float(e))
    ref = _nearest_stable(p, run.mean)
    z = (run.mean - ref) / run.stderr if run.stderr > 0 else math.nan
    summary = SweepResult("summary", ["mean", "stderr", "analytic_nearest_stable", "z", "status"])
    summary.add(run.mean, run.stderr, ref, z, OK)
    return [series, summary]


def _graph_sim_row(args):
    cfg, seed = args
    p = _params(cfg)
    try:
        graph = read_graph(cfg["graph"]) if cfg.get("graph") else generate(p, int(cfg["n"]), seed)
        res = run_max_product(graph, init=cfg["init"], planted_fraction=float(cfg["planted_fraction"]),
                              seed=seed, max_sweeps=int(cfg["max_sweeps"]))
        rep = score(graph, res.labels)
    except Exception as exc:
        return [seed, 0, 0, False, 0, math.nan, math.nan, math.nan, 0, f"{ERROR}:{type(exc).__name__}"]
    return [seed, graph.n, graph.n_edges, res.converged, res.sweeps, rep.raw_agreement,
            rep.permuted_agreement, rep.normalized_overlap, rep.hamiltonian_energy, OK]


def cmd_graph_sim(cfg: dict) -> list[SweepResult]:
    seeds = [int(s) for s in (cfg["seeds"] if "seeds" in cfg else [cfg["seed"]])]
    res = SweepResult("graph_sim", ["seed", "n", "edges", "converged", "sweeps", "raw_agreement",
                                    "permuted_agreement", "normalized_overlap",
                                    "hamiltonian_energy", "status"])
    for row in _map(_graph_sim_row, [(cfg, s) for s in seeds], cfg.get("workers", 1)):
        res.add(*row)
    p = _params(cfg)
    ref = SweepResult("analytic", ["eta_stable_max", "status"])
    stable = [f.value for f in cg.solve_fixed_points(p) if f.stable]
    ref.add(max(stable) if stable else math.nan, OK)
    return [res, ref]


def cmd_graph_gen(cfg: dict) -> list[SweepResult]:
    p = _params(cfg)
    graph = generate(p, int(cfg["n"]), int(cfg["seed"]))
    path = cfg.get("graph_out") or "graph.txt"
    write_graph(graph, path)
    res = SweepResult("graph_gen", ["path", "n", "edges", "mean_degree", "revealed", "status"])
    res.add(str(path), graph.n, graph.n_edges, float(2 * graph.n_edges / graph.n),
            int(graph.revealed.sum()), OK)
    return [res]


COMMANDS = {
    "thresholds-q2": cmd_thresholds_q2,
    "phase-q": cmd_phase_q,
    "thresholds-vs-q": cmd_thresholds_vs_q,
    "semisupervised": cmd_semisupervised,
    "popdyn": cmd_popdyn,
    "graph-sim": cmd_graph_sim,
    "graph-gen": cmd_graph_gen,
}

# flag name -> config key; list-valued keys accept comma lists
_FLAGS = {
    "q": int, "c": float, "delta": str, "rho": str, "beta": float, "beta_mode": str,
    "grid": str, "seed": int, "seeds": str, "n": int, "init": str, "planted_fraction": float,
    "max_sweeps": int, "pool_size": int, "sweeps": int, "burn_in": int, "init_eta": float,
    "g_delta": str, "g_points": int, "delta_grid": str, "graph": str, "graph_out": str,
}
_LIST_KEYS = {"seeds", "g_delta"}
_MULTI_KEYS = {"semisupervised": {"delta", "rho"}}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zerotemp", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="JSON file overriding defaults")
        sp.add_argument("--out", type=Path, help="output path (default: stdout)")
        sp.add_argument("--format", choices=("csv", "jsonl"), default=None)
        sp.add_argument("--workers", type=int, default=None)
        for flag, typ in _FLAGS.items():
            sp.add_argument("--" + flag.replace("_", "-"), dest=flag, type=typ, default=None)
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    defaults = load_defaults()
    cfg = dict(defaults.get(command, {}))
    if args.config:
        user = json.loads(Path(args.config).read_text())
        cfg.update(user.get(command, user) if isinstance(user, dict) else {})
    for key in _FLAGS:
        val = getattr(args, key, None)
        if val is None:
            continue
        if key in _LIST_KEYS or key in _MULTI_KEYS.get(command, ()):
            val = parse_grid(val)
        elif key in ("delta", "rho"):
            val = float(val)
        cfg[key] = val
    cfg["format"] = args.format or cfg.get("format", "csv")
    cfg["workers"] = args.workers or cfg.get("workers", 1)
    cfg["solver"] = defaults["solver"]
    return cfg


def _extra_path(out: Path, name: str) -> Path:
    return out.with_name(f"{out.stem}.{name}{out.suffix}")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    cfg = resolve_config(args.command, args)
    started = time.time()
    results = COMMANDS[args.command](cfg)
    meta = {
        "command": args.command,
        "config": {k: v for k, v in cfg.items() if k != "solver"},
        "solver": cfg["solver"],
        "version": artifact_version(),
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime(started)),
        "wall_clock_s": round(time.time() - started, 3),
    }
    fmt = cfg["format"]
    for i, res in enumerate(results):
        text = render(res, dict(meta, table=res.name), fmt)
        if args.out is None:
            sys.stdout.write(text)
        else:
            path = args.out if i == 0 else _extra_path(args.out, res.name)
            path.write_text(text)
    return 1 if any(r.failed for r in results) else 0


if __name__ == "__main__":
    raise SystemExit(main())
