"""``gritkit`` command line.

Exit codes: 0 success, 1 a check failed, 2 usage error. Data goes to files and
stdout; diagnostics go to stderr. Every command that writes files finishes with
a ``manifest.json`` describing the run.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
import time
from pathlib import Path

from gritkit import __version__
from gritkit.encodings import matrix_to_csv, rrwp, rwse
from gritkit.gdwl import compare
from gritkit.gradchecks import check_block, check_ops
from gritkit.graph import Graph, GraphError, from_edge_list, from_json, named_graph
from gritkit.presets import PRESETS, get_preset
from gritkit.propcheck import (
    DEFAULT_FIXTURE,
    NormFixture,
    PropagationCoeffs,
    check_adjacency,
    check_layernorm,
    check_propagation,
    check_spd,
)
from gritkit.synth import SynthConfig, canonical_kind, default_corpus, run_suite

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- helpers ------------------------------------------------------------------------------

def positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be at least 1, got {v}")
    return v


def int_list(text: str) -> list[int]:
    try:
        vals = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or any(v < 1 for v in vals):
        raise argparse.ArgumentTypeError("need one or more positive integers")
    return vals


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def load_graph(source: str) -> tuple[Graph, str]:
    """A named graph, or a path to a ``.json`` graph or an edge list."""
    path = Path(source)
    if path.is_file():
        text = path.read_text()
        g = from_json(text) if path.suffix == ".json" else from_edge_list(text)
        return g, path.name
    try:
        return named_graph(source), source
    except GraphError:
        raise UsageError(f"{source!r} is neither a readable file nor a known graph name") from None


def graph_from_args(args) -> tuple[Graph, str]:
    sources = [s for s in (args.named, args.graph) if s]
    if len(sources) != 1:
        raise UsageError("give exactly one of --named or --graph")
    return load_graph(sources[0])


def add_graph_source(p: argparse.ArgumentParser) -> None:
    p.add_argument("--named", help="named graph, e.g. path3, c6, dodecahedron")
    p.add_argument("--graph", help="edge-list file (or .json graph)")


class Run:
    """Collects outputs and writes the manifest last."""

    def __init__(self, command: str, out: Path | None, seed, config: dict) -> None:
        self.command = command
        self.out = out
        self.seed = seed
        self.config = config
        self.outputs: list[str] = []
        self.t0 = time.perf_counter()
        self.started = time.strftime("%Y-%m-%dT%H:%M:%S%z")

    def write(self, rel: str, text: str) -> None:
        if self.out is None:
            return
        write_atomic(self.out / rel, text)
        self.outputs.append(rel)

    def finish(self) -> None:
        if self.out is None:
            return
        manifest = {
            "command": self.command,
            "version": __version__,
            "seed": self.seed,
            "config": self.config,
            "outputs": self.outputs,
            "timing": {"started": self.started,
                       "elapsed_s": round(time.perf_counter() - self.t0, 6)},
        }
        write_atomic(self.out / "manifest.json", dump_json(manifest))


def _out(args) -> Path | None:
    return Path(args.out) if args.out else None


# -- commands -----------------------------------------------------------------------------

def cmd_rrwp(args) -> int:
    g, name = graph_from_args(args)
    out = _out(args) or Path("out/rrwp")
    run = Run("rrwp", out, None, {"graph": name, "K": args.K, "mode": args.mode})
    p = rrwp(g, args.K, args.mode)
    for k in range(args.K):
        run.write(f"slice{k}.csv", matrix_to_csv(p.slice(k)))
    run.write("rwse.csv", matrix_to_csv(rwse(p)))
    run.finish()
    print(dump_json({"graph": name, "n": g.n, "K": args.K, "mode": args.mode,
                     "out": str(out)}), end="")
    return EXIT_OK


def cmd_gdwl(args) -> int:
    g1, n1 = load_graph(args.g1)
    g2, n2 = load_graph(args.g2)
    kind = args.dist.replace("-", "_")
    if kind == "rrwp" and args.K is None:
        raise UsageError("--dist rrwp needs --K")
    verdict = compare(g1, g2, kind, args.K)
    verdict.update({"g1": n1, "g2": n2, "dist": args.dist})
    run = Run("gdwl", _out(args), None, {"g1": n1, "g2": n2, "dist": args.dist, "K": args.K})
    run.write("verdict.json", dump_json(verdict))
    run.finish()
    print(dump_json(verdict), end="")
    return EXIT_OK


def _coeffs(args, n: int) -> PropagationCoeffs:
    preset = args.preset.replace("-", "_")
    K = args.K
    if preset == "mean_agg":
        return PropagationCoeffs.mean_agg(K or 2)
    if preset == "ppr":
        return PropagationCoeffs.ppr(args.alpha, K or n)
    if preset == "heat":
        return PropagationCoeffs.heat(args.tau, K or n)
    if preset == "custom":
        if not args.thetas:
            raise UsageError("--preset custom needs --thetas")
        try:
            thetas = [float(t) for t in args.thetas.split(",")]
        except ValueError:
            raise UsageError(f"bad --thetas {args.thetas!r}") from None
        return PropagationCoeffs.custom(thetas)
    raise UsageError(f"unknown preset {args.preset!r}")


def _fixture(source: str) -> NormFixture:
    if source == "default":
        return DEFAULT_FIXTURE
    try:
        obj = json.loads(Path(source).read_text())
        return NormFixture(obj["x_mean"], obj["degrees"])
    except (OSError, ValueError, KeyError) as exc:
        raise UsageError(f"cannot read fixture {source!r}: {exc}") from None


def cmd_propcheck(args) -> int:
    if args.which == "layernorm":
        report = check_layernorm(_fixture(args.fixture), name=args.fixture)
        cfg = {"which": "layernorm", "fixture": args.fixture}
    else:
        g, name = graph_from_args(args)
        if args.which == "a":
            report = check_spd(g, args.K or g.n, name)
        elif args.which == "b":
            report = check_propagation(g, _coeffs(args, g.n), name)
        else:
            report = check_adjacency(g, args.K or 2, args.theta0, args.theta1, name)
        cfg = {"which": args.which, "graph": name, "K": args.K, "preset": args.preset,
               "alpha": args.alpha, "tau": args.tau, "theta0": args.theta0, "theta1": args.theta1}
    run = Run("propcheck", _out(args), None, cfg)
    run.write(f"propcheck_{args.which}.json", dump_json(report))
    run.finish()
    print(dump_json(report), end="")
    return EXIT_OK if report["pass"] else EXIT_FAIL


def _table_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["kind", "k", "mae_mean", "mae_sd", "r2_mean", "r2_sd"])
    for r in rows:
        w.writerow([r.kind, r.k] + [format(v, ".17g") for v in (r.mae_mean, r.mae_sd, r.r2_mean, r.r2_sd)])
    return buf.getvalue()


def cmd_synth(args) -> int:
    try:
        kinds = [canonical_kind(k.strip()) for k in args.kinds.split(",") if k.strip()]
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if not kinds:
        raise UsageError("--kinds is empty")
    corpus_seed = args.seed if args.corpus_seed is None else args.corpus_seed
    graphs = default_corpus(args.graphs, corpus_seed)
    base = SynthConfig(kinds[0], 1, args.epochs, args.lr, args.seed, args.K_rrwp, args.hidden)
    rows = run_suite(graphs, args.k, kinds, base, args.workers)
    out = _out(args) or Path("out/synth")
    config = {"kinds": kinds, "k": args.k, "graphs": args.graphs, "epochs": args.epochs,
              "lr": args.lr, "K_rrwp": args.K_rrwp, "hidden": args.hidden,
              "corpus_seed": corpus_seed}
    run = Run("synth", out, args.seed, config)
    results = {
        "corpus": [{"n": g.n, "edges": g.num_edges} for g in graphs],
        "rows": [{
            "kind": r.kind, "k": r.k, "mae_mean": r.mae_mean, "mae_sd": r.mae_sd,
            "r2_mean": r.r2_mean, "r2_sd": r.r2_sd,
            "per_graph": [{"mae": res.mae, "r2": res.r2, "final_loss": res.final_loss,
                           "diverged": res.diverged} for res in r.per_graph],
        } for r in rows],
    }
    run.write("results.json", dump_json(results))
    run.write("table.csv", _table_csv(rows))
    for r in rows:
        for i, res in enumerate(r.per_graph):
            run.write(f"alpha/{r.kind}_k{r.k}_g{i}.csv", matrix_to_csv(res.alpha))
    run.finish()
    sys.stdout.write(_table_csv(rows))
    diverged = [(r.kind, r.k) for r in rows if any(res.diverged for res in r.per_graph)]
    if diverged:
        print(f"diverged runs: {diverged}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    if args.scope == "ops":
        reports = check_ops(args.seed)
        body = {name: r.as_dict() for name, r in reports.items()}
        ok = all(r.passed for r in reports.values())
    else:
        r = check_block(args.seed)
        body = {"block": r.as_dict()}
        ok = r.passed
    report = {"scope": args.scope, "seed": args.seed, "pass": ok, "checks": body}
    run = Run("gradcheck", _out(args), args.seed, {"scope": args.scope})
    run.write(f"gradcheck_{args.scope}.json", dump_json(report))
    run.finish()
    print(dump_json(report), end="")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_presets(args) -> int:
    if args.name:
        try:
            body = get_preset(args.name).as_dict()
        except KeyError as exc:
            raise UsageError(exc.args[0]) from None
    else:
        body = {k: p.as_dict() for k, p in PRESETS.items()}
    print(dump_json(body), end="")
    return EXIT_OK


# -- parser -------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gritkit", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rrwp", help="write RRWP slices as CSV")
    add_graph_source(p)
    p.add_argument("--K", type=positive_int, required=True)
    p.add_argument("--mode", choices=("float64", "exact_rational"), default="float64")
    p.add_argument("--out", help="output directory (default out/rrwp)")
    p.set_defaults(func=cmd_rrwp)

    p = sub.add_parser("gdwl", help="GD-WL verdict for two graphs")
    p.add_argument("--g1", required=True)
    p.add_argument("--g2", required=True)
    p.add_argument("--dist", choices=("spd", "rrwp", "rrwp-full", "rrwp_full"), default="spd")
    p.add_argument("--K", type=positive_int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gdwl)

    p = sub.add_parser("propcheck", help="exact constructive checks")
    p.add_argument("which", choices=("a", "b", "c", "layernorm"))
    add_graph_source(p)
    p.add_argument("--K", type=positive_int)
    p.add_argument("--preset", default="mean-agg",
                   choices=("mean-agg", "mean_agg", "ppr", "heat", "custom"))
    p.add_argument("--alpha", type=float, default=0.15)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--thetas", help="comma-separated coefficients for --preset custom")
    p.add_argument("--theta0", type=float, default=0)
    p.add_argument("--theta1", type=float, default=1)
    p.add_argument("--fixture", default="default", help="'default' or a JSON file with x_mean, degrees")
    p.add_argument("--out")
    p.set_defaults(func=cmd_propcheck)

    p = sub.add_parser("synth", help="synthetic k-hop attention experiment")
    p.add_argument("--kinds", default="grit,spd-bias,rwse,meanpool")
    p.add_argument("--k", type=int_list, default=[1, 2, 3])
    p.add_argument("--graphs", type=positive_int, default=5)
    p.add_argument("--epochs", type=positive_int, default=2000)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--corpus-seed", type=int, help="defaults to --seed")
    p.add_argument("--K-rrwp", dest="K_rrwp", type=positive_int, default=SynthConfig.K_rrwp)
    p.add_argument("--hidden", type=positive_int, default=SynthConfig.hidden)
    p.add_argument("--workers", type=positive_int, help="defaults to GRIT_KIT_THREADS or CPU count")
    p.add_argument("--out", help="output directory (default out/synth)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference gradient checks")
    p.add_argument("scope", choices=("ops", "block"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("presets", help="print published full-scale configs")
    p.add_argument("name", nargs="?")
    p.set_defaults(func=cmd_presets)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        print(f"gritkit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
