"""Command-line interface.

Subcommands: build, train, solve, bench, diagnose, inspect, replay.
Every command that writes files also writes a manifest JSON recording
the exact argument vector; ``rbmlogic replay manifest.json`` reruns the
command, reproducing the output files byte for byte (all sampling is
seeded PCG64, and floats are serialized via repr so they round-trip).

Exit codes: 0 on success, 1 when a solve verdict is wrong or a benchmark
finds nothing, 2 on usage or input errors.

Environment: RBMLOGIC_OUTDIR prefixes relative output paths;
RBMLOGIC_THREADS is exported to the BLAS thread-count variables early.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import re
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .exact import (
    convergence_bound,
    delta_bound,
    delta_exact,
    exact_joint_distribution,
    exact_visible_distribution,
    l1_distance,
    propagate_distribution,
    tv_distance,
)
from .merge import MergedModel, Netlist, compose
from .model import Rbm
from .sampler import integrated_autocorrelation_time, run_chain, success_curve
from .synthesis import (
    DEFAULT_SHARPNESS,
    build_adder,
    build_multiplier,
    builtin_model,
    multiplier_width,
)
from .tasks import SolveSettings, TaskSpec, public_terminals, random_task, solve
from .training import TrainConfig, train


def _out_path(raw: str) -> Path:
    base = os.environ.get("RBMLOGIC_OUTDIR", "")
    path = Path(raw)
    return Path(base) / path if base and not path.is_absolute() else path


def _sidecar(path: Path) -> Path:
    return path.with_name(path.stem + ".terminals.json")


def save_model(model, path: Path) -> list[Path]:
    """Write a model JSON; merged models get a terminals sidecar."""
    path.parent.mkdir(parents=True, exist_ok=True)
    written = [path]
    if isinstance(model, MergedModel):
        model.rbm.save(path)
        side = _sidecar(path)
        side.write_text(json.dumps({
            "terminal_map": {k: int(v) for k, v in sorted(model.terminal_map.items())},
            "constants": {k: int(v) for k, v in sorted(model.constants.items())},
            "exports": sorted(model.exported_terminals),
        }, indent=1, sort_keys=True) + "\n")
        written.append(side)
    else:
        model.save(path)
    return written


def load_model(path: str):
    """Read a model JSON, upgrading to MergedModel if a sidecar exists."""
    path = Path(path)
    rbm = Rbm.load(path)
    side = _sidecar(path)
    if side.exists():
        info = json.loads(side.read_text())
        return MergedModel(rbm, {k: int(v) for k, v in info["terminal_map"].items()},
                           {k: int(v) for k, v in info.get("constants", {}).items()})
    return rbm


def _resolve_component(spec: str, sharpness: float):
    if spec.endswith(".json") or os.path.sep in spec or os.path.exists(spec):
        return load_model(spec)
    return builtin_model(spec, sharpness)


def _write_manifest(command: str, argv: list[str], outputs: list[Path],
                    primary: Path) -> Path:
    manifest = primary / "manifest.json" if primary.is_dir() else \
        primary.with_name(primary.stem + ".manifest.json")
    manifest.write_text(json.dumps({
        "argv": list(argv),
        "command": command,
        "outputs": [str(p) for p in outputs],
        "version": __version__,
    }, indent=1, sort_keys=True) + "\n")
    return manifest


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    def cell(x):
        if x is None:
            return ""
        if isinstance(x, float):
            return repr(x)
        return str(x)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([cell(x) for x in row])


def _parse_clamp_items(items: list[str]) -> dict[str, int]:
    out = {}
    for item in items or []:
        name, _, value = item.partition("=")
        if not _ or not value.lstrip("-").isdigit():
            raise ValueError(f"bad clamp {item!r}; expected NAME=INTEGER")
        out[name] = int(value)
    return out


def cmd_build(args, argv) -> int:
    out = _out_path(args.output)
    spec = args.spec
    if spec.endswith(".json") and os.path.exists(spec) and not args.base:
        raw = json.loads(Path(spec).read_text())
        if "components" in raw:
            netlist = Netlist(
                components=[(c["id"], _resolve_component(c["model"], args.sharpness))
                            for c in raw["components"]],
                connections=[tuple(pair) for pair in raw["connections"]],
                exports=dict(raw.get("exports", {})),
            )
            model = compose(netlist)
        else:
            model = load_model(spec)
    elif args.base:
        m = re.fullmatch(r"(adder|mult|fa)(\d+)", spec)
        if not m:
            raise ValueError(f"--base only applies to adder<n>/mult<n>, got {spec!r}")
        kind, width = m.group(1), int(m.group(2))
        base = _resolve_component(args.base, args.sharpness)
        if kind == "mult":
            model = build_multiplier(width, base, builtin_model("adder1", args.sharpness))
        else:
            model = build_adder(width, base)
    else:
        model = builtin_model(spec, args.sharpness)
    outputs = save_model(model, out)
    rbm = model.rbm if isinstance(model, MergedModel) else model
    consts = len(model.constants) if isinstance(model, MergedModel) else 0
    _write_manifest("build", argv, outputs, out)
    print(f"built {spec}: {rbm.n_visible} visible, {rbm.n_hidden} hidden, "
          f"{len(public_terminals(model))} exported terminals, {consts} constants")
    print(f"wrote {' '.join(str(p) for p in outputs)}")
    return 0


def cmd_train(args, argv) -> int:
    overrides = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.cap is not None:
        overrides["dataset_cap"] = args.cap
    config = TrainConfig(**overrides)
    model, metrics = train(args.task, args.hidden, config)
    out = _out_path(args.output)
    outputs = save_model(model, out)
    if args.metrics:
        mpath = _out_path(args.metrics)
        _write_csv(mpath, ["stage", "k", "epoch", "recon_error", "accuracy"],
                   [[m["stage"], m["k"], m["epoch"], m["recon_error"], m["accuracy"]]
                    for m in metrics])
        outputs.append(mpath)
    _write_manifest("train", argv, outputs, out)
    final = [m["accuracy"] for m in metrics if m["accuracy"] is not None]
    print(f"trained {args.task}: best accuracy {max(final):.3f} over {len(final)} stages")
    print(f"wrote {' '.join(str(p) for p in outputs)}")
    return 0


def cmd_solve(args, argv) -> int:
    model = load_model(args.model)
    clamps = _parse_clamp_items(args.clamp)
    cout = None if args.cout is None else (
        "free" if args.cout == "free" else int(args.cout))
    task = TaskSpec(args.op, None, clamps, expected=args.expected, cout=cout)
    settings = SolveSettings(n_chains=args.chains, n_sweeps=args.sweeps,
                             burn_in=args.burn_in, thin=args.thin,
                             seed=args.seed, top_k=args.top_k)
    result = solve(model, task, settings)
    outputs = []
    if args.hist:
        hpath = _out_path(args.hist)
        rows = [[op, value] for op, value in sorted(result.operands.items())]
        _write_csv(hpath, ["operand", "value"], rows)
        tpath = hpath.with_name(hpath.stem + ".top.csv")
        _write_csv(tpath, ["assignment", "count"],
                   [[json.dumps(a, sort_keys=True), c] for a, c in result.top])
        outputs += [hpath, tpath]
        _write_manifest("solve", argv, outputs, hpath)
    answer = ", ".join(f"{k}={v}" for k, v in sorted(result.operands.items()))
    print(f"mode: {answer} (frequency {result.frequency:.3f}, "
          f"{result.count}/{result.total} samples)")
    if result.factor_pairs is not None:
        shown = ", ".join(f"{a}x{b}:{c}" for (a, b), c in result.factor_pairs[:args.top_k])
        print(f"nontrivial factor pairs: {shown or 'none found'}")
    if args.expected is not None:
        expected_ok = _expected_matches(result, args.expected)
        print(f"expected {args.expected}: {'match' if expected_ok else 'MISMATCH'}")
    print("verdict:", "consistent" if result.success else "INCONSISTENT")
    return 0 if result.success else 1


def _expected_matches(result, expected: int) -> bool:
    op = result.task.operation
    if op == "add":
        s_bits = sum(1 for name in result.terminals if name != "Cout")
        total = result.operands.get("S", 0) + (result.operands.get("Cout", 0) << s_bits)
        return total == expected
    key = {"subtract": "A", "multiply": "P", "divide": "B"}.get(op)
    return key is not None and result.operands.get(key) == expected


def cmd_bench(args, argv) -> int:
    cfg = json.loads(Path(args.config).read_text())
    model = _resolve_component(cfg["model"], cfg.get("sharpness", DEFAULT_SHARPNESS))
    rng = np.random.default_rng(int(cfg.get("seed", 0)))
    from .tasks import model_interface

    width = model_interface(model).width
    tasks = [random_task(cfg["operation"], width, rng)
             for _ in range(int(cfg.get("count", 10)))]
    checkpoints = [int(c) for c in cfg.get("checkpoints", [100, 1000, 10000])]
    curve = success_curve(model, tasks, checkpoints,
                          n_chains=int(cfg.get("chains", 4)),
                          seed=int(cfg.get("seed", 0)),
                          burn_in=int(cfg.get("burn_in", 0)))
    outdir = _out_path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    curve_path = outdir / "success_curve.csv"
    _write_csv(curve_path, ["pooled_samples", "success_fraction"],
               [[c, f] for c, f in curve])
    tasks_path = outdir / "tasks.json"
    tasks_path.write_text(json.dumps(
        [{"operation": t.operation, "clamps": t.clamps, "expected": t.expected}
         for t in tasks], indent=1, sort_keys=True) + "\n")
    _write_manifest("bench", argv, [curve_path, tasks_path], outdir)
    for c, f in curve:
        print(f"{c:>10} samples: {f:.2f} solved")
    return 0 if curve and curve[-1][1] > 0 else 1


def cmd_diagnose(args, argv) -> int:
    model = load_model(args.model)
    clamp = _parse_clamp_items(args.clamp)
    outdir = _out_path(args.output)
    outdir.mkdir(parents=True, exist_ok=True)
    outputs = []
    report: dict = {"model": args.model, "clamp": clamp}

    rbm = model.rbm if isinstance(model, MergedModel) else model
    report["n_visible"] = rbm.n_visible
    report["n_hidden"] = rbm.n_hidden
    report["delta_bound"] = delta_bound(model)

    n_free = rbm.n_visible - len(clamp) - (
        len(model.constants) if isinstance(model, MergedModel) else 0)
    exact_ok = n_free + rbm.n_hidden <= args.max_joint
    if exact_ok:
        delta = delta_exact(model, clamp, max_joint=args.max_joint)
        report["delta_exact"] = delta
        pi, _ = exact_joint_distribution(model, clamp, max_joint=args.max_joint)
        pi = pi.reshape(-1)
        mu = np.zeros_like(pi)
        mu[0] = 1.0
        initial_l1 = l1_distance(mu, pi)
        rows = []
        for n in range(args.steps + 1):
            rows.append([n, tv_distance(mu, pi),
                         convergence_bound(delta, initial_l1, n)])
            mu = propagate_distribution(model, mu, 1, clamp,
                                        max_joint=args.max_joint)
        bound_path = outdir / "bound.csv"
        _write_csv(bound_path, ["sweep", "tv_observed", "tv_bound"], rows)
        outputs.append(bound_path)
        dist = exact_visible_distribution(model, clamp)
        dist_path = outdir / "distribution.csv"
        _write_csv(dist_path, ["index", *dist.names, "probability"],
                   [[i, *map(int, dist.support[i]), float(p)]
                    for i, p in enumerate(dist.probabilities)])
        outputs.append(dist_path)
        report["tv_after_steps"] = rows[-1][1]
    else:
        report["note"] = (f"{n_free} free + {rbm.n_hidden} hidden units exceed "
                          f"--max-joint {args.max_joint}; exact curves skipped")

    trace, _ = run_chain(model, clamp, n_sweeps=args.sample_sweeps, seed=args.seed)
    tau = integrated_autocorrelation_time(trace.free_energy)
    report["free_energy_iact"] = tau
    fe_path = outdir / "free_energy.csv"
    _write_csv(fe_path, ["sweep", "free_energy"],
               [[t, float(f)] for t, f in enumerate(trace.free_energy)])
    outputs.append(fe_path)

    report_path = outdir / "diagnose.json"
    report_path.write_text(json.dumps(report, indent=1, sort_keys=True) + "\n")
    outputs.append(report_path)
    _write_manifest("diagnose", argv, outputs, outdir)
    for key in ("delta_exact", "delta_bound", "free_energy_iact", "tv_after_steps", "note"):
        if key in report:
            print(f"{key}: {report[key]}")
    return 0


def cmd_inspect(args, argv) -> int:
    model = load_model(args.model)
    rbm = model.rbm if isinstance(model, MergedModel) else model
    w = rbm.weights
    print(f"visible: {rbm.n_visible}  hidden: {rbm.n_hidden}  "
          f"parameters: {w.size + rbm.n_visible + rbm.n_hidden}")
    print(f"weights: |w| mean {np.abs(w).mean():.4f} max {np.abs(w).max():.4f} "
          f"zero fraction {float(np.mean(np.abs(w) < 1e-12)):.3f}")
    print(f"hidden bias: min {rbm.hidden_bias.min():.4f} max {rbm.hidden_bias.max():.4f}")
    print(f"visible bias: min {rbm.visible_bias.min():.4f} max {rbm.visible_bias.max():.4f}")
    exported = public_terminals(model)
    print(f"exported terminals ({len(exported)}): {' '.join(exported)}")
    if isinstance(model, MergedModel) and model.constants:
        consts = ", ".join(f"{k}={v}" for k, v in sorted(model.constants.items()))
        print(f"constants: {consts}")
    if args.weights_csv:
        path = _out_path(args.weights_csv)
        _write_csv(path, ["visible", "hidden", "weight"],
                   [[rbm.visible_names[i], j, float(w[i, j])]
                    for i in range(rbm.n_visible) for j in range(rbm.n_hidden)])
        print(f"wrote {path}")
    return 0


def cmd_replay(args, argv) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    return main(list(manifest["argv"]))


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rbmlogic",
        description="Build, train, merge and sample RBM logic circuits.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", help="synthesize a model from gates or a netlist")
    p.add_argument("spec", help="builtin name (xor, fa1, adder16, mult8) or netlist JSON")
    p.add_argument("-o", "--output", required=True, help="model JSON path")
    p.add_argument("--sharpness", type=float, default=DEFAULT_SHARPNESS)
    p.add_argument("--base", help="slice model for adder<n>/mult<n> generators")
    p.set_defaults(fn=cmd_build)

    p = sub.add_parser("train", help="train a unit with staged CD-k")
    p.add_argument("task", help="adder<n> or mult<n>")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--hidden", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--cap", type=int, default=None, help="dataset sample cap")
    p.add_argument("--config", help="TrainConfig overrides JSON")
    p.add_argument("--metrics", help="metrics CSV path")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("solve", help="clamp a problem and sample the answer")
    p.add_argument("model")
    p.add_argument("--op", required=True,
                   choices=["add", "subtract", "reverse_carry", "multiply",
                            "divide", "factor", "sat"])
    p.add_argument("--clamp", action="append", metavar="NAME=INT")
    p.add_argument("--cout", choices=["free", "0", "1"], default=None)
    p.add_argument("--expected", type=int, default=None)
    p.add_argument("--chains", type=int, default=8)
    p.add_argument("--sweeps", type=int, default=2000)
    p.add_argument("--burn-in", type=int, default=0)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-k", type=int, default=5)
    p.add_argument("--hist", help="write decoded answer CSVs here")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("bench", help="success-vs-samples over random instances")
    p.add_argument("config", help="benchmark configuration JSON")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("diagnose", help="mixing diagnostics for small models")
    p.add_argument("model")
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--clamp", action="append", metavar="NAME=BIT")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--sample-sweeps", type=int, default=2000)
    p.add_argument("--max-joint", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_diagnose)

    p = sub.add_parser("inspect", help="print model shape and weight stats")
    p.add_argument("model")
    p.add_argument("--weights-csv")
    p.set_defaults(fn=cmd_inspect)

    p = sub.add_parser("replay", help="rerun a command from its manifest")
    p.add_argument("manifest")
    p.set_defaults(fn=cmd_replay)
    return parser


def main(argv: list[str] | None = None) -> int:
    if "RBMLOGIC_THREADS" in os.environ:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, os.environ["RBMLOGIC_THREADS"])
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args, argv)
    except (ValueError, KeyError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
