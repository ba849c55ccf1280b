"""Command-line front end for simulation, sweeps, validation, and parity.

Every subcommand is a thin composition of library calls: build a graph
(from file or generator), build a model, run one or more engines, and
serialize trajectory CSVs, summary JSON, and companion figures.  Outputs
are byte-identical for identical configs and seeds (timing is reported
only by `bench` and in the sweep wall-clock column, which is documented
as hardware-dependent).

Configuration can come from a plain-text `key = value` file (--config);
command-line flags override file values; unknown keys are rejected.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


from . import figures
from .analysis import (
    ensemble_mean,
    epsilon_sweep,
    fidelity,
    parity_check,
    run_ensemble,
)
from .errors import (
    GraphError,
    GraphFileError,
    InfeasibleDegreeSequenceError,
    InvalidConfigError,
    InvalidMomentsError,
    SpreadSimError,
)
from .graph import (
    Strategy,
    gen_barabasi_albert,
    gen_erdos_renyi,
    gen_fixed_degree,
    load_graph,
    read_edge_list,
    save_graph,
)
from .hazards import Shedding, lognormal_from_mean_median
from .markov import MarkovConfig
from .models import seir_standard, sir_model, sis_model
from .renewal import RenewalConfig
from .rng import derive_seed

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_INFEASIBLE = 4

_GRAPH_SEED_SALT = 0x6EA9
_STRATEGIES = {
    "auto": Strategy.AUTO,
    "per-node": Strategy.PER_NODE,
    "lane": Strategy.LANE_CHUNKED,
    "merge": Strategy.EDGE_MERGE,
}


def _fmt(x: float) -> str:
    return f"{x:.12g}"


# ----------------------------------------------------------------------
# argument plumbing
# ----------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, help="key = value configuration file")
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--out", type=str, help="output path prefix")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument(
        "--figures", action=argparse.BooleanOptionalAction, default=True,
        help="render companion PNG figures next to data files",
    )


def _add_graph_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--graph", type=str, help="graph file (binary or edge list)")
    p.add_argument("--gen", choices=["er", "ba", "fixed"], help="graph generator")
    p.add_argument("--nodes", type=int, default=1000)
    p.add_argument("--degree", type=float, default=8.0)
    p.add_argument("--m", type=int, default=4, help="attachment count for --gen ba")


def _add_model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=["sis", "sir", "seir"], default="seir")
    p.add_argument("--beta", type=float, default=0.25)
    p.add_argument("--mean-ei", type=float, default=5.0)
    p.add_argument("--median-ei", type=float, default=4.0)
    p.add_argument("--mean-ir", type=float, default=7.5)
    p.add_argument("--median-ir", type=float, default=5.0)
    p.add_argument("--delta-rate", type=float, default=0.15, help="SIS recovery rate")
    p.add_argument("--gamma-rate", type=float, default=0.15, help="SIR recovery rate")
    p.add_argument(
        "--transmission", choices=["constant", "age-hazard", "age-density"],
        default="constant",
        help="edge transmission mode: constant beta or age-dependent shedding",
    )


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--engine", choices=["markov", "renewal", "exact"], default="renewal")
    p.add_argument("--epsilon", type=float, default=0.03)
    p.add_argument("--tau-max", type=float, default=0.1)
    p.add_argument("--strategy", choices=sorted(_STRATEGIES), default="auto")
    p.add_argument("--batch", type=int, default=50, help="steps per batch")
    p.add_argument("--compaction", action=argparse.BooleanOptionalAction, default=False)
    p.add_argument("--mixed-precision", action=argparse.BooleanOptionalAction, default=False)


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tf", type=float, default=50.0, help="simulation horizon (days)")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed-infected", type=int, default=None,
                   help="initial seed count (default: engine rule)")
    p.add_argument("--seed-state", type=str, default=None,
                   help="compartment label for initial seeds")
    p.add_argument("--grid", type=int, default=501, help="sample grid points")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spreadsim",
        description="Stochastic spreading-process simulation on contact networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_gen = sub.add_parser("generate", help="generate a graph file")
    _add_common(p_gen)
    _add_graph_flags(p_gen)

    p_run = sub.add_parser("run", help="simulate trials and write trajectories")
    for add in (_add_common, _add_graph_flags, _add_model_flags, _add_engine_flags, _add_run_flags):
        add(p_run)

    p_sweep = sub.add_parser("sweep", help="epsilon convergence sweep")
    for add in (_add_common, _add_graph_flags, _add_model_flags, _add_engine_flags, _add_run_flags):
        add(p_sweep)
    p_sweep.add_argument("--eps", type=str, default="0.005,0.01,0.03,0.05,0.1",
                         help="comma-separated epsilon list")
    p_sweep.add_argument("--topologies", type=str, default=None,
                         help="comma list from {er,ba,fixed}: run the "
                              "multi-topology grid instead of a single graph")
    p_sweep.add_argument("--sizes", type=str, default=None,
                         help="comma list of node counts for --topologies")
    p_sweep.add_argument("--exact-max-nodes", type=int, default=1000,
                         help="largest size that gets an exact-oracle overlay")

    p_val = sub.add_parser("validate", help="fidelity of one engine against another")
    for add in (_add_common, _add_graph_flags, _add_model_flags, _add_engine_flags, _add_run_flags):
        add(p_val)
    p_val.add_argument("--reference", choices=["markov", "renewal", "exact"],
                       default="exact")

    p_par = sub.add_parser("parity", help="bit-parity across traversal variants")
    for add in (_add_common, _add_graph_flags, _add_model_flags, _add_engine_flags, _add_run_flags):
        add(p_par)
    p_par.add_argument("--steps", type=int, default=50)

    p_bench = sub.add_parser("bench", help="informational throughput report")
    for add in (_add_common, _add_graph_flags, _add_model_flags, _add_engine_flags, _add_run_flags):
        add(p_bench)
    return parser


def _config_tokens(path: str, parser_flags: set[str]) -> list[str]:
    """Translate a key = value file into CLI tokens (flags override them)."""
    tokens: list[str] = []
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InvalidConfigError(f"cannot read config file: {exc}") from exc
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "config":
            raise InvalidConfigError(f"{path}:{lineno}: config files cannot nest")
        flag = "--" + key.replace("_", "-")
        if flag not in parser_flags:
            raise InvalidConfigError(f"{path}:{lineno}: unknown key {key!r}")
        if value.lower() in ("true", "false"):
            if value.lower() == "true":
                tokens.append(flag)
            else:
                tokens.append(flag.replace("--", "--no-", 1))
        else:
            tokens.extend([flag, value])
    return tokens


def _known_flags(parser: argparse.ArgumentParser, command: str) -> set[str]:
    sub = next(
        a for a in parser._actions if isinstance(a, argparse._SubParsersAction)
    ).choices[command]
    flags: set[str] = set()
    for action in sub._actions:
        flags.update(s for s in action.option_strings if s.startswith("--"))
    return flags


def parse_args(argv: list[str]) -> argparse.Namespace:
    parser = build_parser()
    if not argv:
        parser.error("a subcommand is required")
    command = argv[0]
    rest = list(argv[1:])
    if "--config" in rest:
        idx = rest.index("--config")
        if idx + 1 >= len(rest):
            raise InvalidConfigError("--config requires a path")
        cfg_path = rest[idx + 1]
        tokens = _config_tokens(cfg_path, _known_flags(parser, command))
        rest = tokens + rest
    return parser.parse_args([command] + rest)


# ----------------------------------------------------------------------
# object construction
# ----------------------------------------------------------------------


def build_graph(args):
    if args.graph:
        path = Path(args.graph)
        try:
            with open(path, "rb") as f:
                magic = f.read(4)
        except OSError as exc:
            raise GraphFileError(f"cannot open graph file: {exc}") from exc
        return load_graph(path) if magic == b"FSPG" else read_edge_list(path)
    if not args.gen:
        raise InvalidConfigError("either --graph or --gen is required")
    gseed = derive_seed(args.seed, _GRAPH_SEED_SALT)
    if args.gen == "er":
        return gen_erdos_renyi(args.nodes, args.degree, gseed)
    if args.gen == "ba":
        return gen_barabasi_albert(args.nodes, args.m, gseed)
    return gen_fixed_degree(args.nodes, int(args.degree), gseed)


def build_model(args):
    if args.transmission == "constant":
        shed = Shedding.constant()
    else:
        ir = lognormal_from_mean_median(args.mean_ir, args.median_ir)
        shed = (
            Shedding.lognormal_hazard(ir)
            if args.transmission == "age-hazard"
            else Shedding.density_peak(ir)
        )
    if args.model == "sis":
        return sis_model(args.beta, args.delta_rate, transmission=shed)
    if args.model == "sir":
        return sir_model(args.beta, args.gamma_rate, transmission=shed)
    return seir_standard(
        args.beta, args.mean_ei, args.median_ei, args.mean_ir, args.median_ir,
        transmission=shed,
    )


def build_engine_cfg(args):
    if args.engine == "renewal":
        return RenewalConfig(
            epsilon=args.epsilon,
            tau_max=args.tau_max,
            steps_per_batch=args.batch,
            strategy=_STRATEGIES[args.strategy],
            compaction=args.compaction,
            mixed_precision=args.mixed_precision,
        )
    if args.engine == "markov":
        return MarkovConfig(tau_max=args.tau_max)
    return None


def _seed_compartment(args, model) -> int | None:
    if args.seed_state is None:
        return None
    label = args.seed_state.upper()
    if label not in model.compartments:
        raise InvalidConfigError(
            f"--seed-state {args.seed_state!r} not a compartment of {model.name}"
        )
    return model.index(label)


def _config_echo(args) -> dict:
    skip = {"config", "out", "workers", "figures"}
    return {
        k: v for k, v in sorted(vars(args).items())
        if k not in skip and v is not None
    }


# ----------------------------------------------------------------------
# output writers
# ----------------------------------------------------------------------


def write_trajectory_csv(path, grid, mean_fractions, compartments) -> None:
    with open(path, "w") as f:
        f.write("t," + ",".join(compartments) + "\n")
        for j, t in enumerate(grid):
            row = ",".join(_fmt(mean_fractions[k, j]) for k in range(len(compartments)))
            f.write(f"{_fmt(t)},{row}\n")


def write_json(path, payload) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")


def _run_summaries(records) -> list[dict]:
    out = []
    for r in records:
        s = {k: v for k, v in r.summary.items() if k != "wall_clock"}
        out.append(s)
    return out


# ----------------------------------------------------------------------
# subcommands
# ----------------------------------------------------------------------


def cmd_generate(args) -> int:
    if not args.out:
        raise InvalidConfigError("generate requires --out")
    if args.graph:
        raise InvalidConfigError("generate takes --gen, not --graph")
    g = build_graph(args)
    save_graph(g, args.out)
    print(f"wrote {args.out}: N={g.num_nodes} E={g.num_edges}")
    return EXIT_OK


def _require_out(args) -> Path:
    if not args.out:
        raise InvalidConfigError("this command requires --out")
    return Path(args.out)


def cmd_run(args) -> int:
    if args.trials < 1:
        raise InvalidConfigError("--trials must be >= 1")
    out = _require_out(args)
    g = build_graph(args)
    model = build_model(args)
    cfg = build_engine_cfg(args)
    records = run_ensemble(
        args.engine, g, model, cfg, args.seed, args.tf, args.trials,
        grid_points=args.grid, workers=args.workers,
        seed_count=args.seed_infected,
        seed_compartment=_seed_compartment(args, model),
    )
    mean = ensemble_mean(records)
    write_trajectory_csv(out.with_suffix(".csv"), records[0].grid, mean,
                         model.compartments)
    finals = {}
    for k, label in enumerate(model.compartments):
        finals[label] = float(mean[k, -1])
    payload = {
        "config": _config_echo(args),
        "graph": {"num_nodes": g.num_nodes, "num_edges": g.num_edges},
        "final_fractions": finals,
        "runs": _run_summaries(records),
    }
    write_json(out.with_suffix(".json"), payload)
    if args.figures:
        figures.plot_trajectory(
            records, out.with_suffix(".png"),
            title=f"{model.name} / {args.engine} ({args.trials} trials)",
        )
    print(
        f"{args.engine} {model.name}: trials={args.trials} "
        + " ".join(f"{k}={v:.4f}" for k, v in finals.items())
    )
    return EXIT_OK


def _cmd_sweep_multi(args, out: Path, eps_list: list[float]) -> int:
    from .analysis import multi_topology_sweep

    topologies = [t.strip() for t in args.topologies.split(",") if t.strip()]
    sizes = [int(tok) for tok in (args.sizes or "1000").split(",") if tok.strip()]
    model = build_model(args)
    data = multi_topology_sweep(
        topologies, sizes, eps_list, args.trials, args.seed, model=model,
        t_final=args.tf, grid_points=args.grid, workers=args.workers,
        exact_max_nodes=args.exact_max_nodes, base_cfg=build_engine_cfg(args),
    )
    with open(out.with_suffix(".csv"), "w") as f:
        f.write("topology,nodes,series,t,infectious_fraction\n")
        for (topo, n), cell in sorted(data.items()):
            series = {f"eps={eps:g}": curve for eps, curve in cell["eps_curves"].items()}
            if cell["exact"] is not None:
                series["exact"] = cell["exact"]["mean"]
                series["exact_q25"] = cell["exact"]["q25"]
                series["exact_q75"] = cell["exact"]["q75"]
            for name, curve in sorted(series.items()):
                for t, v in zip(cell["grid"], curve):
                    f.write(f"{topo},{n},{name},{_fmt(t)},{_fmt(v)}\n")
    if args.figures:
        figures.plot_multi_topology(data, out.with_suffix(".png"),
                                    title="multi-topology sweep")
    print(f"multi-topology sweep: {len(data)} cells -> {out.with_suffix('.csv')}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.engine != "renewal":
        raise InvalidConfigError("sweep applies to the renewal engine")
    if args.trials < 1:
        raise InvalidConfigError("--trials must be >= 1")
    out = _require_out(args)
    eps_list = [float(tok) for tok in args.eps.split(",") if tok.strip()]
    if args.topologies:
        return _cmd_sweep_multi(args, out, eps_list)
    g = build_graph(args)
    model = build_model(args)
    base = build_engine_cfg(args)
    res = epsilon_sweep(
        g, model, base, eps_list, args.trials, args.seed, args.tf,
        grid_points=args.grid, workers=args.workers,
        seed_count=args.seed_infected,
    )
    with open(out.with_suffix(".csv"), "w") as f:
        f.write(
            "epsilon,peak_i,peak_i_lo,peak_i_hi,final_r,final_r_lo,final_r_hi,"
            "mean_steps,selfcons_l_inf,mean_wall_s\n"
        )
        for row in res.rows:
            final = (
                (_fmt(row.final_r), _fmt(row.final_r_ci[0]), _fmt(row.final_r_ci[1]))
                if row.final_r is not None
                else ("", "", "")
            )
            f.write(
                ",".join(
                    [
                        _fmt(row.epsilon), _fmt(row.peak_i),
                        _fmt(row.peak_i_ci[0]), _fmt(row.peak_i_ci[1]),
                        *final,
                        _fmt(row.mean_steps), _fmt(row.selfcons_l_inf),
                        f"{row.mean_wall:.4f}",
                    ]
                )
                + "\n"
            )
    if args.figures:
        figures.plot_sweep(res.rows, out.with_suffix(".png"),
                           title=f"epsilon sweep ({args.trials} trials)")
    print(f"sweep: {len(res.rows)} epsilon rows -> {out.with_suffix('.csv')}")
    return EXIT_OK


def cmd_validate(args) -> int:
    if args.trials < 1:
        raise InvalidConfigError("--trials must be >= 1")
    out = _require_out(args)
    g = build_graph(args)
    model = build_model(args)
    comp = _seed_compartment(args, model)
    cand = run_ensemble(
        args.engine, g, model, build_engine_cfg(args), args.seed, args.tf,
        args.trials, grid_points=args.grid, workers=args.workers,
        seed_count=args.seed_infected, seed_compartment=comp,
    )
    ref_args = argparse.Namespace(**{**vars(args), "engine": args.reference})
    ref = run_ensemble(
        args.reference, g, model, build_engine_cfg(ref_args), args.seed, args.tf,
        args.trials, grid_points=args.grid, workers=args.workers,
        seed_count=args.seed_infected, seed_compartment=comp,
    )
    rep = fidelity(cand, ref, seed=args.seed)
    payload = {
        "config": _config_echo(args),
        "l_inf": rep.l_inf,
        "l2": rep.l2,
        "err_peak_i": rep.err_peak_i,
        "err_final_r": rep.err_final_r,
        "per_run_peak_err": rep.per_run_peak_err,
        "per_run_final_err": rep.per_run_final_err,
        "ci": {k: list(v) for k, v in sorted(rep.ci.items())},
    }
    write_json(out.with_suffix(".json"), payload)
    if args.figures:
        figures.plot_validation(
            cand, ref, out.with_suffix(".png"),
            label_a=args.engine, label_b=args.reference,
            title=f"{model.name}: {args.engine} vs {args.reference}",
        )
    print(
        f"validate {args.engine} vs {args.reference}: "
        f"l_inf={rep.l_inf:.4f} err_peak_I={rep.err_peak_i:.4f}"
    )
    return EXIT_OK


def cmd_parity(args) -> int:
    if args.engine != "renewal":
        raise InvalidConfigError("parity applies to the renewal engine")
    out = _require_out(args)
    g = build_graph(args)
    model = build_model(args)
    base = build_engine_cfg(args)

    def variant(**kw):
        return RenewalConfig(**{**base.__dict__, **kw})

    cfgs = [
        variant(strategy=Strategy.PER_NODE),
        variant(strategy=Strategy.LANE_CHUNKED),
        variant(strategy=Strategy.EDGE_MERGE),
        variant(strategy=Strategy.PER_NODE, compaction=True),
        variant(strategy=Strategy.PER_NODE, chunk_skip=False),
    ]
    labels = ["per-node", "lane", "merge", "per-node+compaction", "per-node+no-skip"]
    seeds = [derive_seed(args.seed, k) for k in range(max(args.trials, 1))]
    rep = parity_check(g, model, cfgs, steps=args.steps, seeds=seeds,
                       seed_count=args.seed_infected)
    payload = {
        "config": _config_echo(args),
        "ok": rep.ok,
        "steps": rep.steps,
        "variants": labels,
        "seeds": seeds,
        "mismatches": [
            {"seed": m.seed, "variant": labels[m.variant], "step": m.step,
             "node": m.node, "field": m.which}
            for m in rep.mismatches
        ],
    }
    write_json(out.with_suffix(".json"), payload)
    if args.figures:
        figures.plot_parity(rep, out.with_suffix(".png"))
    print(f"parity: {'OK' if rep.ok else 'MISMATCH'} over {rep.steps} steps, "
          f"{len(cfgs)} variants, {len(seeds)} seeds")
    return EXIT_OK


def cmd_bench(args) -> int:
    import time

    g = build_graph(args)
    model = build_model(args)
    cfg = build_engine_cfg(args)
    t0 = time.perf_counter()
    records = run_ensemble(
        args.engine, g, model, cfg, args.seed, args.tf, max(args.trials, 1),
        grid_points=args.grid, workers=args.workers,
        seed_count=args.seed_infected,
        seed_compartment=_seed_compartment(args, model),
    )
    wall = time.perf_counter() - t0
    steps = sum(r.summary["step_count"] for r in records)
    sps = steps / wall if wall > 0 else float("inf")
    nups = sps * g.num_nodes
    print(
        f"bench {args.engine}: N={g.num_nodes} E={g.num_edges} trials={len(records)} "
        f"steps={steps} wall={wall:.3f}s steps/s={sps:.1f} NUPS={nups:.3e}"
    )
    if args.out:
        write_json(Path(args.out).with_suffix(".json"), {
            "config": _config_echo(args),
            "total_steps": steps,
            "wall_s": wall,
            "steps_per_s": sps,
            "nups": nups,
        })
    return EXIT_OK


_COMMANDS = {
    "generate": cmd_generate,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "validate": cmd_validate,
    "parity": cmd_parity,
    "bench": cmd_bench,
}


def _error_record(exc: Exception) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc)})


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
        return _COMMANDS[args.command](args)
    except (InvalidConfigError, InvalidMomentsError) as exc:
        print(_error_record(exc), file=sys.stderr)
        return EXIT_CONFIG
    except (GraphFileError, OSError) as exc:
        print(_error_record(exc), file=sys.stderr)
        return EXIT_IO
    except (InfeasibleDegreeSequenceError, GraphError, ValueError) as exc:
        print(_error_record(exc), file=sys.stderr)
        return EXIT_INFEASIBLE
    except SpreadSimError as exc:
        print(_error_record(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
