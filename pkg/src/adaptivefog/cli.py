"""Command-line interface.

Subcommands cover the whole pipeline: ``ingest`` traces, ``fit`` the
latency model, estimate ``mobility`` transitions, dump the ``kr`` distance
table, ``solve`` switching policies, ``replay`` them over traces, run a
cost ``sweep``, generate ``synth`` traces, and re-``report`` saved results.

Exit codes: 0 success, 2 configuration/usage error, 3 data error,
4 solver non-convergence. All randomness flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import harness, synth
from .errors import (
    ConfigError,
    CoverageError,
    EstimationError,
    ModelFitError,
    ScenarioError,
    SolverError,
    TraceFormatError,
    TraceRangeError,
)
from .mobility import MobilityModel, estimate_transitions
from .policy import (
    Finite,
    INFINITE,
    SwitchPolicy,
    SwitchProblem,
    kr_table,
    myopic_policy,
    solve_finite,
    solve_infinite,
)
from .stats import CdfShiftPenalty, LatencyModel, ScalarPenalty, fit_model
from .trace import Server, load_config, parse_trace, serialize_trace

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SOLVER = 4


def _read_trace(path: str):
    with open(path, encoding="utf-8") as fh:
        return parse_trace(fh)


def _load_model(path: str) -> LatencyModel:
    with open(path, encoding="utf-8") as fh:
        return LatencyModel.load(fh)


def _load_mobility(path: str) -> MobilityModel:
    with open(path, encoding="utf-8") as fh:
        return MobilityModel.load(fh)


def _server(name: str) -> Server:
    return Server(name)


def _require_config(args):
    if not args.config:
        raise ConfigError(f"'{args.command}' needs --config")
    return load_config(args.config)


def cmd_ingest(args) -> int:
    result = _read_trace(args.trace)
    print(f"parsed {len(result.samples)} samples, skipped {result.skipped} rows")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            serialize_trace(result.samples, fh)
        print(f"normalized trace written to {args.out}")
    return EXIT_OK


def cmd_fit(args) -> int:
    grid, _ = _require_config(args)
    result = _read_trace(args.trace)
    model = fit_model(result.samples, grid, min_samples=args.min_samples)
    with open(args.out, "w", encoding="utf-8") as fh:
        model.save(fh, exact=not args.sketch)
    print(
        f"fitted {len(model.direct_keys)} direct state CDFs "
        f"(min_samples={args.min_samples}) -> {args.out}"
    )
    return EXIT_OK


def cmd_mobility(args) -> int:
    grid, _ = _require_config(args)
    result = _read_trace(args.trace)
    model = estimate_transitions(
        result.samples,
        grid,
        slot_ms=args.slot_ms,
        smoothing_alpha=args.smoothing_alpha,
        session_gap_s=args.session_gap_s,
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        model.save(fh)
    print(f"estimated {model.n_states}-state transition matrix -> {args.out}")
    return EXIT_OK


def cmd_kr(args) -> int:
    _, services = _require_config(args)
    problem = SwitchProblem(
        mobility=_load_mobility(args.mobility),
        latency=_load_model(args.model),
        services=services,
        server_choice=_server(args.server),
    )
    table = kr_table(problem)
    doc = [
        {
            "cell": list(state.cell),
            "speed_bin": state.speed_bin,
            "network_id": state.network,
            "kr": value,
        }
        for state, value in table.items()
    ]
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
    print(f"wrote {len(doc)} K-R entries -> {args.out}")
    return EXIT_OK


def cmd_solve(args) -> int:
    _, services = _require_config(args)
    if args.cdf_shift_ms is not None:
        cost = CdfShiftPenalty(args.cdf_shift_ms)
    else:
        cost = ScalarPenalty(args.cost)
    horizon = Finite(args.slots) if args.horizon == "finite" else INFINITE
    problem = SwitchProblem(
        mobility=_load_mobility(args.mobility),
        latency=_load_model(args.model),
        services=services,
        switch_cost=cost,
        discount=args.gamma,
        horizon=horizon,
        server_choice=_server(args.server),
    )
    if args.myopic:
        policy = myopic_policy(problem)
    elif args.horizon == "finite":
        policy = solve_finite(problem)
    else:
        policy = solve_infinite(problem)
    with open(args.out, "w", encoding="utf-8") as fh:
        policy.save(fh)
    print(
        f"solved {policy.kind} policy over {len(policy.states)} states "
        f"(cost={policy.cost:.4f}) -> {args.out}"
    )
    return EXIT_OK


def cmd_replay(args) -> int:
    grid, services = _require_config(args)
    result = _read_trace(args.trace)
    with open(args.policy, encoding="utf-8") as fh:
        policy = SwitchPolicy.load(fh)
    model = _load_model(args.model) if args.model else None
    rng = np.random.default_rng(args.seed)
    slots = harness.build_slots(
        result.samples, grid, _server(args.server), model=model, rng=rng
    )
    outcome = harness.replay(
        policy, slots, services, start_network=args.start_network
    )
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(outcome.to_dict(), fh, indent=2)
    print(
        f"replayed {outcome.slots} slots: weighted confidence "
        f"{outcome.weighted_confidence:.4f}, {outcome.switch_count} switches "
        f"-> {args.out}"
    )
    return EXIT_OK


def cmd_sweep(args) -> int:
    rng = np.random.default_rng(args.seed)
    if args.preset:
        presets = synth.preset_scenarios()
        if args.preset not in presets:
            raise ConfigError(
                f"unknown preset {args.preset!r}; have {sorted(presets)}"
            )
        spec = presets[args.preset]
        if args.seed is not None:
            spec.seed = args.seed
        samples = synth.generate(spec, args.samples)
        grid = spec.grid
        services = None
        if args.config:
            grid, services = load_config(args.config)
    elif args.trace:
        if not args.config:
            raise ConfigError("--trace sweeps need --config for the grid and services")
        grid, services = load_config(args.config)
        samples = _read_trace(args.trace).samples
    else:
        raise ConfigError("sweep needs --preset or --trace")

    exp = harness.prepare_experiment(
        samples,
        grid,
        services=services,
        server=_server(args.server),
        discount=args.gamma,
        rng=rng,
    )
    costs = np.linspace(args.cost_min, args.cost_max, args.cost_points)
    result = harness.cost_sweep(
        exp.problem, list(costs), exp.slots, finite_horizon=args.finite_slots
    )
    paths = harness.report(result, args.out)
    print(f"sweep complete; report in {args.out}")
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    return EXIT_OK


def cmd_synth(args) -> int:
    if args.spec:
        with open(args.spec, encoding="utf-8") as fh:
            spec = synth.spec_from_dict(json.load(fh))
    else:
        presets = synth.preset_scenarios()
        if args.preset not in presets:
            raise ConfigError(
                f"unknown preset {args.preset!r}; have {sorted(presets)}"
            )
        spec = presets[args.preset]
    if args.seed is not None:
        spec.seed = args.seed
    samples = synth.generate(spec, args.samples)
    with open(args.out, "w", encoding="utf-8") as fh:
        serialize_trace(samples, fh)
    print(f"wrote {len(samples)} samples ({args.samples} ticks) -> {args.out}")
    return EXIT_OK


def cmd_report(args) -> int:
    with open(args.results, encoding="utf-8") as fh:
        result = harness.SweepResult.load(fh)
    paths = harness.report(result, args.out)
    print(f"report written to {args.out}")
    for kind, path in paths.items():
        print(f"  {kind}: {path}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adaptivefog",
        description="Vehicular fog/cloud latency modeling and network switching",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config with grid and services")
    common.add_argument("--seed", type=int, default=None, help="master RNG seed")

    p = sub.add_parser("ingest", parents=[common], help="validate and normalize a trace CSV")
    p.add_argument("--trace", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("fit", parents=[common], help="fit the per-state latency model")
    p.add_argument("--trace", required=True)
    p.add_argument("--min-samples", type=int, default=30)
    p.add_argument("--sketch", action="store_true",
                   help="serialize quantile sketches instead of exact samples")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("mobility", parents=[common], help="estimate driving transitions")
    p.add_argument("--trace", required=True)
    p.add_argument("--slot-ms", type=float, default=500.0)
    p.add_argument("--smoothing-alpha", type=float, default=0.0)
    p.add_argument("--session-gap-s", type=float, default=5.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mobility)

    p = sub.add_parser("kr", parents=[common], help="dump the per-state K-R distance table")
    p.add_argument("--model", required=True)
    p.add_argument("--mobility", required=True)
    p.add_argument("--server", choices=["fog", "cloud"], default="fog")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_kr)

    p = sub.add_parser("solve", parents=[common], help="solve a switching policy")
    p.add_argument("--horizon", choices=["finite", "infinite"], required=True)
    p.add_argument("--slots", type=int, default=8, help="finite horizon length")
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--cost", type=float, default=0.0, help="scalar switch penalty")
    p.add_argument("--cdf-shift-ms", type=float, default=None,
                   help="model the switch as this much extra latency instead")
    p.add_argument("--myopic", action="store_true", help="solve the myopic baseline")
    p.add_argument("--model", required=True)
    p.add_argument("--mobility", required=True)
    p.add_argument("--server", choices=["fog", "cloud"], default="fog")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("replay", parents=[common], help="replay a policy over a trace")
    p.add_argument("--policy", required=True)
    p.add_argument("--trace", required=True)
    p.add_argument("--model", help="latency model for counterfactual draws")
    p.add_argument("--server", choices=["fog", "cloud"], default="fog")
    p.add_argument("--start-network", type=int, choices=[0, 1], default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("sweep", parents=[common],
                       help="cost sweep: solve+replay all policies per cost")
    p.add_argument("--preset", help="synthetic preset name")
    p.add_argument("--trace", help="measured trace CSV instead of a preset")
    p.add_argument("--samples", type=int, default=60_000, help="preset ticks")
    p.add_argument("--cost-min", type=float, default=0.0)
    p.add_argument("--cost-max", type=float, default=1.0)
    p.add_argument("--cost-points", type=int, default=21)
    p.add_argument("--gamma", type=float, default=0.9)
    p.add_argument("--finite-slots", type=int, default=8)
    p.add_argument("--server", choices=["fog", "cloud"], default="fog")
    p.add_argument("--out", required=True, help="report directory")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic trace CSV")
    p.add_argument("--preset", help="preset scenario name")
    p.add_argument("--spec", help="scenario spec JSON (overrides --preset)")
    p.add_argument("--samples", type=int, required=True, help="number of ticks")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("report", parents=[common], help="re-emit files from saved results")
    p.add_argument("--results", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (
        TraceFormatError,
        TraceRangeError,
        ModelFitError,
        EstimationError,
        CoverageError,
        OSError,
        json.JSONDecodeError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
