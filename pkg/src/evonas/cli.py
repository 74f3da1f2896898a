"""Command-line entry points: run, worker, simulate, retrain, compare.

All run state lives under a run directory (``<run-root>/<algorithm name>``),
so a killed run resumes with the same command that started it and no external
services are required: the default execution engine is the in-process
simulated farm (surrogate/lookup backends) or local threads (command backend).
Passing ``--workers`` dispatches jobs to remote worker agents instead.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import report as report_mod
from .backends import build_backend
from .bus import InProcessBus, Listener, kill_all
from .cache import ResultCache
from .config import (
    BackendConfig,
    canonical_settings_text,
    parse_global,
    parse_train,
    settings_digest,
    settings_map,
)
from .datasets import dataset_spec
from .engine import ThreadedEngine, local_runner, local_terminator
from .errors import ConfigError, EvoNasError
from .evaluator import Evaluator
from .evo.strategies import build_strategy
from .jobs import JobSpec
from .remote import TcpTransport, WorkerAgent, remote_runner
from .runner import Runner, SETTINGS_FILE
from .simfarm import SimulatedFarm, parse_fault_script
from .slots import SlotStore

logger = logging.getLogger(__name__)


def _parse_workers(spec: str) -> dict[str, int]:
    """``host:port=slots,host:port=slots`` -> worker map."""
    workers: dict[str, int] = {}
    for part in spec.split(","):
        part = part.strip()
        if not part:
            continue
        addr, _, slots = part.partition("=")
        workers[addr] = int(slots) if slots else 1
    if not workers:
        raise ConfigError(f"no workers in spec {spec!r}")
    return workers


def build_engine(
    backend_cfg: BackendConfig,
    settings: dict[str, str],
    bus: InProcessBus,
    listener: Listener,
    workers: str | None = None,
    local_slots: int = 4,
):
    """Pick the execution engine: remote workers > local threads > simulated farm."""
    if workers:
        worker_map = _parse_workers(workers)
        store = SlotStore((node, i) for node, n in sorted(worker_map.items()) for i in range(n))
        transport = TcpTransport()
        return ThreadedEngine(store, bus, listener, remote_runner(transport), terminator=transport.kill)
    backend = build_backend(backend_cfg.kind, settings)
    if backend_cfg.kind == "command":
        store = SlotStore(("local", i) for i in range(local_slots))
        return ThreadedEngine(store, bus, listener, local_runner(backend), terminator=local_terminator)
    return SimulatedFarm({"sim": local_slots}, backend, bus, listener)


def cmd_run(args) -> int:
    global_cfg = parse_global(args.global_config)
    train, backend_cfg = parse_train(args.train_config)
    strategy = build_strategy(
        global_cfg.strategy_config(), input_hw=dataset_spec(train.dataset)[0][1]
    )
    settings = settings_map(train, backend_cfg, strategy.space.decode_settings())
    run_dir = Path(args.run_root) / global_cfg.name
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / SETTINGS_FILE).write_text(canonical_settings_text(settings), encoding="utf-8")

    cache = None if args.no_cache else ResultCache(run_dir / "cache.txt", settings_digest(settings))
    bus = InProcessBus()
    listener = Listener(bus, run_dir, cache)
    engine = build_engine(backend_cfg, settings, bus, listener, args.workers, args.local_slots)
    evaluator = Evaluator(
        engine, cache, settings, strategy.space,
        master_seed=global_cfg.seed, objectives=strategy.objectives,
    )
    runner = Runner(run_dir, strategy, evaluator, label=global_cfg.name, master_seed=global_cfg.seed)
    try:
        best = runner.run()
    except KeyboardInterrupt:
        # free every GPU before dying: one termination command per live job
        count = kill_all(bus, getattr(engine, "terminate", lambda node, pid: None))
        print(f"interrupted: sent {count} termination command(s); run resumes from {run_dir}", file=sys.stderr)
        return 130
    stats = engine.stats
    print(f"run {global_cfg.name}: best {best.name} fitness {100 * best.fitness0:.2f}")
    print(f"  identifier {best.identifier}")
    print(f"  backend jobs {stats.jobs}, busy {stats.busy_seconds:.1f}s, failures {stats.failures}")
    print(f"  run directory {run_dir}")
    return 0


def cmd_worker(args) -> int:
    host, _, port = args.listen.rpartition(":")
    agent = WorkerAgent(host or "127.0.0.1", int(port), args.slots, tuple(args.backend))
    try:
        agent.serve_forever()
    except KeyboardInterrupt:
        agent.stop()
    return 0


def cmd_simulate(args) -> int:
    import tempfile

    from .arch.spaces import FixedBinarySpace
    from .backends import SurrogateBackend
    from .evaluator import job_seed
    from .runner import derive_rng

    faults = parse_fault_script(
        [
            {"kind": "crash", "node": entry.split("@")[0], "at": float(entry.split("@")[1])}
            for entry in args.crash
        ]
    )
    workers = {f"w{i}": args.slots_per_worker for i in range(args.worker_count)}
    space = FixedBinarySpace()
    rng = derive_rng(args.seed, "simulate")
    with tempfile.TemporaryDirectory(prefix="evonas_sim_") as tmp:
        bus = InProcessBus()
        listener = Listener(bus, tmp, cache=None)
        farm = SimulatedFarm(
            workers,
            SurrogateBackend(),
            bus,
            listener,
            duration=args.duration,
            dispatch_overhead=args.overhead,
            faults=faults,
            seed=args.seed,
        )
        jobs = []
        for i in range(args.jobs):
            from .arch import canonical_text, identifier

            g = space.sample(rng)
            jobs.append(
                JobSpec(
                    name=f"job{i:03d}",
                    identifier=identifier(g),
                    payload=canonical_text(g),
                    backend="surrogate",
                    settings={"dataset": "cifar10", "stage_channels": "32,64"},
                    seed=job_seed(args.seed, identifier(g)),
                    epochs=1,
                )
            )
        farm.run_jobs(jobs)
        print(f"jobs {args.jobs}  slots {sum(workers.values())}  duration {args.duration}s")
        print(f"virtual makespan {farm.last_makespan:.3f}s  attempts {farm.stats.attempts}")
        if args.trace:
            for event in farm.trace:
                where = f"{event.node}:{event.slot}" if event.node else "-"
                print(f"  t={event.time:8.3f}  {event.kind:<8} {event.job:<10} {where}")
    return 0


def cmd_retrain(args) -> int:
    train, backend_cfg = parse_train(args.train_config)
    run_dir = Path(args.run_dir)
    # decode parameters ride along from the original run's snapshot
    original = report_mod.read_settings(run_dir)
    decode_params = {k: v for k, v in original.items() if k in ("stage_channels", "cell_channels")}
    settings = settings_map(train, backend_cfg, decode_params)
    bus = InProcessBus()
    listener = Listener(bus, run_dir, cache=None)
    engine = build_engine(backend_cfg, settings, bus, listener, args.workers, args.local_slots)
    name, value = report_mod.retrain_best(run_dir, settings, engine, master_seed=args.seed)
    print(f"retrained {name}: {value:.2f} ({settings.get('total_epoch')} epochs)")
    return 0


def cmd_compare(args) -> int:
    rows, text, csv_text = report_mod.compare(args.run_dirs, allow_mixed=args.allow_mixed)
    print(text, end="")
    if args.csv:
        Path(args.csv).write_text(csv_text, encoding="utf-8")
        print(f"csv written to {args.csv}")
    return 0


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evonas", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a search strategy to completion (resumes after a crash)")
    p.add_argument("--global-config", default="global.ini")
    p.add_argument("--train-config", default="train.ini")
    p.add_argument("--run-root", default="runs")
    p.add_argument("--workers", default=None, help="host:port=slots,... remote worker agents")
    p.add_argument("--local-slots", type=int, default=4)
    p.add_argument("--no-cache", action="store_true", help="disable the fitness cache")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("worker", help="serve this machine's slots to a remote runner")
    p.add_argument("--listen", required=True, help="host:port (port 0 picks a free port)")
    p.add_argument("--slots", type=int, default=1)
    p.add_argument(
        "--backend", action="append", default=None,
        help="allowed backend kind (repeatable); default: surrogate,command,lookup",
    )
    p.set_defaults(func=cmd_worker)

    p = sub.add_parser("simulate", help="exercise the virtual-time farm on synthetic jobs")
    p.add_argument("--jobs", type=int, default=10)
    p.add_argument("--worker-count", type=int, default=1)
    p.add_argument("--slots-per-worker", type=int, default=4)
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--overhead", type=float, default=0.0)
    p.add_argument("--crash", action="append", default=[], help="node@time, e.g. w1@7.0")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("retrain", help="re-dispatch a finished run's best under retrain settings")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--train-config", required=True)
    p.add_argument("--workers", default=None)
    p.add_argument("--local-slots", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_retrain)

    p = sub.add_parser("compare", help="tabulate completed runs into the comparison report")
    p.add_argument("run_dirs", nargs="+")
    p.add_argument("--allow-mixed", action="store_true", help="tabulate despite differing settings")
    p.add_argument("--csv", default=None, help="also write the CSV report here")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )
    if args.command == "worker" and args.backend is None:
        args.backend = ["surrogate", "command", "lookup"]
    try:
        return args.func(args)
    except EvoNasError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
