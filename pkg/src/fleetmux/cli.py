"""Headless scenario runner and reproducibility harness.

    fleetmux run <scenario> [--seed N] [--ticks N] [--net.loss P]
                 [--log DIR] [--live] [--record-ui FILE]
    fleetmux list
    fleetmux bench [--size N] [--repeat N]

<scenario> is a file path or a bundled scenario name. Headless runs are
fully deterministic; --live opens the console gateway and paces the loop
on the wall clock (the one nondeterministic mode, excluded from asserts).
"""

from __future__ import annotations

import argparse
import sys
import time

from fleetmux.errors import ScenarioParseError
from fleetmux.gateway import GatewayRecorder, TcpGateway
from fleetmux.runner import ScenarioRunner
from fleetmux.scenario import list_packaged_scenarios, load_scenario


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fleetmux")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a scenario headless (or --live)")
    run.add_argument("scenario", help="scenario file path or bundled name")
    run.add_argument("--seed", type=int, default=None)
    run.add_argument("--ticks", type=int, default=None)
    run.add_argument("--net.loss", dest="net_loss", type=float, default=None)
    run.add_argument("--log", default=None, help="directory for events.log / audit.log / metrics.json")
    run.add_argument("--live", action="store_true", help="open the console gateway, pace on wall clock")
    run.add_argument("--port", type=int, default=8750, help="gateway port for --live")
    run.add_argument("--record-ui", default=None, help="record the gateway stream to FILE")

    sub.add_parser("list", help="list bundled scenarios")

    bench = sub.add_parser("bench", help="benchmark compiled vs pure grid kernels")
    bench.add_argument("--size", type=int, default=200, help="grid side length in cells")
    bench.add_argument("--repeat", type=int, default=20)
    return parser


def _cmd_run(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.ticks is not None:
        overrides["ticks"] = args.ticks
    if args.net_loss is not None:
        overrides["loss"] = args.net_loss
    try:
        scenario = load_scenario(args.scenario, overrides)
    except ScenarioParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    recorder_factory = None
    if args.record_ui:
        recorder_factory = lambda base: GatewayRecorder(args.record_ui, base)  # noqa: E731

    runner = ScenarioRunner(scenario, log_dir=args.log, ui_recorder_factory=recorder_factory)
    if args.live:
        return _run_live(runner, args.port)

    result = runner.run()
    for name, ok, detail in result.assertion_results:
        status = "PASS" if ok else "FAIL"
        print(f"[{status}] {name} {detail}")
    print(
        f"{scenario.name}: {runner.net.stats.posted} frames posted, "
        f"{runner.net.stats.delivered} delivered, "
        f"{result.metrics['collisions']} collisions"
    )
    return 0 if result.ok else 1


def _run_live(runner: ScenarioRunner, port: int) -> int:
    if not runner.bases:
        print("error: live mode needs at least one basestation", file=sys.stderr)
        return 2
    base = next(iter(runner.bases.values()))
    gateway = TcpGateway(base, port=port)
    print(f"gateway listening on {gateway.host}:{gateway.port}")
    scenario = runner.scenario
    try:
        from collections import defaultdict

        for tick in range(scenario.ticks):
            start = time.monotonic()
            now_ms = tick * scenario.tick_ms
            inboxes = defaultdict(list)
            for dst, frame in runner.net.step(tick):
                inboxes[dst].append(frame)
            for ev in runner.timeline.get(tick, []):
                runner._apply_event(ev, now_ms)
            for action in gateway.pump(now_ms):
                base.enqueue_action(action)
            for aid in scenario.roster:
                agent = runner.agents[aid]
                outs = agent.tick(tick, now_ms, inboxes.get(aid, []))
                for env in outs:
                    env.posted_at = tick
                    runner.net.post(aid, env)
            remaining = scenario.tick_ms / 1000.0 - (time.monotonic() - start)
            if remaining > 0:
                time.sleep(remaining)
    except KeyboardInterrupt:
        pass
    finally:
        gateway.close()
    return 0


def _cmd_bench(args) -> int:
    from fleetmux import bench

    bench.run(size=args.size, repeat=args.repeat)
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "list":
        for name in list_packaged_scenarios():
            print(name)
        return 0
    if args.command == "bench":
        return _cmd_bench(args)
    return 2


if __name__ == "__main__":
    sys.exit(main())
