"""Command line front ends: the simulator runner and the collector.

``iwast-sim run`` executes a scenario file and writes the four run
artifacts.  ``iwast-sim device`` keeps a simulated motherboard parked
in its configuration window and serves configurator sessions on a
socket, so ``iwast-cfg`` can talk to it like a real device.
"""

import argparse
import dataclasses
import sys

from . import energy
from .configurator import SessionServer, serve_sessions
from .engine import write_artifacts
from .scenarios import (build_simulator, load_scenario_file,
                        run_comparison, crossover_frequent_events,
                        crossover_rare_events, write_example_scenarios)


def _cmd_run(args) -> int:
    scenario = load_scenario_file(args.scenario)
    if args.horizon is not None:
        scenario = dataclasses.replace(scenario, horizon_s=args.horizon)
    sim = build_simulator(scenario)
    result = sim.run()
    write_artifacts(result, args.out)
    if not args.quiet:
        print(energy.render_text(result.report))
        print("uplinks: {}  events: {}  artifacts: {}".format(
            len(result.uplinks), len(result.events), args.out))
        if result.depleted:
            print("battery depleted at t={:.1f} s".format(
                result.depleted_at))
    return 0


def _cmd_examples(args) -> int:
    paths = write_example_scenarios(args.out)
    for path in paths:
        print(path)
    return 0


def _cmd_compare(args) -> int:
    builder = (crossover_frequent_events if args.regime == "frequent"
               else crossover_rare_events)
    reports, comparison = run_comparison(builder())
    for name in comparison["ordering"]:
        report = reports[name]
        print("{:<10} {:>12.3f} uAh".format(
            name, report["total"]["charge_uah"]))
    print("winner: {}".format(comparison["winner"]))
    return 0


def _cmd_device(args) -> int:
    scenario = load_scenario_file(args.scenario)
    sim = build_simulator(scenario)
    sim.prime()
    sim._on_usb_attach(0.0, None)

    def on_reboot():
        # stay "plugged in": reboot lands back in the config window
        sim.mb.reboot(sim.now)
        sim.mb.usb_attached(sim.now)

    def factory():
        return SessionServer(sim.mb, now_fn=lambda: sim.now,
                             on_reboot=on_reboot)

    server = serve_sessions(factory, args.listen)
    print("serving configurator sessions on {}".format(args.listen))
    try:
        server._thread.join()
    except KeyboardInterrupt:
        server.shutdown()
    return 0


def main_sim(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="iwast-sim",
        description="run sensor-platform simulations")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a scenario file")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--out", default="out")
    p_run.add_argument("--horizon", type=float, default=None)
    p_run.add_argument("--quiet", action="store_true")
    p_run.set_defaults(fn=_cmd_run)

    p_ex = sub.add_parser("examples", help="write example scenario files")
    p_ex.add_argument("--out", default="scenarios")
    p_ex.set_defaults(fn=_cmd_examples)

    p_cmp = sub.add_parser(
        "compare", help="polling vs wake-on-sound comparison")
    p_cmp.add_argument("--regime", choices=("frequent", "rare"),
                       default="frequent")
    p_cmp.set_defaults(fn=_cmd_compare)

    p_dev = sub.add_parser(
        "device", help="serve a virtual device for iwast-cfg")
    p_dev.add_argument("--scenario", required=True)
    p_dev.add_argument("--listen", required=True,
                       help="unix:<path> or tcp:<host>:<port>")
    p_dev.set_defaults(fn=_cmd_device)

    args = parser.parse_args(argv)
    return args.fn(args)


def main_collector(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="iwast-collector", description="run the collector service")
    parser.add_argument("--db", default="collector.sqlite")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8800)
    args = parser.parse_args(argv)

    import uvicorn

    from .collector import create_app
    uvicorn.run(create_app(args.db), host=args.host, port=args.port)
    return 0


if __name__ == "__main__":
    sys.exit(main_sim())
