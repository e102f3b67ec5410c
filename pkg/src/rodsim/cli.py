"""Command-line interface: scripted scenario runs, benchmarks, and the
steering service."""

import argparse
import sys

from .scenarios import SCENARIO_NAMES


def build_parser():
    parser = argparse.ArgumentParser(
        prog="rodsim",
        description="Elastic rod simulation: scenarios, benchmarks, service")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scripted scenario")
    sim.add_argument("--config", required=True, help="scene file (JSON)")
    sim.add_argument("--scenario", required=True, choices=SCENARIO_NAMES)
    sim.add_argument("--backend", choices=["serial", "parallel"])
    sim.add_argument("--blocks", type=int, help="number of worker blocks")
    sim.add_argument("--steps", type=int, help="total time-steps")
    sim.add_argument("--batch", type=int, help="steps per epoch")
    sim.add_argument("--iters", type=int, help="constraint sweep iterations")
    sim.add_argument("--out", help="metrics CSV path")

    bench = sub.add_parser("bench", help="run the benchmark matrix")
    bench.add_argument("--matrix", required=True, help="matrix file (JSON)")
    bench.add_argument("--out", required=True, help="results CSV path")

    serve = sub.add_parser("serve", help="run the steering service")
    serve.add_argument("--port", type=int, default=8000)
    serve.add_argument("--config", required=True, help="scene file (JSON)")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--session-log", help="command log path (ndjson)")
    return parser


def cmd_simulate(args):
    from .scene import load_scene
    from .scenarios import run_scenario
    config = load_scene(args.config)
    table, engine = run_scenario(
        args.scenario, config, backend=args.backend, blocks=args.blocks,
        steps=args.steps, batch=args.batch, iters=args.iters)
    if args.out:
        table.export(args.out)
        print(f"wrote {len(table.rows)} epochs to {args.out}")
    else:
        strain = max(table.column("max_strain"), default=0.0)
        print(f"ran {sum(table.column('steps'))} steps; "
              f"max strain {strain:.3e}")
    return 0


def cmd_bench(args):
    from .bench import bench_suite, export_rows, load_matrix
    rows = bench_suite(load_matrix(args.matrix))
    export_rows(rows, args.out)
    print(f"wrote {len(rows)} benchmark rows to {args.out}")
    return 0


def cmd_serve(args):
    import uvicorn

    from .scene import load_scene
    from .service import create_app
    app = create_app(load_scene(args.config), session_log=args.session_log)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {"simulate": cmd_simulate, "bench": cmd_bench,
                "serve": cmd_serve}
    try:
        return handlers[args.command](args)
    except BrokenPipeError:
        return 1
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
