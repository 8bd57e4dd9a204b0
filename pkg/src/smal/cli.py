"""Command line entry points.

    smal demo             record a scripted demonstration
    smal train            learn a model from demonstration archives
    smal run              execute a trained model in a world
    smal eval-recognition score labeled queries, print PR points as CSV
    smal serve            host the teleoperation service
"""

import argparse
import sys
from pathlib import Path

from .errors import NoPathError
from .pipeline import (
    TrainConfig,
    evaluate_recognition,
    load_demo,
    load_model,
    record_demo,
    save_demo,
    save_model,
    train,
)
from .sim import load_world, run_episode, scripted_expert
from .solver import SolverConfig
from .state_space import MatchConfig


def _demo_archives(directory: Path):
    paths = sorted(directory.glob("*.zip"))
    if not paths:
        raise SystemExit(f"no demonstration archives (*.zip) in {directory}")
    return [load_demo(p) for p in paths]


def _cmd_demo(args) -> int:
    world = load_world(args.world)
    if not args.scripted:
        raise SystemExit("live recording runs through `smal serve`; pass --scripted")
    try:
        demo = record_demo(world, pad_to=args.pad_to,
                           metadata={"world": str(args.world)})
    except NoPathError as exc:
        raise SystemExit(f"cannot record: {exc}")
    save_demo(demo, args.out)
    print(f"recorded {len(demo.k_stream)} atoms "
          f"({len(demo.frames)} frames) to {args.out}")
    return 0


def _cmd_train(args) -> int:
    demos = _demo_archives(Path(args.demos))
    cfg = TrainConfig(
        seq_len=args.l,
        match=MatchConfig(tau=args.tau, solver=SolverConfig(
            lambda1=args.lambda1, lambda2=args.lambda2)),
        bootstrap_pad=not args.no_bootstrap,
    )
    model = train(demos, cfg)
    save_model(model, args.out)
    print(f"trained on {len(demos)} demos: {model.space.num_states} states, "
          f"{model.mdp.num_actions} actions -> {args.out}")
    return 0


def _cmd_run(args) -> int:
    model = load_model(args.model)
    world = load_world(args.world)
    budget = args.budget
    if budget is None:
        try:
            budget = 4 * max(len(scripted_expert(world)), model.seq_len)
        except NoPathError:
            raise SystemExit("no path to the victim; pass an explicit --budget")
    print("trial,success,steps,collisions")
    successes = 0
    for trial in range(1, args.trials + 1):
        result = run_episode(world, model, budget=budget)
        successes += result.success
        print(f"{trial},{'yes' if result.success else 'no'},"
              f"{result.steps},{result.collision_count}")
    rate = successes / args.trials
    print(f"success rate: {rate:.2f} ({successes}/{args.trials})")
    return 0 if successes == args.trials else 1


def _cmd_eval_recognition(args) -> int:
    model = load_model(args.model)
    queries = _demo_archives(Path(args.queries))
    report = evaluate_recognition(model, queries)
    print("threshold,precision,recall")
    for threshold, precision, recall in report.pr_points():
        print(f"{threshold:.6f},{precision:.6f},{recall:.6f}")
    print(f"top1 accuracy: {report.accuracy:.4f} over {len(report.queries)} queries",
          file=sys.stderr)
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(load_world(args.world), tick_hz=args.tick_hz,
                     demo_dir=args.demo_dir)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="smal",
        description="Sequence-based state learning from demonstrations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("demo", help="record a scripted demonstration")
    p.add_argument("--world", required=True, help="world file")
    p.add_argument("--out", required=True, help="demo archive to write")
    p.add_argument("--scripted", action="store_true",
                   help="use the built-in shortest-path expert")
    p.add_argument("--pad-to", type=int, default=None, metavar="N",
                   help="pad the atom stream to a multiple of N by spinning in place")
    p.set_defaults(fn=_cmd_demo)

    p = sub.add_parser("train", help="train a model from demo archives")
    p.add_argument("--demos", required=True, help="directory of demo archives")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--l", type=int, default=4, help="frames per window")
    p.add_argument("--lambda1", type=float, default=0.6,
                   help="weight of the row-group sparsity term")
    p.add_argument("--lambda2", type=float, default=0.6,
                   help="weight of the structured column term")
    p.add_argument("--tau", type=float, default=None,
                   help="match threshold (default: half the window length)")
    p.add_argument("--no-bootstrap", action="store_true",
                   help="do not front-pad demos with copies of the first frame")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("run", help="execute a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--budget", type=int, default=None,
                   help="atom budget per episode (default: 4x expert path)")
    p.add_argument("--trials", type=int, default=1)
    p.set_defaults(fn=_cmd_run)

    p = sub.add_parser("eval-recognition",
                       help="identify labeled queries, print PR CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--queries", required=True,
                   help="directory of labeled demo archives")
    p.set_defaults(fn=_cmd_eval_recognition)

    p = sub.add_parser("serve", help="host the teleoperation service")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--world", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--tick-hz", type=float, default=10.0)
    p.add_argument("--demo-dir", default="demos",
                   help="directory for recorded demonstrations")
    p.set_defaults(fn=_cmd_serve)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
