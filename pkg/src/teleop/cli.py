"""Command-line entry points: the server and the evaluation harness."""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path


def _setup_logging():
    level = os.environ.get("TELEOP_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=getattr(logging, level, logging.INFO),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def server_main(argv=None):
    _setup_logging()
    parser = argparse.ArgumentParser(prog="teleop-server",
                                     description="Simulated desktop teleoperation server")
    sub = parser.add_subparsers(dest="command")

    serve = sub.add_parser("serve", help="run the TCP endpoint (default)")
    _add_serve_args(serve)

    detect = sub.add_parser("detect", help="offline desktop detection")
    detect.add_argument("--cloud", required=True, help="point-cloud file (ascii or binary)")
    detect.add_argument("--out", required=True, help="mesh output file")
    detect.add_argument("--seed", type=int, default=0)
    detect.add_argument("--cell", type=float, default=0.02)
    detect.add_argument("--dist-threshold", type=float, default=0.01)
    detect.add_argument("--min-inliers", type=int, default=500)

    replay = sub.add_parser("replay", help="re-run a recorded session")
    replay.add_argument("--log", required=True, help="session log recorded with --record")
    replay.add_argument("--scene", required=True)
    replay.add_argument("--metrics", default=None)

    # no subcommand: behave like `serve`
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv or argv[0].startswith("-"):
        argv.insert(0, "serve")
    args = parser.parse_args(argv)

    if args.command == "detect":
        return _run_detect(args)
    if args.command == "replay":
        return _run_replay(args)
    return _run_serve(args)


def _add_serve_args(p):
    p.add_argument("--scene", required=True, help="scene file")
    p.add_argument("--cloud", default=None, help="point cloud for DesktopDetection")
    p.add_argument("--port", type=int, default=7447)
    p.add_argument("--http-port", type=int, default=None,
                   help="serve the browser console and /ws bridge on this port")
    p.add_argument("--console-dir", default=None,
                   help="static console bundle (defaults to ./frontend/dist if present)")
    p.add_argument("--metrics", default=None, help="append metrics records here")
    p.add_argument("--record", default=None, help="record inbound frames for replay")
    clock = p.add_mutually_exclusive_group()
    clock.add_argument("--sim-clock", dest="sim_clock", action="store_true")
    clock.add_argument("--wall-clock", dest="sim_clock", action="store_false")
    p.set_defaults(sim_clock=False)
    p.add_argument("--seed", type=int, default=0)


def _run_serve(args):
    from .server import TeleopServer

    server = TeleopServer(args.scene, cloud_path=args.cloud, port=args.port,
                          metrics_path=args.metrics, sim_clock=args.sim_clock,
                          seed=args.seed, record_path=args.record)
    server.start()
    web = None
    if args.http_port is not None:
        from .web import ConsoleWebServer
        static_dir = args.console_dir
        if static_dir is None and Path("frontend/dist").is_dir():
            static_dir = "frontend/dist"
        web = ConsoleWebServer(server, port=args.http_port, static_dir=static_dir).start()
        print(f"console: http://127.0.0.1:{web.port}/console/")
    print(f"listening on port {server.port} "
          f"({'simulated' if args.sim_clock else 'wall'} clock); Ctrl-C to stop")
    try:
        while True:
            time.sleep(1.0)
    except KeyboardInterrupt:
        pass
    finally:
        if web is not None:
            web.stop()
        server.stop()
    return 0


def _run_detect(args):
    from .desktop import DesktopError, DetectParams, detect_desktop
    from .fileformats import load_point_cloud

    cloud = load_point_cloud(args.cloud)
    params = DetectParams(seed=args.seed, cell=args.cell,
                          dist_threshold=args.dist_threshold,
                          min_inliers=args.min_inliers)
    try:
        mesh = detect_desktop(cloud, params)
    except DesktopError as exc:
        print(f"detection failed: {exc}", file=sys.stderr)
        return 1
    lines = ["[desktop]"]
    n = mesh.normal
    lines.append(f"plane {n[0]:.9g} {n[1]:.9g} {n[2]:.9g} {mesh.offset:.9g}")
    lines.append("boundary " + " ".join("%.9g %.9g" % (x, y) for x, y in mesh.boundary))
    lines.append("")
    lines.append("[triangles]")
    for a, b, c in mesh.triangles:
        lines.append(f"{a} {b} {c}")
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"plane normal ({n[0]:.4f}, {n[1]:.4f}, {n[2]:.4f}), offset {mesh.offset:.4f} m, "
          f"boundary area {mesh.area():.4f} m^2, {len(mesh.triangles)} triangles -> {args.out}")
    return 0


def _run_replay(args):
    from .server import replay_session

    server = replay_session(args.scene, args.log, metrics_path=args.metrics)
    print(f"replayed to sim time {server.clock.now():.2f} s")
    server.stop()
    return 0


def eval_main(argv=None):
    _setup_logging()
    parser = argparse.ArgumentParser(prog="teleop-eval",
                                     description="Scripted task evaluation over the wire protocol")
    parser.add_argument("--fixtures", required=True, help="directory of *.scene/*.goals pairs")
    parser.add_argument("--mode", choices=["hsi", "ee", "both"], default="both")
    parser.add_argument("--out", required=True, help="report output directory")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    from .harness import discover_fixtures, run_fixture, write_report

    fixtures = discover_fixtures(args.fixtures)
    if not fixtures:
        print(f"no fixtures found in {args.fixtures}", file=sys.stderr)
        return 1
    modes = ["hsi", "ee"] if args.mode == "both" else [args.mode]
    records = []
    for fixture in fixtures:
        for mode in modes:
            run = run_fixture(fixture, mode, seed=args.seed)
            records.append(run.record)
            print(f"{fixture.label} {mode}: {run.record.outcome}, "
                  f"completion {run.record.completion_time:.2f} s, "
                  f"interaction {run.record.interaction_time:.2f} s")
    paths = write_report(records, args.out)
    print(f"report: {paths['table']}")
    for fig in paths["figures"]:
        print(f"figure: {fig}")
    return 0


if __name__ == "__main__":
    sys.exit(server_main())
