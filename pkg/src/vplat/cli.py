"""Command line entry points: vp run | serve | props."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .config import ConfigError, SOURCE_API, SOURCE_FILE, parse_file
from .platform import (
    OUTCOME_FINISHED,
    OUTCOME_LIMIT,
    BuildError,
    Platform,
    property_catalog,
)

EXIT_LIMIT = 124
EXIT_KILLED = 125
EXIT_USAGE = 2


def _build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vp", description="virtual platform runner")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute one headless simulation")
    run_p.add_argument("--config", metavar="FILE", help="property file (name = value lines)")
    run_p.add_argument("--set", dest="sets", metavar="NAME=VALUE", action="append",
                       default=[], help="override one property (repeatable)")
    run_p.add_argument("--image", metavar="FILE", help="firmware image (sets sw.image)")
    run_p.add_argument("--gdb-port", type=int, metavar="N",
                       help="enable the GDB stub on port N (-1 = auto)")
    run_p.add_argument("--gdb-wait", action="store_true",
                       help="hold execution until a debugger attaches")
    run_p.add_argument("--trace", action="store_true", help="write trace.vcd")
    run_p.add_argument("--workdir", metavar="DIR", default="vp-out",
                       help="artifact directory (default: vp-out)")
    run_p.add_argument("--quiet", action="store_true",
                       help="do not echo the console capture to stdout")

    serve_p = sub.add_parser("serve", help="run the session-manager REST service")
    serve_p.add_argument("--host", default="0.0.0.0")
    serve_p.add_argument("--port", type=int, default=8000)
    serve_p.add_argument("--max-sessions", type=int, default=16)
    serve_p.add_argument("--base-dir", metavar="DIR", default=None,
                         help="root for per-session working directories")

    sub.add_parser("props", help="print the property catalog")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    props = property_catalog()
    try:
        if args.config:
            props.apply(parse_file(Path(args.config).read_text()), SOURCE_FILE)
        for item in args.sets:
            name, sep, value = item.partition("=")
            if not sep:
                print(f"vp run: --set expects NAME=VALUE, got {item!r}", file=sys.stderr)
                return EXIT_USAGE
            props.set(name.strip(), value.strip(), SOURCE_API)
        if args.image:
            props.set("sw.image", args.image, SOURCE_API)
        if args.gdb_port is not None:
            props.set("gdb.port", args.gdb_port, SOURCE_API)
        if args.gdb_wait:
            props.set("gdb.wait", True, SOURCE_API)
        if args.trace:
            props.set("trace.enable", True, SOURCE_API)
        platform = Platform(props, args.workdir)
    except (ConfigError, BuildError, OSError) as exc:
        print(f"vp run: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if platform.gdb_port is not None:
        print(f"gdb stub listening on port {platform.gdb_port}", file=sys.stderr)
    if platform.uart_port is not None:
        print(f"console stream on port {platform.uart_port}", file=sys.stderr)

    report = platform.run()
    if not args.quiet:
        sys.stdout.buffer.write(bytes(platform.uart.capture))
        sys.stdout.buffer.flush()
    print(
        f"vp run: {report.outcome}"
        + (f" exit={report.exit_code}" if report.exit_code is not None else "")
        + f" instructions={report.instructions} cycles={report.cycles}"
        + f" sim_time={report.sim_time_ps} ps wall={report.wall_time_ms:.1f} ms"
        + f" artifacts={args.workdir}",
        file=sys.stderr,
    )
    if report.outcome == OUTCOME_FINISHED:
        return report.exit_code or 0
    if report.outcome == OUTCOME_LIMIT:
        return EXIT_LIMIT
    return EXIT_KILLED


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .manager import SessionManager
    from .service import create_app

    manager = SessionManager(base_dir=args.base_dir, max_running=args.max_sessions)
    app = create_app(manager)
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def _cmd_props() -> int:
    for spec in property_catalog().specs():
        default = f'"{spec.default}"' if isinstance(spec.default, str) else spec.default
        if isinstance(spec.default, bool):
            default = "true" if spec.default else "false"
        print(f"{spec.name:24} {spec.type:8} default={default!s:12} {spec.description}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_arg_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    if args.command == "serve":
        return _cmd_serve(args)
    return _cmd_props()


if __name__ == "__main__":
    sys.exit(main())
