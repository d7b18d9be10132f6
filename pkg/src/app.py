import argparse
import asyncio
import json
import sys
from pathlib import Path
from typing import Optional

import polars as pl
from fastmcp.utilities.logging import configure_logging

from src.utils.server_config import mcp
from src.utils.run_config import RunConfig
from src.tools import convergence, quadrature, solve, stability, utils # noqa: F401
from src.prompts import prompts # noqa: F401
from src.vtd import numkernel as nk
from src.vtd.analysis import run_convergence_study
from src.vtd.errors import ConfigError, OutputError, VtdError


async def _log_registered_tools():
    """Log the registered tools for debugging."""
    print("🔧 Registered MCP Tools:", file=sys.stderr)
    try:
        tools = await mcp.get_tools()
        if tools:
            print(f"✅ Found {len(tools)} registered tools:", file=sys.stderr)
            for i, name in enumerate(tools, 1):
                print(f"\t{i}. {name}", file=sys.stderr)
            print(file=sys.stderr)
            return
    except Exception as e:
        print(f"❌ Error getting tools: {e}\n", file=sys.stderr)
    print("⚠️ Could not retrieve registered tools\n", file=sys.stderr)


def _add_run_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--problem", help="Builtin problem: ex1, ex2 or dahlquist[:lambda].")
    parser.add_argument("--config", help="JSON file describing an affine-linear problem.")
    parser.add_argument("--r", type=int, default=1, help="Trial polynomial degree (default: 1).")
    parser.add_argument("--k", type=int, default=0, help="Smoothness parameter (default: 0).")
    parser.add_argument("--integrator", default="assoc", help="assoc, exact or q<rho>,<kappa> (default: assoc).")
    parser.add_argument("--t-end", type=float, help="End time replacing the problem's default.")
    parser.add_argument("--method", choices=["vtd", "collocation"], default="vtd", help="Solver (default: vtd).")
    parser.add_argument("--postprocess", choices=["jump", "residual"], help="Postprocessing variant.")
    parser.add_argument("--pp-steps", type=int, default=1, help="Number of postprocessing steps (default: 1).")


def _add_output_arguments(parser: argparse.ArgumentParser):
    parser.add_argument("--format", choices=["json", "csv"], default="json", help="Output format (default: json).")
    parser.add_argument("--json", dest="format", action="store_const", const="json", help="Shortcut for --format json.")
    parser.add_argument("--csv", dest="format", action="store_const", const="csv", help="Shortcut for --format csv.")
    parser.add_argument("--out", help="Output file (default: stdout).")
    parser.add_argument("--precision", choices=["double", "extended"], default="double", help="Scalar type (default: double).")
    parser.add_argument("--bits", type=int, default=256, help="Mantissa bits in extended precision (default: 256).")
    parser.add_argument(
        "--debug",
        choices=["True", "False"],
        default="False",
        help="Enable debug logging."
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Variational time discretizations VTD(r,k): rules, solves, convergence studies and the MCP server.")
    commands = parser.add_subparsers(dest="subcommand", required=True)

    quadrature_parser = commands.add_parser("quadrature", help="Build the rule Q^{r,k} and check its exactness.")
    quadrature_parser.add_argument("--r", type=int, default=1, help="Rule parameter r (default: 1).")
    quadrature_parser.add_argument("--k", type=int, default=0, help="Rule parameter k (default: 0).")
    _add_output_arguments(quadrature_parser)

    solve_parser = commands.add_parser("solve", help="Solve one problem on a uniform mesh.")
    _add_run_arguments(solve_parser)
    solve_parser.add_argument("--steps", type=int, help="Number of uniform time steps.")
    solve_parser.add_argument("--samples-per-interval", type=int, default=11, help="Samples per interval (default: 11).")
    _add_output_arguments(solve_parser)

    convergence_parser = commands.add_parser("convergence", help="Errors and eoc over a doubling list of N.")
    _add_run_arguments(convergence_parser)
    convergence_parser.add_argument("--n", help="Comma-separated doubling list of N (e.g., 32,64,128).")
    convergence_parser.add_argument("--cascade", type=int, default=0, help="Interpolation cascade depth (default: 0).")
    convergence_parser.add_argument("--workers", type=int, default=1, help="Worker processes (default: 1).")
    _add_output_arguments(convergence_parser)

    serve_parser = commands.add_parser("serve", help="Run the MCP server.")
    serve_parser.add_argument(
        "--transport",
        choices=["stdio", "streamable-http", "sse"],
        default="stdio",
        help="Transport method for the server (default: stdio)."
    )
    serve_parser.add_argument("--host", default="0.0.0.0", help="Host to bind the server to (default: 0.0.0.0).")
    serve_parser.add_argument("--port", type=int, default=8000, help="Port to bind the server to (default: 8000).")
    serve_parser.add_argument("--path", required=False, help="Mount path for HTTP/SSE (default /mcp or /sse).")
    serve_parser.add_argument(
        "--debug",
        choices=["True", "False"],
        default="False",
        help="Enable debug mode."
    )
    return parser


def _parse_n_list(raw: Optional[str]) -> Optional[list[int]]:
    if raw is None:
        return None
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError(f"--n must be a comma-separated list of integers, got '{raw}'") from e


def run_config_from_args(args: argparse.Namespace) -> RunConfig:
    values = {
        key: value for key, value in vars(args).items()
        if key not in ("debug", "n") and value is not None
    }
    if args.subcommand == "convergence":
        values["n_list"] = _parse_n_list(args.n)
    return RunConfig.build(**values)


def _quadrature_output(config: RunConfig) -> str:
    payload = utils.quadrature_payload(config.r, config.k)
    if config.format == "json":
        return json.dumps(payload, indent=2)
    rows = [{"kind": "left", "order": i, "node": payload["nodes"][0], "weight": w} for i, w in enumerate(payload["left_weights"])]
    rows += [
        {"kind": "interior", "order": 0, "node": x, "weight": w}
        for x, w in zip(payload["interior_nodes"], payload["interior_weights"])
    ]
    rows += [{"kind": "right", "order": i, "node": payload["nodes"][-1], "weight": w} for i, w in enumerate(payload["right_weights"])]
    return pl.DataFrame(rows).write_csv()


def _solve_output(config: RunConfig) -> str:
    payload = utils.solve_payload(
        config.load_problem(),
        config.vtd_config(),
        config.steps,
        method=config.method,
        postprocess=config.postprocess_mode(),
        samples_per_interval=config.samples_per_interval,
    )
    if config.format == "json":
        return json.dumps(payload, indent=2)
    frame = pl.DataFrame(payload["samples"])
    if "postprocess" in payload:
        frame = frame.hstack(pl.DataFrame(payload["postprocess"]["samples"]).drop("t"))
    return frame.write_csv()


def _convergence_output(config: RunConfig) -> str:
    report = run_convergence_study(
        config.load_problem(),
        config.vtd_config(),
        config.n_list,
        postprocess=config.postprocess_mode(),
        cascade=config.cascade,
        workers=config.workers,
        method=config.method,
    )
    if config.format == "json":
        return json.dumps(report.to_dict(), indent=2)
    return report.summary_table().write_csv()


def render(config: RunConfig) -> str:
    """Run the subcommand in the requested precision and return its output text."""
    previous = nk.active().config
    nk.configure(config.precision_config())
    try:
        if config.subcommand == "quadrature":
            return _quadrature_output(config)
        if config.subcommand == "solve":
            return _solve_output(config)
        return _convergence_output(config)
    finally:
        nk.configure(previous)


def run(config: RunConfig) -> int:
    text = render(config)
    if config.out:
        try:
            Path(config.out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")
        except OSError as e:
            raise OutputError(f"Could not write '{config.out}': {e.strerror or e}", path=config.out) from e
    else:
        print(text.rstrip("\n"))
    return 0


def serve(args: argparse.Namespace):
    if args.transport == "sse" and args.path is None:
        args.path = "/sse"
    elif args.transport == "streamable-http" and args.path is None:
        args.path = "/mcp"
    elif args.transport == "stdio":
        args.path = None
    debug = args.debug != "False"

    if debug:
        asyncio.run(_log_registered_tools())

    if args.transport == "stdio":
        mcp.run(
            transport=args.transport,
            show_banner=debug,
        )
    else:
        if debug:
            print(f"Starting MCP server in {args.transport} mode at http://{args.host}:{args.port}{args.path}", file=sys.stderr)
        mcp.run(
            transport=args.transport,
            path=args.path,
            host=args.host,
            port=args.port,
            show_banner=debug,
        )


def _report(error: VtdError):
    print(json.dumps(error.to_dict()), file=sys.stderr)


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(level="DEBUG" if args.debug == "True" else "WARNING")
    if args.subcommand == "serve":
        serve(args)
        return 0
    try:
        return run(run_config_from_args(args))
    except ConfigError as e:
        _report(e)
        return 2
    except VtdError as e:
        _report(e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
