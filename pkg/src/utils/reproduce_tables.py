import argparse
from pathlib import Path
from typing import Optional

import polars as pl
from fastmcp.utilities.logging import configure_logging, get_logger

from src.vtd import numkernel as nk
from src.vtd.analysis import ConvergenceReport, run_convergence_study
from src.vtd.postprocess import PostprocessMode
from src.vtd.problem import builtin
from src.vtd.solver import VtdConfig

logger = get_logger(__name__)

SCALES = {
    "desk": {"precision": nk.PrecisionConfig(mode="double"),
             "single": {"table1_dg": (2, 0), "table2_k_below_r": (3, 2), "table3_k_equals_r": (3, 3)}, "ex1_t_end": None,
             "ex1_n": [32, 64, 128, 256], "ex2_n": [8, 16, 32, 64],
             "cascade_r": 3, "multi_r": 4},
    "full": {"precision": nk.PrecisionConfig(mode="extended", bits=512),
             "single": {"table1_dg": (6, 0), "table2_k_below_r": (6, 5), "table3_k_equals_r": (6, 6)}, "ex1_t_end": None,
             "ex1_n": [128, 256, 512, 1024, 2048, 4096, 8192],
             "ex2_n": [25, 50], "cascade_r": 7, "multi_r": 9},
}


def _steps_table(report: ConvergenceReport) -> pl.DataFrame:
    """Errors on the finest mesh and their eoc, one row per number of postprocessing steps."""
    finest = report.errors.filter(pl.col("N") == report.errors["N"].max())
    orders = report.eoc.filter(pl.col("N") == report.eoc["N"].max())
    return finest.join(orders, on="steps", suffix="_eoc").drop(["N", "N_eoc"])


def _order_grid(reports: dict[int, ConvergenceReport], max_steps: int) -> pl.DataFrame:
    """eoc of the derivative L2 error per k (rows) and steps (columns)."""
    rows = []
    for k, report in reports.items():
        row = {"k": k}
        for s in range(max_steps + 1):
            row[f"s={s}"] = report.final_eoc("l2_deriv", s) if s <= report.max_steps else None
        rows.append(row)
    return pl.DataFrame(rows, schema={"k": pl.Int64, **{f"s={s}": pl.Float64 for s in range(max_steps + 1)}})


def write_tables(scale: dict, out_dir: Path, workers: int = 1) -> list[Path]:
    """Run every study of ``scale`` in its precision and write one CSV per table."""
    previous = nk.active().config
    nk.configure(scale["precision"])
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    try:
        ex1, ex2 = builtin("ex1"), builtin("ex2")
        if scale.get("ex1_t_end") is not None:
            ex1 = ex1.with_interval(t_end=scale["ex1_t_end"])
        for name, (r, k) in scale["single"].items():
            logger.info(f"{name}: ex1 with VTD({r},{k})")
            report = run_convergence_study(
                ex1, VtdConfig(r=r, k=k), scale["ex1_n"],
                postprocess=PostprocessMode(variant="jump", steps=1),
                workers=workers,
            )
            written.append(out_dir / f"{name}.csv")
            report.summary_table().write_csv(written[-1])

        r = scale["cascade_r"]
        logger.info(f"table4_cascade: ex2 with VTD({r},0) and the full cascade")
        report = run_convergence_study(
            ex2, VtdConfig(r=r, k=0), scale["ex2_n"],
            postprocess=PostprocessMode(variant="jump", steps=r + 1),
            cascade=r,
            workers=workers,
        )
        written.append(out_dir / "table4_cascade.csv")
        _steps_table(report).write_csv(written[-1])

        reports = {}
        for k in range(r + 1):
            reports[k] = run_convergence_study(
                ex2, VtdConfig(r=r, k=k), scale["ex2_n"],
                postprocess=PostprocessMode(variant="jump", steps=r + 1 - k),
                cascade=r - k,
                workers=workers,
            )
        written.append(out_dir / "table5_cascade_all_k.csv")
        _order_grid(reports, r + 1).write_csv(written[-1])

        r = scale["multi_r"]
        for variant in ("jump", "residual"):
            logger.info(f"table_{variant}: ex2 with VTD({r},k) and multi-step {variant} postprocessing")
            reports = {
                k: run_convergence_study(
                    ex2, VtdConfig(r=r, k=k), scale["ex2_n"],
                    postprocess=PostprocessMode(variant=variant, steps=r + 1 - k),
                    workers=workers,
                )
                for k in range(r + 1)
            }
            number = 6 if variant == "jump" else 7
            written.append(out_dir / f"table{number}_{variant}.csv")
            _order_grid(reports, r + 1).write_csv(written[-1])
    finally:
        nk.configure(previous)
    return written


def main(argv: Optional[list[str]] = None):
    parser = argparse.ArgumentParser(description="Write the convergence tables as CSV files.")
    parser.add_argument("--scale", choices=sorted(SCALES), default="desk", help="Reduced orders in double or full orders in extended precision (default: desk).")
    parser.add_argument("--out-dir", default="data", help="Output directory (default: data).")
    parser.add_argument("--workers", type=int, default=1, help="Worker processes per study (default: 1).")
    args = parser.parse_args(argv)

    configure_logging(level="INFO")
    for path in write_tables(SCALES[args.scale], Path(args.out_dir), workers=args.workers):
        logger.info(f"Wrote {path}")


if __name__ == "__main__":
    main()
