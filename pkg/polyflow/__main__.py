import sys
from pathlib import Path

import click
import numpy as np
import pandas as pd
from dotenv import load_dotenv
from loguru import logger
from tqdm import tqdm

from polyflow.config import (
    RUNS_DIR,
    SNAPSHOT_DIR,
    RunConfig,
    build_law,
    build_polygon,
    build_solver,
    check_flow,
    load_config,
    prepare_output_dir,
)
from polyflow.convergence import eoc_study, self_similar_pcf
from polyflow.errors import ConfigError, FlowError, ReferenceUnavailable
from polyflow.export import TRAJECTORY_NAME, write_eoc_csv, write_summary_csv
from polyflow.flows import lipschitz_probe, speed_bound, step_from_bounds
from polyflow.geometry import validate
from polyflow.stepper import run
from polyflow.svg import Viewport, render_svg
from polyflow.trajectory import Termination

load_dotenv()

EXIT_TERMINATED = 2
EXIT_CONFIG = 3


def configure_logging(log_level: str = "INFO"):
    """Configure logger with specified level."""
    logger.remove()
    logger.add(sys.stderr, level=log_level)


def _load(config_path: Path) -> RunConfig:
    try:
        return load_config(config_path)
    except ConfigError as e:
        logger.error(f"Invalid config {config_path}: {e}")
        sys.exit(EXIT_CONFIG)


def _default_out_dir(config_path: Path, out_dir: Path | None) -> Path:
    return out_dir if out_dir is not None else config_path.parent / "output"


def _viewport(cfg: RunConfig, p0) -> Viewport:
    box = cfg.output["viewport"]
    return Viewport.around(p0) if box == "initial" else Viewport(*box)


@click.group(context_settings={"auto_envvar_prefix": "POLYFLOW"})
@click.option(
    "--log-level", default="INFO", help="Logging level (DEBUG, INFO, WARNING, ERROR)"
)
@click.option("--quiet", is_flag=True, help="Only warnings and errors, no progress bars")
@click.option("--seed", type=int, default=None, help="Seed for Lipschitz probe sampling")
@click.pass_context
def cli(ctx, log_level, quiet, seed):
    """Evolve polygons with fixed normal directions."""
    ctx.ensure_object(dict)
    ctx.obj["quiet"] = quiet
    ctx.obj["seed"] = seed
    configure_logging("WARNING" if quiet else log_level)


@cli.command("run")
@click.argument("config_path", type=click.Path(path_type=Path))
@click.option(
    "--out-dir",
    type=click.Path(path_type=Path),
    envvar="POLYFLOW_OUT_DIR",
    default=None,
    help="Where to write results (default: <config dir>/output)",
)
@click.pass_context
def cmd_run(ctx, config_path: Path, out_dir: Path | None):
    """Run one evolution and write trajectory, summary and snapshots."""
    cfg = _load(config_path)
    try:
        p0 = build_polygon(cfg)
        law = build_law(cfg)
        solver = build_solver(cfg)
        check_flow(cfg, p0, law)
    except ConfigError as e:
        logger.error(f"Invalid config {config_path}: {e}")
        sys.exit(EXIT_CONFIG)

    out_dir = prepare_output_dir(_default_out_dir(config_path, out_dir))
    viewport = _viewport(cfg, p0)
    every = cfg.output["snapshot_every"]
    snapshots = out_dir / SNAPSHOT_DIR
    counter = {"records": 0, "frames": 0}
    bar = tqdm(total=cfg.t_end, disable=ctx.obj["quiet"], desc="t", unit="")

    def on_record(record, polygon):
        if counter["records"] % every == 0:
            render_svg(polygon, viewport, snapshots / f"frame_{counter['frames']:05d}.svg", t=record.t)
            counter["frames"] += 1
        counter["records"] += 1
        bar.update(record.t - bar.n)

    trajectory = run(p0, law, solver, cfg.t_end, on_record=on_record)
    bar.close()

    if (counter["records"] - 1) % every != 0:
        render_svg(
            trajectory.polygon(-1),
            viewport,
            snapshots / f"frame_{counter['frames']:05d}.svg",
            t=trajectory.final.t,
        )
    trajectory.save(out_dir / TRAJECTORY_NAME)
    write_summary_csv(trajectory, out_dir)

    click.echo(f"termination: {trajectory.reason}")
    if trajectory.reason is not Termination.COMPLETED:
        logger.warning(f"Stopped at t={trajectory.final.t:.6g} before t_end={cfg.t_end:g}")
        sys.exit(EXIT_TERMINATED)
    logger.success(f"Wrote {len(trajectory)} records to {out_dir}")


@cli.command("converge")
@click.argument("config_path", type=click.Path(path_type=Path))
@click.option(
    "--out-dir",
    type=click.Path(path_type=Path),
    envvar="POLYFLOW_OUT_DIR",
    default=None,
    help="Where to write results (default: <config dir>/output)",
)
@click.pass_context
def cmd_converge(ctx, config_path: Path, out_dir: Path | None):
    """Measure the experimental order of convergence over the configured step sizes."""
    cfg = _load(config_path)
    try:
        if cfg.convergence is None:
            raise ConfigError("convergence", "required for the converge command")
        conv = cfg.convergence
        p0 = build_polygon(cfg)
        law = build_law(cfg)
        base = build_solver(cfg, tau=conv["taus"][0])
        check_flow(cfg, p0, law)
        exact = None
        if "exact" in conv["reference"]:
            if cfg.flow != "pcf":
                raise ConfigError("convergence.reference.exact", "self_similar_pcf needs flow pcf")
            exact = self_similar_pcf(p0)
    except (ConfigError, ReferenceUnavailable) as e:
        logger.error(f"Invalid config {config_path}: {e}")
        sys.exit(EXIT_CONFIG)

    out_dir = prepare_output_dir(_default_out_dir(config_path, out_dir))
    runs_dir = out_dir / RUNS_DIR
    runs_dir.mkdir(exist_ok=True)
    try:
        table = eoc_study(
            p0,
            law,
            base,
            cfg.t_end,
            conv["taus"],
            exact=exact,
            tau_ref=conv["reference"].get("tau"),
            reference_scheme=conv["reference_scheme"],
            workers=conv["workers"],
            progress=not ctx.obj["quiet"],
            runs_dir=runs_dir,
        )
    except ReferenceUnavailable as e:
        logger.error(f"No usable reference: {e}")
        sys.exit(EXIT_CONFIG)

    path = write_eoc_csv(table, out_dir)
    click.echo("order")
    for order in table["order"]:
        click.echo("" if np.isnan(order) else f"{order:.4f}")
    logger.success(f"EOC table written to {path}")


@cli.command("info")
@click.argument("config_path", type=click.Path(path_type=Path))
@click.option("--samples", default=200, help="Sampled pairs for the Lipschitz probe")
@click.pass_context
def cmd_info(ctx, config_path: Path, samples: int):
    """Print class coefficients, area speed and a suggested step for the configured flow."""
    cfg = _load(config_path)
    try:
        p0 = build_polygon(cfg)
        law = build_law(cfg)
        check_flow(cfg, p0, law)
    except ConfigError as e:
        logger.error(f"Invalid config {config_path}: {e}")
        sys.exit(EXIT_CONFIG)

    pclass = p0.pclass
    table = pd.DataFrame(pclass.coefficient_table())
    table.insert(0, "edge", range(pclass.n))
    table["h"] = p0.h
    table["length"] = p0.edge_lengths()
    click.echo(table.to_string(index=False))
    click.echo(f"C* = {pclass.c_star:.12g}")
    mu = law.area_speed(pclass)
    click.echo(f"mu ({law.describe()}) = " + ("none" if mu is None else f"{mu:.12g}"))
    click.echo(f"area = {p0.area():.12g}, length = {p0.total_length():.12g}")

    report = validate(p0, cfg.solver["min_edge"])
    radius = 0.5 * report.rho_lower
    rng = np.random.default_rng(ctx.obj["seed"])
    try:
        lip = lipschitz_probe(law, p0, 0.0, radius, samples, rng)
        speed = speed_bound(law, p0, 0.0, radius, samples, rng)
    except FlowError as e:
        logger.warning(f"Could not sample around the initial polygon: {e}")
        return
    click.echo(f"ball radius = {radius:.6g}, L >= {lip:.6g}, M >= {speed:.6g}")
    tau = step_from_bounds(radius, cfg.solver["lambda"], lip, speed)
    click.echo(f"suggested tau <= {tau:.6g}")


if __name__ == "__main__":
    cli()
