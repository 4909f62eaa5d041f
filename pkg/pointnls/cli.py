"""Command line entry point: run the charge solver and the threshold, virial and sweep workflows."""

import functools
import json
import logging
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np
import pandas as pd

from pointnls import PointNLSError
from pointnls.analysis import GaussianFamily, sigma_sweep
from pointnls.charge import SolverConfig, solve_charge
from pointnls.config import RunConfig, load_config
from pointnls.logging import create_log
from pointnls.observables import observable_series, virial_report
from pointnls.propagator import forcing
from pointnls.specfun import macdonald_k0, sici, volterra_I, volterra_N, volterra_N1
from pointnls.states import ModelParams, datum_energy, lambda_threshold, standing_wave, standing_wave_energy

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
SWEEP_COLUMNS = ["sigma", "beta", "E0", "Lambda", "certified", "glassey_T", "observed_T", "status"]
_LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


@dataclass
class Session:
    config: RunConfig | None
    output_dir: Path

    def require_config(self) -> RunConfig:
        if self.config is None:
            raise click.UsageError("this command needs --config")
        return self.config

    def params(self) -> ModelParams:
        return self.require_config().solver_params()


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("w", dir=path.parent, prefix=f".{path.name}.", delete=False,
                                     encoding="utf-8", newline="") as handle:
        handle.write(text)
        tmp = handle.name
    os.replace(tmp, path)
    logger.info("Wrote %s", path)


def write_csv(frame: pd.DataFrame, path: Path) -> None:
    _atomic_write(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))


def write_json(payload, path: Path) -> str:
    text = json.dumps(payload, indent=2) + "\n"
    _atomic_write(path, text)
    return text


def _surface_errors(command):
    """Turn package errors into a nonzero exit with the raising module in the message."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except PointNLSError as exc:
            where = f"{type(exc).__module__}.{type(exc).__name__}"
            logger.error("%s: %s", where, exc)
            raise click.ClickException(f"{where}: {exc}")

    return wrapper


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              default=None, help="Run configuration (flat key = value document or JSON)")
@click.option("--output-dir", type=click.Path(file_okay=False, path_type=Path), default=None,
              help="Directory for results and logs; overrides output_dir of the configuration")
@click.option("--log-level", type=click.Choice(_LOG_LEVELS, case_sensitive=False), default="INFO",
              show_default=True, help="Console log level")
@click.pass_context
def main(ctx: click.Context, config_path: Path | None, output_dir: Path | None, log_level: str):
    """Numerical lab for the 2D Schrödinger equation with a point-concentrated nonlinearity."""
    config = None
    if config_path is not None:
        try:
            config = load_config(config_path)
        except PointNLSError as exc:
            raise click.ClickException(str(exc))
    if output_dir is None:
        output_dir = config.output.directory if config else Path("results")
    create_log(logging_dir=output_dir, console_level=getattr(logging, log_level.upper()))
    ctx.obj = Session(config, output_dir)


@main.command()
@click.option("--observables", is_flag=True, help="Also write mass, energy and inertia at the output cadence")
@click.option("--dump-forcing", is_flag=True, help="Also write the forcing on the solver grid")
@click.pass_obj
@_surface_errors
def simulate(session: Session, observables: bool, dump_forcing: bool):
    """Solve the charge equation for the configured datum."""
    config = session.require_config()
    datum, params = config.initial_datum(), config.solver_params()
    trajectory = solve_charge(params, datum, config.solver)
    out = session.output_dir
    write_csv(trajectory.to_frame(), out / "trajectory.csv")

    if dump_forcing:
        values = forcing(trajectory.times, datum, quantum=trajectory.quantum)
        write_csv(pd.DataFrame({"t": trajectory.times, "Re_f": values.real, "Im_f": values.imag}),
                  out / "forcing.csv")
    if observables:
        times = [t for t in config.output_times() if t <= trajectory.t_end]
        write_csv(observable_series(trajectory, datum, times, config.output.k_max), out / "observables.csv")

    summary = {
        "status": trajectory.status.value,
        "t_est": trajectory.t_est,
        "t_end": trajectory.t_end,
        "nodes": int(trajectory.times.size),
        "max_residual": float(trajectory.residual_norm.max()),
        "config": config.model_dump(mode="json", by_alias=True),
    }
    write_json(summary, out / "summary.json")
    click.echo(f"{trajectory.status.value}: {trajectory.times.size} nodes up to t={trajectory.t_end:.10g}")


@main.command("standing-wave")
@click.option("--omega", type=float, required=True, help="Frequency above 4exp(-2γ)")
@click.option("--eta", type=float, default=0.0, show_default=True, help="Phase of the charge")
@click.pass_obj
@_surface_errors
def standing_wave_command(session: Session, omega: float, eta: float):
    """Charge and energy of the standing wave of frequency ω."""
    params = session.params()
    wave = standing_wave(omega, params, eta)
    payload = {"omega": wave.omega, "Q": wave.charge_modulus, "eta": wave.phase,
               "energy": standing_wave_energy(wave.charge_modulus, params)}
    click.echo(write_json(payload, session.output_dir / "standing_wave.json"), nl=False)


@main.command()
@click.pass_obj
@_surface_errors
def threshold(session: Session):
    """Energy threshold Λ against the energy of the configured datum."""
    config = session.require_config()
    params = config.solver_params()
    energy0 = datum_energy(config.initial_datum(), params)
    if params.focusing:
        lam = lambda_threshold(params)
        payload = {"Lambda": lam, "E0": energy0, "margin": lam - energy0, "certified": energy0 < lam}
    else:
        payload = {"Lambda": None, "E0": energy0, "margin": None, "certified": False}
    click.echo(write_json(payload, session.output_dir / "threshold.json"), nl=False)


def virial_sample_times(t_end: float, delta: float, samples: int) -> np.ndarray:
    """Spread ``samples`` interior times over whole multiples of the cadence ``delta``."""
    last = int(np.floor(t_end / delta * (1.0 + 1e-12))) - 1
    if samples < 1 or last < 1:
        raise click.BadParameter(f"need at least one sample one cadence inside t={t_end!r}", param_hint="--samples")
    if samples == 1:
        return np.array([max(1, (last + 1) // 2) * delta])
    return np.rint(np.linspace(1, last, samples)).astype(int) * delta


@main.command()
@click.option("--samples", type=int, default=5, show_default=True, help="Number of interior sample times")
@click.pass_obj
@_surface_errors
def virial(session: Session, samples: int):
    """Compare finite differences of the moment of inertia with the virial identity."""
    config = session.require_config()
    datum, params = config.initial_datum(), config.solver_params()
    trajectory = solve_charge(params, datum, config.solver, compute_residual=False)
    delta = config.cadence
    times = virial_sample_times(trajectory.t_end, delta, samples)
    report = virial_report(trajectory, datum, times, delta, config.output.k_max)
    write_csv(report, session.output_dir / "virial.csv")
    click.echo(f"worst virial gap {report['gap'].max():.3e} over {len(report)} samples")


def _parse_sigmas(text: str) -> list[float]:
    try:
        return [float(part) for part in text.replace(" ", "").split(",") if part]
    except ValueError:
        raise click.BadParameter(f"expected comma-separated numbers, got {text!r}", param_hint="--sigmas")


@main.command()
@click.option("--sigmas", required=True, help="Comma-separated powers, e.g. 0.5,1,2")
@click.option("--beta", type=float, default=None, help="Coupling; defaults to the configuration, else 1")
@click.option("--energy-ratio", type=float, default=1.5, show_default=True, help="Tuning target E0/Λ")
@click.option("--width", type=float, default=0.2, show_default=True, help="Gaussian width of the datum family")
@click.pass_obj
@_surface_errors
def sweep(session: Session, sigmas: str, beta: float | None, energy_ratio: float, width: float):
    """Tune, certify and run one datum per power σ."""
    config = session.config
    if beta is None:
        beta = config.params.beta if config else 1.0
    solver = config.solver if config else SolverConfig(t_end=1.0)
    reports = sigma_sweep(_parse_sigmas(sigmas), beta, GaussianFamily(width=width, energy_ratio=energy_ratio), solver)

    rows = [r.model_dump(mode="json") for r in reports]
    write_json(rows, session.output_dir / "sweep.json")
    frame = pd.DataFrame([{key: row[key] for key in SWEEP_COLUMNS} for row in rows], columns=SWEEP_COLUMNS)
    write_csv(frame, session.output_dir / "sweep.csv")
    certified = sum(r.certified for r in reports)
    click.echo(f"{len(reports)} rows, {certified} certified")


@main.command("specfun-table")
@click.option("--tmin", type=float, required=True, help="First grid point (> 0)")
@click.option("--tmax", type=float, required=True, help="Last grid point")
@click.option("--n", "count", type=int, default=50, show_default=True, help="Number of grid points")
@click.option("--spacing", type=click.Choice(["log", "linear"]), default="log", show_default=True)
@click.pass_obj
@_surface_errors
def specfun_table(session: Session, tmin: float, tmax: float, count: int, spacing: str):
    """Tabulate I, N, N1, si, ci and K0 for external validation."""
    if not 0 < tmin <= tmax or count < 1:
        raise click.BadParameter("need 0 < tmin <= tmax and n >= 1")
    grid = np.geomspace(tmin, tmax, count) if spacing == "log" else np.linspace(tmin, tmax, count)
    si, ci = sici(grid)
    frame = pd.DataFrame({"t": grid, "I": volterra_I(grid), "N": volterra_N(grid), "N1": volterra_N1(grid),
                          "si": si, "ci": ci, "K0": macdonald_k0(grid)})
    write_csv(frame, session.output_dir / "specfun.csv")
    click.echo(f"{count} rows written")
