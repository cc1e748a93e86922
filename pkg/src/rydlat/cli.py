"""Command-line front end.

Exit codes: 0 success, 2 config error, 3 non-convergence, 4 internal error.
The default output directory is the current one, overridable by the
RYDLAT_OUTDIR environment variable and the --outdir flags.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click
import numpy as np

from . import exact, rates, single_atom, tebd, workflows
from .model import (
    LatticeModel,
    NNTruncated,
    NonConvergenceError,
    ThreeLevelScheme,
    TwoLevelScheme,
)
from .workflows import ConfigError

EXIT_CONFIG = 2
EXIT_NONCONVERGENCE = 3
EXIT_INTERNAL = 4


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _guarded(fn):
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ConfigError as err:
            _fail(EXIT_CONFIG, "\n".join(err.violations))
        except NonConvergenceError as err:
            _fail(EXIT_NONCONVERGENCE, str(err))
        except (click.ClickException, SystemExit):
            raise
        except Exception as err:  # surfaced with a stable exit code
            _fail(EXIT_INTERNAL, f"{type(err).__name__}: {err}")

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def scheme_options(fn):
    fn = click.option("--scheme", "variant", type=click.Choice(["two", "three"]),
                      default="two", show_default=True)(fn)
    fn = click.option("--omega-gr", type=float, default=1.0, show_default=True)(fn)
    fn = click.option("--gamma-rg", type=float, default=1.0, show_default=True)(fn)
    fn = click.option("--omega-ge", type=float, default=1.0, show_default=True)(fn)
    fn = click.option("--omega-er", type=float, default=0.2, show_default=True)(fn)
    fn = click.option("--gamma-eg", type=float, default=4.0, show_default=True)(fn)
    fn = click.option("--delta", type=float, default=0.0, show_default=True)(fn)
    return fn


def build_scheme(variant, omega_gr, gamma_rg, omega_ge, omega_er, gamma_eg, delta):
    if variant == "two":
        return TwoLevelScheme(omega_gr=omega_gr, gamma_rg=gamma_rg, delta=delta)
    return ThreeLevelScheme(
        omega_ge=omega_ge, omega_er=omega_er, gamma_eg=gamma_eg, delta=delta
    )


outdir_option = click.option(
    "--outdir",
    type=click.Path(path_type=Path),
    default=None,
    help="output directory (default: $RYDLAT_OUTDIR or the current one)",
)


@click.group()
def main():
    """Steady states and dynamics of the driven dissipative Rydberg chain."""


@main.command("single-atom")
@scheme_options
@_guarded
def single_atom_cmd(variant, omega_gr, gamma_rg, omega_ge, omega_er, gamma_eg, delta):
    """Print the closed-form single-atom steady-state Rydberg population."""
    scheme = build_scheme(variant, omega_gr, gamma_rg, omega_ge, omega_er, gamma_eg, delta)
    click.echo(workflows.fmt(single_atom.steady_population(scheme)))


@main.command("exact")
@scheme_options
@click.option("--n", type=int, default=7, show_default=True)
@click.option("--u", type=float, default=2.0, show_default=True,
              help="NN interaction (nn potential) ")
@click.option("--c6", type=float, default=None, help="use the full vdW potential")
@click.option("--tol", type=float, default=1e-8, show_default=True)
@click.option("--t-max", type=float, default=5000.0, show_default=True)
@click.option("--prefix", default="exact", show_default=True)
@outdir_option
@_guarded
def exact_cmd(variant, omega_gr, gamma_rg, omega_ge, omega_er, gamma_eg, delta,
              n, u, c6, tol, t_max, prefix, outdir):
    """Steady profile from dense Liouvillian integration (small chains)."""
    scheme = build_scheme(variant, omega_gr, gamma_rg, omega_ge, omega_er, gamma_eg, delta)
    from .model import FullVdW

    potential = FullVdW(c6) if c6 is not None else NNTruncated(u)
    model = LatticeModel(n_sites=n, potential=potential)
    profile = exact.steady_state(model, scheme, tol=tol, t_max=t_max)
    outdir = Path(outdir or workflows.default_outdir())
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{prefix}.csv"
    workflows.write_csv(
        csv_path, ["site", "population"],
        [(j, float(p)) for j, p in enumerate(profile.populations)],
    )
    workflows.write_manifest(
        outdir / f"{prefix}.manifest.json",
        {"command": "exact", "scheme": variant, "n_sites": n,
         "diagnostics": {k: v for k, v in profile.metadata.items()
                         if not isinstance(v, list)},
         "outputs": [csv_path.name]},
    )
    click.echo(str(csv_path))


@main.command("tebd")
@scheme_options
@click.option("--n", type=int, default=7, show_default=True)
@click.option("--u", type=float, default=2.0, show_default=True)
@click.option("--dt", type=float, default=0.01, show_default=True)
@click.option("--chi-max", type=int, default=64, show_default=True)
@click.option("--cutoff", type=float, default=1e-10, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.option("--t-max", type=float, default=5000.0, show_default=True)
@click.option("--init", type=click.Choice(["g", "r"]), default="g", show_default=True)
@click.option("--prefix", default="tebd", show_default=True)
@outdir_option
@_guarded
def tebd_cmd(variant, omega_gr, gamma_rg, omega_ge, omega_er, gamma_eg, delta,
             n, u, dt, chi_max, cutoff, tol, t_max, init, prefix, outdir):
    """Steady profile from dissipative TEBD (NN potential only)."""
    scheme = build_scheme(variant, omega_gr, gamma_rg, omega_ge, omega_er, gamma_eg, delta)
    model = LatticeModel(n_sites=n, potential=NNTruncated(u))
    controls = tebd.EvolutionControls(
        dt=dt, max_bond=chi_max, cutoff=cutoff, tol=tol, t_max=t_max, initial=init
    )
    profile = tebd.run_to_steady_state(model, scheme, controls)
    outdir = Path(outdir or workflows.default_outdir())
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{prefix}.csv"
    workflows.write_csv(
        csv_path, ["site", "population"],
        [(j, float(p)) for j, p in enumerate(profile.populations)],
    )
    workflows.write_manifest(
        outdir / f"{prefix}.manifest.json",
        {"command": "tebd", "scheme": variant, "n_sites": n,
         "diagnostics": {k: v for k, v in profile.metadata.items()
                         if not isinstance(v, list)},
         "outputs": [csv_path.name]},
    )
    click.echo(str(csv_path))


@main.command("rates")
@scheme_options
@click.option("--n", type=int, default=31, show_default=True)
@click.option("--kappa", type=float, default=None,
              help="pump/decay ratio (default: derived from the scheme)")
@click.option("--prefix", default="rates", show_default=True)
@outdir_option
@_guarded
def rates_cmd(variant, omega_gr, gamma_rg, omega_ge, omega_er, gamma_eg, delta,
              n, kappa, prefix, outdir):
    """Exact hard-core rate-model marginals via the transfer matrix."""
    scheme = build_scheme(variant, omega_gr, gamma_rg, omega_ge, omega_er, gamma_eg, delta)
    kap = kappa if kappa is not None else single_atom.kappa(scheme)
    profile = rates.marginals_transfer_matrix(n, kap)
    outdir = Path(outdir or workflows.default_outdir())
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{prefix}.csv"
    workflows.write_csv(
        csv_path, ["site", "population"],
        [(j, float(p)) for j, p in enumerate(profile.populations)],
    )
    workflows.write_manifest(
        outdir / f"{prefix}.manifest.json",
        {"command": "rates", "kappa": kap, "n_sites": n, "outputs": [csv_path.name]},
    )
    click.echo(str(csv_path))


@main.command("kmc")
@scheme_options
@click.option("--n", type=int, default=10, show_default=True)
@click.option("--kappa", type=float, default=None)
@click.option("--events", type=int, default=1000000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--chains", type=int, default=1, show_default=True,
              help="independent chains run concurrently and merged by seed order")
@click.option("--prefix", default="kmc", show_default=True)
@outdir_option
@_guarded
def kmc_cmd(variant, omega_gr, gamma_rg, omega_ge, omega_er, gamma_eg, delta,
            n, kappa, events, seed, chains, prefix, outdir):
    """Kinetic Monte Carlo sampling of the hard-core rate model."""
    scheme = build_scheme(variant, omega_gr, gamma_rg, omega_ge, omega_er, gamma_eg, delta)
    kap = kappa if kappa is not None else single_atom.kappa(scheme)
    seeds = [seed + k for k in range(chains)]
    if chains == 1:
        results = [rates.kmc_simulate(n, kap, events=events, seed=seeds[0])]
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=min(chains, 8)) as pool:
            futures = [
                pool.submit(rates.kmc_simulate, n, kap, events, s) for s in seeds
            ]
            # merged deterministically by seed order, not completion order
            results = [f.result() for f in futures]
    weights = np.array([r.profile.metadata["sample_time"] for r in results])
    pops = np.average(
        np.array([r.profile.populations for r in results]), axis=0, weights=weights
    )
    stderr = np.sqrt(
        np.average(
            np.array([r.profile.metadata["stderr"] ** 2 for r in results]),
            axis=0,
            weights=weights,
        )
        / len(results)
    )
    outdir = Path(outdir or workflows.default_outdir())
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{prefix}.csv"
    workflows.write_csv(
        csv_path, ["site", "population", "stderr"],
        [(j, float(pops[j]), float(stderr[j])) for j in range(n)],
    )
    workflows.write_manifest(
        outdir / f"{prefix}.manifest.json",
        {"command": "kmc", "kappa": kap, "n_sites": n, "events": events,
         "seeds": seeds,
         "low_confidence": any(r.low_confidence for r in results),
         "hard_core_violations": sum(
             r.profile.metadata["hard_core_violations"] for r in results),
         "outputs": [csv_path.name]},
    )
    click.echo(str(csv_path))


@main.command("sweep")
@click.option("--n", type=int, default=15, show_default=True)
@click.option("--mode", type=click.Choice(["sweep", "simultaneous", "both"]),
              default="sweep", show_default=True)
@click.option("--rate", type=float, default=1.0, show_default=True,
              help="sites per single-atom equilibration time")
@click.option("--dt", type=float, default=0.05, show_default=True)
@click.option("--chi-max", type=int, default=64, show_default=True)
@click.option("--tol", type=float, default=1e-5, show_default=True)
@click.option("--t-max", type=float, default=None,
              help="cap in simulation time units (default: (n/rate + 10) T_eq)")
@click.option("--prefix", default=None)
@outdir_option
@_guarded
def sweep_cmd(n, mode, rate, dt, chi_max, tol, t_max, prefix, outdir):
    """Sweep vs simultaneous driving time traces (three-level figure params)."""
    controls = None
    if t_max is not None:
        scheme = workflows.FIG2_PANELS["c"]["scheme"]
        controls = tebd.EvolutionControls(
            dt=dt, max_bond=chi_max, tol=tol, t_max=t_max,
            probe=tebd.equilibration_time(scheme) / 2,
        )
    result = workflows.run_fig3(
        n, mode, rate, Path(outdir or workflows.default_outdir()),
        prefix=prefix, controls=controls,
    )
    click.echo(str(result.csv_path))


@main.command("fig2")
@click.option("--panel", type=click.Choice(["a", "b", "c"]), required=True)
@click.option("--n", type=int, default=15, show_default=True)
@click.option("--dt", type=float, default=None)
@click.option("--chi-max", type=int, default=64, show_default=True)
@click.option("--tol", type=float, default=1e-6, show_default=True)
@click.option("--t-max", type=float, default=20000.0, show_default=True)
@click.option("--prefix", default=None)
@outdir_option
@_guarded
def fig2_cmd(panel, n, dt, chi_max, tol, t_max, prefix, outdir):
    """Steady-state profile data: TEBD vs rate-model populations per site."""
    controls = None
    if dt is not None:
        controls = tebd.EvolutionControls(
            dt=dt, max_bond=chi_max, tol=tol, t_max=t_max, probe=2.0
        )
    result = workflows.run_fig2(
        panel, n, Path(outdir or workflows.default_outdir()),
        prefix=prefix, controls=controls,
    )
    click.echo(str(result.csv_path))


@main.command("fig3")
@click.option("--n", type=int, default=15, show_default=True)
@click.option("--mode", type=click.Choice(["sweep", "simultaneous", "both"]),
              default="both", show_default=True)
@click.option("--rate", type=float, default=1.0, show_default=True)
@click.option("--prefix", default=None)
@outdir_option
@_guarded
def fig3_cmd(n, mode, rate, prefix, outdir):
    """Time traces for the lattice-growth figure (sweep vs simultaneous)."""
    result = workflows.run_fig3(
        n, mode, rate, Path(outdir or workflows.default_outdir()), prefix=prefix
    )
    click.echo(str(result.csv_path))


@main.command("validate")
@click.argument("config_path", type=click.Path(path_type=Path))
@_guarded
def validate_cmd(config_path):
    """Validate a run config without executing it."""
    if not config_path.exists():
        _fail(EXIT_CONFIG, f"config file not found: {config_path}")
    import json

    try:
        config = json.loads(config_path.read_text())
    except json.JSONDecodeError as err:
        _fail(EXIT_CONFIG,
              f"{config_path}:{err.lineno}:{err.colno}: invalid JSON: {err.msg}")
    violations = workflows.validate_config(config)
    if violations:
        for v in violations:
            click.echo(v)
        sys.exit(EXIT_CONFIG)
    click.echo("ok")


@main.command("run")
@click.argument("config_path", type=click.Path(path_type=Path))
@outdir_option
@_guarded
def run_cmd(config_path, outdir):
    """Execute a config file; writes CSV outputs plus a JSON run manifest."""
    config = workflows.load_config(config_path)
    summary = workflows.run_config(config, outdir=outdir)
    click.echo(summary["csv"])


if __name__ == "__main__":
    main()
