"""Run orchestration shared by the CLI and the acceptance suite.

Covers config validation, engine dispatch, and the machine-readable outputs:
CSV bodies are deterministic for a given config and seed (floats serialized
with 17 significant digits); everything time- or host-dependent lives in the
JSON run manifest written next to each CSV.
"""

from __future__ import annotations

import json
import math
import os
import platform
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, analysis, exact, rates, single_atom, tebd
from .model import (
    DriveScheme,
    FullVdW,
    HardCoreNN,
    LatticeModel,
    NNTruncated,
    ThreeLevelScheme,
    TwoLevelScheme,
)

OUTDIR_ENV = "RYDLAT_OUTDIR"

ENGINES = ("single-atom", "exact", "tebd", "rates", "kmc", "sweep")
POTENTIAL_KINDS = ("nn", "vdw", "hardcore")


class ConfigError(ValueError):
    """Config file failed validation; message lists the violations."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


def default_outdir() -> Path:
    return Path(os.environ.get(OUTDIR_ENV, "."))


def fmt(value: float) -> str:
    return f"{value:.17g}"


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_manifest(path: Path, payload: dict) -> None:
    payload = dict(payload)
    payload.setdefault("package_version", __version__)
    payload.setdefault("python", sys.version.split()[0])
    payload.setdefault("numpy", np.__version__)
    payload.setdefault("platform", platform.platform())
    payload.setdefault("timestamp", datetime.now(timezone.utc).isoformat())
    path.write_text(json.dumps(payload, indent=2, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return str(obj)


# ---------------------------------------------------------------------------
# config parsing and validation


def _check_number(section: dict, key: str, out: list, where: str, minimum=None,
                  exclusive=False, required=False, integer=False):
    if key not in section:
        if required:
            out.append(f"{where}.{key}: required field missing")
        return None
    value = section[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        out.append(f"{where}.{key}: expected a number, got {value!r}")
        return None
    if integer and not isinstance(value, int):
        out.append(f"{where}.{key}: expected an integer, got {value!r}")
        return None
    if not math.isfinite(value):
        out.append(f"{where}.{key}: must be finite")
        return None
    if minimum is not None:
        if exclusive and value <= minimum:
            out.append(f"{where}.{key}: must be > {minimum}, got {value}")
            return None
        if not exclusive and value < minimum:
            out.append(f"{where}.{key}: must be >= {minimum}, got {value}")
            return None
    return value


def validate_config(config: dict) -> list[str]:
    """Full validation without execution; returns the list of violations."""
    out: list[str] = []
    if not isinstance(config, dict):
        return ["top level: expected an object with sections"]
    known = {"scheme", "lattice", "engine", "controls", "output"}
    for key in config:
        if key not in known:
            out.append(f"top level: unknown section {key!r}")
    engine = config.get("engine")
    if engine is None:
        out.append("engine: required section missing")
    elif engine not in ENGINES:
        out.append(f"engine: unknown engine name {engine!r} (one of {ENGINES})")

    scheme = config.get("scheme")
    variant = None
    if not isinstance(scheme, dict):
        out.append("scheme: required section missing or not an object")
    else:
        variant = scheme.get("variant")
        if variant not in ("two", "three"):
            out.append(f"scheme.variant: expected 'two' or 'three', got {variant!r}")
        elif variant == "two":
            _check_number(scheme, "omega_gr", out, "scheme", minimum=0.0, required=True)
            _check_number(scheme, "gamma_rg", out, "scheme", minimum=0.0)
            for key in scheme:
                if key not in ("variant", "omega_gr", "gamma_rg", "delta"):
                    out.append(f"scheme.{key}: unknown field for the two-level variant")
        else:
            _check_number(scheme, "omega_ge", out, "scheme", minimum=0.0, required=True)
            _check_number(scheme, "omega_er", out, "scheme", minimum=0.0, required=True)
            _check_number(scheme, "gamma_eg", out, "scheme", minimum=0.0)
            for key in scheme:
                if key not in ("variant", "omega_ge", "omega_er", "gamma_eg", "delta"):
                    out.append(f"scheme.{key}: unknown field for the three-level variant")
        if "delta" in scheme:
            _check_number(scheme, "delta", out, "scheme")

    lattice = config.get("lattice")
    potential_kind = None
    if lattice is not None:
        if not isinstance(lattice, dict):
            out.append("lattice: expected an object")
        else:
            _check_number(lattice, "n_sites", out, "lattice", minimum=1, integer=True)
            _check_number(lattice, "spacing", out, "lattice", minimum=0.0, exclusive=True)
            pot = lattice.get("potential")
            if pot is not None:
                if not isinstance(pot, dict):
                    out.append("lattice.potential: expected an object")
                else:
                    potential_kind = pot.get("kind")
                    if potential_kind not in POTENTIAL_KINDS:
                        out.append(
                            f"lattice.potential.kind: expected one of {POTENTIAL_KINDS},"
                            f" got {potential_kind!r}"
                        )
                    elif potential_kind == "nn":
                        _check_number(pot, "u", out, "lattice.potential", minimum=0.0,
                                      required=True)
                    elif potential_kind == "vdw":
                        _check_number(pot, "c6", out, "lattice.potential", minimum=0.0,
                                      required=True)

    controls = config.get("controls", {})
    if controls and not isinstance(controls, dict):
        out.append("controls: expected an object")
        controls = {}
    for key in ("dt", "tol", "t_max", "probe", "cutoff", "rate"):
        if key in controls:
            _check_number(controls, key, out, "controls", minimum=0.0, exclusive=True)
    for key in ("chi_max", "events", "seed", "burn_in"):
        if key in controls:
            _check_number(controls, key, out, "controls", minimum=0, integer=True)
    if "kappa" in controls:
        _check_number(controls, "kappa", out, "controls", minimum=0.0)
    mode = controls.get("mode")
    if mode is not None and mode not in ("sweep", "simultaneous", "both"):
        out.append(f"controls.mode: expected sweep|simultaneous|both, got {mode!r}")

    # cross-section rules
    if engine in ("tebd", "sweep") and potential_kind not in (None, "nn"):
        out.append(f"engine {engine}: requires the nn potential, got {potential_kind!r}")
    if engine == "exact" and potential_kind == "hardcore":
        out.append("engine exact: hardcore potential is a constraint, not an energy")
    if engine == "sweep" and variant == "two":
        out.append("engine sweep: the sweep protocol requires the three-level scheme")

    output = config.get("output", {})
    if output and not isinstance(output, dict):
        out.append("output: expected an object")
    return out


def scheme_from_config(section: dict) -> DriveScheme:
    if section["variant"] == "two":
        return TwoLevelScheme(
            omega_gr=float(section["omega_gr"]),
            gamma_rg=float(section.get("gamma_rg", 0.0)),
            delta=float(section.get("delta", 0.0)),
        )
    return ThreeLevelScheme(
        omega_ge=float(section["omega_ge"]),
        omega_er=float(section["omega_er"]),
        gamma_eg=float(section.get("gamma_eg", 0.0)),
        delta=float(section.get("delta", 0.0)),
    )


def lattice_from_config(section: dict | None) -> LatticeModel | None:
    if section is None:
        return None
    pot_cfg = section.get("potential", {"kind": "nn", "u": 2.0})
    kind = pot_cfg.get("kind", "nn")
    if kind == "nn":
        potential = NNTruncated(float(pot_cfg["u"]))
    elif kind == "vdw":
        potential = FullVdW(float(pot_cfg["c6"]))
    else:
        potential = HardCoreNN()
    return LatticeModel(
        n_sites=int(section.get("n_sites", 7)),
        spacing=float(section.get("spacing", 1.0)),
        potential=potential,
    )


def load_config(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config file not found: {path}"])
    try:
        config = json.loads(path.read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(
            [f"{path}:{err.lineno}:{err.colno}: invalid JSON: {err.msg}"]
        ) from err
    violations = validate_config(config)
    if violations:
        raise ConfigError(violations)
    return config


# ---------------------------------------------------------------------------
# figure-parameter presets (drive units: the reference Rabi frequency)

FIG2_PANELS = {
    "a": {
        "scheme": TwoLevelScheme(omega_gr=1.0, gamma_rg=1.0),
        "u": 2.0,
    },
    "b": {
        "scheme": TwoLevelScheme(omega_gr=1.0, gamma_rg=0.25),
        "u": 2.0,
    },
    "c": {
        "scheme": ThreeLevelScheme(omega_ge=1.0, omega_er=0.2, gamma_eg=4.0),
        "u": 2.0,
    },
}


@dataclass
class Fig2Result:
    csv_path: Path
    manifest_path: Path
    sites: np.ndarray
    pop_tdmrg: np.ndarray
    pop_rates: np.ndarray
    metadata: dict


def tdmrg_steady_profile(
    model: LatticeModel,
    scheme: DriveScheme,
    controls: tebd.EvolutionControls,
    sweep_assisted: bool | None = None,
):
    """TEBD steady profile; three-level chains are grown by a boundary sweep
    first (the steady state is an attractor, so the initialization only
    affects how fast the convergence criterion fires)."""
    if sweep_assisted is None:
        sweep_assisted = isinstance(scheme, ThreeLevelScheme) and model.n_sites >= 6
    if sweep_assisted:
        sweep = tebd.run_sweep(model, scheme, sweep_rate=1.0, controls=controls)
        profile = sweep.profile
        profile.metadata["initialization"] = "boundary-sweep"
        if not profile.metadata.get("converged", False):
            raise tebd.NonConvergenceError(
                "sweep-assisted relaxation did not converge "
                f"within t_max={controls.t_max}",
                profile,
            )
        return profile
    profile = tebd.run_to_steady_state(model, scheme, controls)
    profile.metadata["initialization"] = controls.initial
    return profile


def run_fig2(
    panel: str,
    n: int,
    outdir: Path,
    prefix: str | None = None,
    controls: tebd.EvolutionControls | None = None,
) -> Fig2Result:
    """Steady-state profile CSV: per-site TEBD populations next to the
    hard-core rate-model marginals, for one of the preset parameter panels."""
    if panel not in FIG2_PANELS:
        raise ConfigError([f"fig2 panel must be one of {sorted(FIG2_PANELS)}"])
    preset = FIG2_PANELS[panel]
    scheme = preset["scheme"]
    model = LatticeModel(n_sites=n, potential=NNTruncated(preset["u"]))
    if controls is None:
        defaults = {"a": 0.005, "b": 0.005, "c": 0.02}
        controls = tebd.EvolutionControls(
            dt=defaults[panel], tol=1e-6, t_max=20000.0, probe=2.0
        )
    profile = tdmrg_steady_profile(model, scheme, controls)
    kappa = single_atom.kappa(scheme)
    rate_profile = rates.marginals_transfer_matrix(n, kappa)
    prefix = prefix or f"fig2_{panel}_n{n}"
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{prefix}.csv"
    sites = np.arange(n)
    write_csv(
        csv_path,
        ["site", "pop_tdmrg", "pop_rates"],
        [
            (int(j), float(profile.populations[j]), float(rate_profile.populations[j]))
            for j in sites
        ],
    )
    manifest_path = outdir / f"{prefix}.manifest.json"
    metadata = {
        "command": "fig2",
        "panel": panel,
        "n_sites": n,
        "scheme": scheme.__dict__ | {"variant": "two" if scheme.local_dim == 2 else "three"},
        "u": preset["u"],
        "kappa": kappa,
        "tebd": {k: v for k, v in profile.metadata.items() if not isinstance(v, list)},
        "outputs": [csv_path.name],
    }
    write_manifest(manifest_path, metadata)
    return Fig2Result(
        csv_path=csv_path,
        manifest_path=manifest_path,
        sites=sites,
        pop_tdmrg=profile.populations,
        pop_rates=rate_profile.populations,
        metadata=metadata,
    )


@dataclass
class Fig3Result:
    csv_path: Path
    manifest_path: Path
    results: dict  # mode -> tebd.SweepResult
    metadata: dict


def run_fig3(
    n: int,
    mode: str,
    rate: float,
    outdir: Path,
    prefix: str | None = None,
    controls: tebd.EvolutionControls | None = None,
) -> Fig3Result:
    """Population traces vs time (units of the single-atom equilibration
    time) for staggered and/or simultaneous driving at the three-level
    figure parameters."""
    if mode not in ("sweep", "simultaneous", "both"):
        raise ConfigError(["fig3 mode must be sweep|simultaneous|both"])
    preset = FIG2_PANELS["c"]
    scheme = preset["scheme"]
    model = LatticeModel(n_sites=n, potential=NNTruncated(preset["u"]))
    t_eq = tebd.equilibration_time(scheme)
    if controls is None:
        controls = tebd.EvolutionControls(
            dt=0.05, tol=1e-5, t_max=(n / rate + 10) * t_eq, probe=t_eq / 2
        )
    modes = ["sweep", "simultaneous"] if mode == "both" else [mode]
    results = {}
    rows = []
    for m in modes:
        sweep_rate = rate if m == "sweep" else math.inf
        res = tebd.run_sweep(model, scheme, sweep_rate, controls=controls)
        results[m] = res
        for t, pops in zip(res.times_in_equilibration_units(), res.populations):
            rows.append((m, float(t), *[float(p) for p in pops]))
    prefix = prefix or f"fig3_n{n}_{mode}"
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    csv_path = outdir / f"{prefix}.csv"
    write_csv(
        csv_path,
        ["mode", "time", *[f"site_{j}" for j in range(n)]],
        rows,
    )
    manifest_path = outdir / f"{prefix}.manifest.json"
    metadata = {
        "command": "fig3",
        "n_sites": n,
        "mode": mode,
        "sweep_rate": rate,
        "time_unit": "equilibration time Gamma_eg/(Omega_ge*Omega_er)",
        "equilibration_time": t_eq,
        "runs": {
            m: {k: v for k, v in r.metadata.items() if not isinstance(v, (list, np.ndarray))}
            for m, r in results.items()
        },
        "outputs": [csv_path.name],
    }
    write_manifest(manifest_path, metadata)
    return Fig3Result(
        csv_path=csv_path, manifest_path=manifest_path, results=results, metadata=metadata
    )


# ---------------------------------------------------------------------------
# config-driven dispatch


def run_config(config: dict, outdir: Path | None = None) -> dict:
    """Execute a validated config; returns a summary with output paths."""
    violations = validate_config(config)
    if violations:
        raise ConfigError(violations)
    engine = config["engine"]
    scheme = scheme_from_config(config["scheme"])
    lattice = lattice_from_config(config.get("lattice"))
    controls = config.get("controls", {})
    output = config.get("output", {})
    outdir = Path(outdir or output.get("directory") or default_outdir())
    outdir.mkdir(parents=True, exist_ok=True)
    prefix = output.get("prefix", engine.replace("-", "_"))
    csv_path = outdir / f"{prefix}.csv"
    manifest_path = outdir / f"{prefix}.manifest.json"
    summary: dict = {"engine": engine, "csv": str(csv_path), "manifest": str(manifest_path)}

    if engine == "single-atom":
        population = single_atom.steady_population(scheme)
        width = single_atom.linewidth(scheme)
        kap = single_atom.kappa(scheme)
        write_csv(
            csv_path,
            ["population", "linewidth", "kappa"],
            [(population, width, kap)],
        )
        diagnostics = {"population": population, "linewidth": width, "kappa": kap}
    elif engine == "exact":
        model = lattice or LatticeModel(n_sites=7, potential=NNTruncated(2.0))
        profile = exact.steady_state(
            model,
            scheme,
            tol=float(controls.get("tol", 1e-8)),
            t_max=float(controls.get("t_max", 5000.0)),
            probe=float(controls.get("probe", 1.0)),
        )
        write_csv(
            csv_path,
            ["site", "population"],
            [(j, float(p)) for j, p in enumerate(profile.populations)],
        )
        diagnostics = {k: v for k, v in profile.metadata.items() if not isinstance(v, list)}
    elif engine == "tebd":
        model = lattice or LatticeModel(n_sites=7, potential=NNTruncated(2.0))
        ctl = tebd.EvolutionControls(
            dt=float(controls.get("dt", 0.01)),
            max_bond=int(controls.get("chi_max", 64)),
            cutoff=float(controls.get("cutoff", 1e-10)),
            tol=float(controls.get("tol", 1e-6)),
            t_max=float(controls.get("t_max", 5000.0)),
            probe=float(controls.get("probe", 1.0)),
        )
        profile = tebd.run_to_steady_state(model, scheme, ctl)
        write_csv(
            csv_path,
            ["site", "population"],
            [(j, float(p)) for j, p in enumerate(profile.populations)],
        )
        diagnostics = {k: v for k, v in profile.metadata.items() if not isinstance(v, list)}
    elif engine == "rates":
        n = lattice.n_sites if lattice else 7
        kap = float(controls.get("kappa", single_atom.kappa(scheme)))
        profile = rates.marginals_transfer_matrix(n, kap)
        write_csv(
            csv_path,
            ["site", "population"],
            [(j, float(p)) for j, p in enumerate(profile.populations)],
        )
        diagnostics = {"kappa": kap, "n_sites": n}
    elif engine == "kmc":
        n = lattice.n_sites if lattice else 7
        kap = float(controls.get("kappa", single_atom.kappa(scheme)))
        result = rates.kmc_simulate(
            n,
            kap,
            events=int(controls.get("events", 100000)),
            seed=int(controls.get("seed", 0)),
            burn_in=controls.get("burn_in"),
        )
        stderr = result.profile.metadata["stderr"]
        write_csv(
            csv_path,
            ["site", "population", "stderr"],
            [
                (j, float(p), float(stderr[j]))
                for j, p in enumerate(result.profile.populations)
            ],
        )
        diagnostics = {
            k: v
            for k, v in result.profile.metadata.items()
            if not isinstance(v, np.ndarray)
        }
    elif engine == "sweep":
        n = lattice.n_sites if lattice else 7
        mode = controls.get("mode", "sweep")
        rate = float(controls.get("rate", 1.0))
        ctl = tebd.EvolutionControls(
            dt=float(controls.get("dt", 0.05)),
            max_bond=int(controls.get("chi_max", 64)),
            cutoff=float(controls.get("cutoff", 1e-10)),
            tol=float(controls.get("tol", 1e-5)),
            t_max=float(controls.get("t_max", 2000.0)),
            probe=float(controls.get("probe", 1.0)),
        )
        result = run_fig3(n, mode, rate, outdir, prefix=prefix, controls=ctl)
        diagnostics = result.metadata["runs"]
        csv_path = result.csv_path
        summary["csv"] = str(csv_path)
    else:  # pragma: no cover - validate_config blocks unknown engines
        raise ConfigError([f"engine: unknown engine name {engine!r}"])

    if engine != "sweep":
        write_manifest(
            manifest_path,
            {"command": "run", "config": config, "diagnostics": diagnostics,
             "outputs": [csv_path.name]},
        )
    summary["diagnostics"] = diagnostics
    return summary
