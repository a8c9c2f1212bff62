"""Command-line orchestration: configuration, the staged pipeline, and
result emission.

Stages thread their outputs (ground state -> spectrum -> damping ->
reduced dynamics -> simulation); every artifact carries the configuration
hash so mixed-provenance reports are detectable, and identical
configurations reproduce byte-identical files.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import (ConfigError, FamilyBreakError, InconsistentFgrError,
                     NoGroundStateError, NumericalFailureError, SolvabilityError)
from .grids import make_cartesian_grid, make_radial_grid
from . import groundstate as gs
from . import linearization as lin
from . import normalform as nf
from . import pdesim as pd
from . import scattering as sc

# schema: section -> key -> (parser, default); None default means required
def _floats(text):
    return tuple(float(x) for x in text.replace(",", " ").split())


def _bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text}")


SCHEMA = {
    "nonlinearity": {
        "kind": (str, "cubic-quintic"),
        "coefficients": (_floats, (1.0, -0.02)),
        "growth_exponent": (float, None),
    },
    "grids": {
        "radial_r_max": (float, 24.0),
        "radial_n": (int, 768),
        "box_half_width": (float, 16.0),
        "box_points": (int, 256),
    },
    "groundstate": {
        "omega": (float, 1.0),
        "window_lo": (float, 0.9),
        "window_hi": (float, 1.1),
        "family_steps": (int, 4),
    },
    "scattering": {
        "eps_schedule": (_floats, (1e-2, 5e-3, 2.5e-3)),
        "m_max": (int, 12),
        "lam_max_factor": (float, 64.0),
    },
    "experiment": {
        "epsilon": (float, 0.01),
        "horizon": (float, 240.0),
        "dt": (float, 0.002),
        "sponge_strength": (float, 2.0),
        "decompose_interval": (float, 0.5),
        "weight_s": (float, 1.5),
    },
    "output": {
        "directory": (str, "runs/out"),
        "seed": (int, 12345),
    },
}

_POSITIVE_KEYS = {
    ("grids", "radial_r_max"), ("grids", "radial_n"), ("grids", "box_half_width"),
    ("grids", "box_points"), ("groundstate", "omega"), ("groundstate", "family_steps"),
    ("experiment", "horizon"), ("experiment", "dt"),
    ("experiment", "decompose_interval"), ("scattering", "m_max"),
    ("scattering", "lam_max_factor"),
}


@dataclass
class ExperimentConfig:
    values: dict
    text: str

    def __getitem__(self, pair):
        return self.values[pair[0]][pair[1]]

    def hash(self) -> str:
        canonical = json.dumps(self.values, sort_keys=True, default=repr)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]

    def nonlinearity(self) -> gs.NonlinearitySpec:
        kind = self["nonlinearity", "kind"]
        coeffs = self["nonlinearity", "coefficients"]
        p0 = self["nonlinearity", "growth_exponent"]
        if kind == "cubic":
            return gs.NonlinearitySpec.cubic()
        if kind == "cubic-quintic":
            if len(coeffs) != 2:
                raise ConfigError("cubic-quintic needs two coefficients",
                                  key="nonlinearity.coefficients")
            return gs.NonlinearitySpec.cubic_quintic(coeffs[1])
        return gs.NonlinearitySpec.polynomial(coeffs, p0)

    def radial_grid(self):
        return make_radial_grid(self["grids", "radial_r_max"], self["grids", "radial_n"])

    def cartesian_grid(self):
        return make_cartesian_grid(self["grids", "box_half_width"],
                                   self["grids", "box_points"])


def parse_config(path: str | None, refine: int = 1) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    text = ""
    if path is not None:
        file_path = Path(path)
        if not file_path.exists():
            raise ConfigError(f"config file not found: {path}", key="config")
        text = file_path.read_text()
        parser.read_string(text)
    values = {}
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (cast, default) in keys.items():
            if parser.has_option(section, key):
                raw = parser.get(section, key)
                try:
                    values[section][key] = cast(raw)
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"cannot parse [{section}] {key} = {raw!r}",
                                      key=f"{section}.{key}") from exc
            else:
                values[section][key] = default
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]", key=section)
        for key, _ in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in [{section}]",
                                  key=f"{section}.{key}")
    for (section, key) in _POSITIVE_KEYS:
        val = values[section][key]
        if val is not None and val <= 0:
            raise ConfigError(f"[{section}] {key} must be positive, got {val}",
                              key=f"{section}.{key}")
    if values["experiment"]["epsilon"] < 0:
        raise ConfigError("perturbation size must be nonnegative",
                          key="experiment.epsilon")
    if refine not in (1, 2):
        raise ConfigError("refine must be 1 or 2", key="refine")
    if refine == 2:
        values["grids"]["radial_n"] *= 2
        values["grids"]["box_points"] *= 2
    return ExperimentConfig(values=values, text=text)


# ---------------------------------------------------------------------------
# emission helpers
# ---------------------------------------------------------------------------

def write_csv(path: Path, header, rows, config_hash: str):
    lines = [f"# config_hash={config_hash}", ",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(x)) if isinstance(x, (float, np.floating))
                              else str(x) for x in row))
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, payload: dict, config_hash: str):
    payload = dict(payload)
    payload["config_hash"] = config_hash
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return repr(obj)


def write_manifest(outdir: Path, cfg: ExperimentConfig, stages):
    manifest = {
        "version": __version__,
        "config_hash": cfg.hash(),
        "stages": sorted(stages),
        "grids": dict(cfg.values["grids"]),
        "tolerances": {
            "profile_residual": 1e-9,
            "eigen_residual": 1e-7,
            "fgr_route_gap": 0.10,
        },
        "config": cfg.values,
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def stage_groundstate(cfg: ExperimentConfig, outdir: Path, results: dict):
    beta = cfg.nonlinearity()
    grid = cfg.radial_grid()
    family = gs.continue_family(beta, cfg["groundstate", "window_lo"],
                                cfg["groundstate", "window_hi"],
                                cfg["groundstate", "family_steps"], grid=grid)
    report = gs.check_h4(family)
    rows = gs.family_csv_rows(family)
    write_csv(outdir / "groundstate.csv",
              ("omega", "mass", "dmass_domega", "phi0", "neg_eigs_lplus"),
              rows, cfg.hash())
    results["family"] = family
    results["h4"] = report
    results["h5_counts"] = [row[4] for row in rows]
    return {"h4_verdicts": list(report.verdicts),
            "neg_eigs": [int(r[4]) for r in rows]}


def stage_spectrum(cfg: ExperimentConfig, outdir: Path, results: dict):
    beta = cfg.nonlinearity()
    family = results["family"]
    omega0 = cfg["groundstate", "omega"]
    idx = int(np.argmin(np.abs(family.omegas - omega0)))
    profile = family.profiles[idx]
    op = lin.assemble_linearization(profile, beta)
    spectrum = lin.discrete_spectrum(op)
    neg, _ = gs.count_negative_eigs_lplus(profile, beta, fine_n=4096)
    report = lin.spectrum_report(op, spectrum, neg_eigs=neg)
    write_json(outdir / "spectrum.json", report, cfg.hash())
    results["operator"] = op
    results["spectrum"] = spectrum
    results["spectrum_report"] = report
    return report


def stage_fgr(cfg: ExperimentConfig, outdir: Path, results: dict):
    op = results["operator"]
    spectrum = results["spectrum"]
    beta = cfg.nonlinearity()
    family = results["family"]
    idx = int(np.argmin(np.abs(family.omegas - cfg["groundstate", "omega"])))
    profile = family.profiles[idx]
    if spectrum.no_internal_mode or spectrum.harmonic_count is None:
        write_json(outdir / "fgr.json", {"skipped": "no internal mode"}, cfg.hash())
        return {"skipped": True}
    table = nf.taylor_coefficients(beta, profile, spectrum, spectrum.harmonic_count)
    table, corrections = nf.fk_recursion(table, op, spectrum)
    source, weight = nf.resonant_data(table, op, spectrum)
    fgr = sc.fgr_coefficient(op, spectrum, source, weight,
                             eps_schedule=cfg["scattering", "eps_schedule"])
    write_json(outdir / "fgr.json", fgr.to_dict(), cfg.hash())
    results["fgr"] = fgr
    results["table"] = table
    return fgr.to_dict()


def stage_reduced_ode(cfg: ExperimentConfig, outdir: Path, results: dict):
    spectrum = results.get("spectrum")
    fgr = results.get("fgr")
    if spectrum is None or spectrum.no_internal_mode:
        write_json(outdir / "reduced_ode.json", {"skipped": "no internal mode"}, cfg.hash())
        return {"skipped": True}
    damping = 0.5 * (fgr.gamma_delta + fgr.gamma_eps) if fgr is not None else 0.0
    coeffs = nf.hamiltonian_amplitude_coefficients(results["table"]) \
        if "table" in results else ()
    state0 = nf.ReducedOdeState(
        z=complex(cfg["experiment", "epsilon"] or 1e-2), omega_hat=spectrum.omega,
        t=0.0, eigenvalue=spectrum.eigenvalue, hamiltonian_coeffs=coeffs,
        damping=max(damping, 0.0), order=spectrum.harmonic_count)
    horizon = cfg["experiment", "horizon"]
    traj = nf.reduced_ode_integrate(state0, horizon, dt=min(0.05 / spectrum.eigenvalue, 0.5))
    write_csv(outdir / "reduced_ode.csv",
              ("t", "re_z", "im_z", "abs_z", "omega_hat"),
              nf.trajectory_csv_rows(traj), cfg.hash())
    fit = {"damping": damping, "coefficients": list(coeffs),
           "order": spectrum.harmonic_count}
    if damping > 0:
        t_lo, t_hi = 0.3 * horizon, horizon
        if np.sum((traj.times >= t_lo) & (traj.times <= t_hi)) > 4:
            fit["decay_exponent"] = traj.decay_exponent(t_lo, t_hi)
    write_json(outdir / "reduced_ode.json", fit, cfg.hash())
    results["reduced_fit"] = fit
    results["reduced_state0"] = state0
    return fit


def stage_simulate(cfg: ExperimentConfig, outdir: Path, results: dict):
    beta = cfg.nonlinearity()
    family = results["family"]
    grid2d = cfg.cartesian_grid()
    spectra = results.get("family_spectra")
    if spectra is None:
        spectra = [lin.discrete_spectrum(lin.assemble_linearization(p, beta), n=3072)
                   for p in family.profiles]
        results["family_spectra"] = spectra
    if any(s.no_internal_mode for s in spectra):
        write_json(outdir / "simulation.json", {"skipped": "no internal mode"}, cfg.hash())
        return {"skipped": True}
    basis = pd.ModulationBasis(family, spectra, grid2d)
    spectrum = results["spectrum"]
    fgr = results.get("fgr")
    damping = 0.5 * (fgr.gamma_delta + fgr.gamma_eps) if fgr is not None else None
    coeffs = nf.hamiltonian_amplitude_coefficients(results["table"]) \
        if "table" in results else ()
    result = pd.soliton_relaxation_experiment(
        beta, basis, cfg["groundstate", "omega"], cfg["experiment", "epsilon"],
        cfg["experiment", "horizon"], spectrum.harmonic_count,
        damping=damping, hamiltonian_coeffs=coeffs,
        dt=cfg["experiment", "dt"], weight_s=cfg["experiment", "weight_s"],
        sponge_strength=cfg["experiment", "sponge_strength"],
        decompose_interval=cfg["experiment", "decompose_interval"])
    write_csv(outdir / "modulation_track.csv",
              ("t", "omega", "gamma", "re_z", "im_z", "abs_z", "f_h1", "f_weighted"),
              result.track.csv_rows(), cfg.hash())
    payload = {"verdicts": result.verdicts, "diagnostics": result.diagnostics}
    write_json(outdir / "simulation.json", payload, cfg.hash())
    (outdir / "plot_track.py").write_text(_PLOT_SCRIPT)
    results["relaxation"] = result
    return payload


def stage_waveop(cfg: ExperimentConfig, outdir: Path, results: dict):
    op = results["operator"]
    g = op.grid
    f = np.stack([np.exp(-0.3 * g.nodes**2), 0.3 * np.exp(-0.35 * g.nodes**2)]).astype(complex)
    residual = sc.intertwining_residual(op, f, robin_n=8192,
                                        lam_max_factor=cfg["scattering", "lam_max_factor"])
    probes = sc.lp_bound_probe(op, [4.0 / 3.0, 2.0, 4.0], [f], robin_n=8192,
                               lam_max_factor=cfg["scattering", "lam_max_factor"])
    payload = {"intertwining_residual": residual,
               "lp_ratios": {str(p.p): p.sup_ratio for p in probes}}
    write_json(outdir / "waveop.json", payload, cfg.hash())
    return payload


def stage_bench_estimates(cfg: ExperimentConfig, outdir: Path, results: dict):
    op = results["operator"]
    lams = op.omega * np.array([2.0, 4.0, 8.0, 16.0, 32.0])
    norms = [sc.weighted_resolvent_norm(op, la, s=1.5, n=4096) for la in lams]
    exponent = float(np.polyfit(np.log(lams), np.log(norms), 1)[0])
    payload = {"weighted_resolvent_norms": dict(zip(map(str, lams), norms)),
               "decay_exponent": exponent}
    write_json(outdir / "bench_estimates.json", payload, cfg.hash())
    return payload


_PLOT_SCRIPT = '''"""Render the mode-amplitude track with the reduced-model overlay."""
import csv
import sys

import matplotlib.pyplot as plt

rows = list(csv.reader(line for line in open(sys.argv[1] if len(sys.argv) > 1
            else "modulation_track.csv") if not line.startswith("#")))
header, data = rows[0], rows[1:]
t = [float(r[0]) for r in data]
abs_z = [float(r[5]) for r in data]
plt.semilogy(t, abs_z, label="|z(t)| measured")
plt.xlabel("t")
plt.ylabel("|z|")
plt.legend()
plt.tight_layout()
plt.savefig("modulation_track.png", dpi=150)
'''


STAGES = {
    "groundstate": stage_groundstate,
    "spectrum": stage_spectrum,
    "fgr": stage_fgr,
    "reduced-ode": stage_reduced_ode,
    "simulate": stage_simulate,
    "waveop": stage_waveop,
    "bench-estimates": stage_bench_estimates,
}

_ORDER = ["groundstate", "spectrum", "fgr", "reduced-ode", "simulate",
          "waveop", "bench-estimates"]
_DEPENDENCIES = {
    "spectrum": ["groundstate"],
    "fgr": ["groundstate", "spectrum"],
    "reduced-ode": ["groundstate", "spectrum", "fgr"],
    "simulate": ["groundstate", "spectrum", "fgr", "reduced-ode"],
    "waveop": ["groundstate", "spectrum"],
    "bench-estimates": ["groundstate", "spectrum"],
}


def emit_report(outdir: Path, cfg: ExperimentConfig, stage_outputs: dict):
    """Hypothesis scoreboard assembled from whatever stages ran."""
    board = {}
    warnings = []
    gs_out = stage_outputs.get("groundstate")
    if gs_out:
        verdicts = gs_out["h4_verdicts"]
        board["h4"] = ("pass" if all(v == "pass" for v in verdicts)
                       else "degenerate" if all(v == "degenerate" for v in verdicts)
                       else "mixed")
        board["h5"] = "pass" if all(c == 1 for c in gs_out["neg_eigs"]) else "fail"
    else:
        warnings.append("groundstate output missing")
    spec_out = stage_outputs.get("spectrum")
    if spec_out:
        board["h7"] = spec_out.get("h7")
        board["h9"] = spec_out.get("h9")
    else:
        warnings.append("spectrum output missing")
    fgr_out = stage_outputs.get("fgr")
    if fgr_out and not fgr_out.get("skipped"):
        board["fgr_hypothesis"] = "pass" if fgr_out["verdict"] else "fail"
        board["gamma"] = 0.5 * (fgr_out["gamma_delta"] + fgr_out["gamma_eps"])
        board["gamma_sign"] = fgr_out["sign"]
    else:
        warnings.append("damping-coefficient output missing")
    payload = {"scoreboard": board, "warnings": warnings}
    write_json(outdir / "report.json", payload, cfg.hash())
    return payload


def run_command(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="nls2d",
        description="Soliton relaxation toolkit for the 2D nonlinear "
                    "Schrodinger equation")
    parser.add_argument("stage", choices=list(STAGES) + ["pipeline"],
                        help="pipeline stage to run")
    parser.add_argument("--config", default=None, help="path to config file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--stage", dest="extra_stage", default=None,
                        help="additional stage to run after the main one")
    parser.add_argument("--seed", type=int, default=None, help="random seed override")
    parser.add_argument("--refine", type=int, default=1, choices=(1, 2),
                        help="grid doubling factor for stability checks")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        cfg = parse_config(args.config, refine=args.refine)
    except ConfigError as exc:
        print(f"config error ({exc.key}): {exc}", file=sys.stderr)
        return 3
    if args.seed is not None:
        cfg.values["output"]["seed"] = args.seed
    outdir = Path(args.out or cfg["output", "directory"])
    outdir.mkdir(parents=True, exist_ok=True)
    np.random.seed(cfg["output", "seed"] % (2**32))

    wanted = list(STAGES) if args.stage == "pipeline" else [args.stage]
    if args.extra_stage:
        if args.extra_stage not in STAGES:
            print(f"config error (stage): unknown stage {args.extra_stage}",
                  file=sys.stderr)
            return 3
        wanted.append(args.extra_stage)
    ordered = [s for s in _ORDER if s in wanted or
               any(s in _DEPENDENCIES.get(w, []) for w in wanted)]
    results: dict = {}
    stage_outputs: dict = {}
    try:
        for name in ordered:
            stage_outputs[name] = STAGES[name](cfg, outdir, results)
    except (NoGroundStateError, FamilyBreakError, NumericalFailureError,
            InconsistentFgrError, SolvabilityError) as exc:
        diag_path = outdir / "failure.json"
        write_json(diag_path, {"error": type(exc).__name__, "message": str(exc)},
                   cfg.hash())
        print(f"numerical failure: {exc} (diagnostics in {diag_path})",
              file=sys.stderr)
        return 1
    emit_report(outdir, cfg, stage_outputs)
    write_manifest(outdir, cfg, stage_outputs)
    print(f"wrote {outdir} (config {cfg.hash()})")
    return 0


def main() -> None:
    sys.exit(run_command())
