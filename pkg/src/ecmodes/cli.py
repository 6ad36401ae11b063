"""Batch runner: ``ecmodes --config run.yaml``.

Exit codes: 0 success, 2 invalid configuration, 3 runtime failure,
4 I/O failure. On failure a ``diagnostic.txt`` is written to the output
directory when possible.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
import traceback
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigIOError, RunConfig, ValidationError, parse_and_validate
from .drive import ground_state, propagate_driven
from .dynamics import (
    ObservableSeries,
    assemble,
    continuum_population_density,
    propagate,
    reconstruct_field,
    wigner_weisskopf_initial,
)
from .greens import format_float
from .modes import mode_bases

log = logging.getLogger("ecmodes")

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4


@dataclass
class RunManifest:
    config_hash: str
    version: str
    scenario: str
    grid: dict
    rank_map: list
    wall_time_s: float
    outputs: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    norm_drift: float | None = None

    def write(self, path):
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path, header, columns):
    """Write columns with shortest round-trip float formatting."""
    cols = [np.asarray(c) for c in columns]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in zip(*cols):
            fh.write(",".join(format_float(v) for v in row) + "\n")


def spectra_columns(provider, emitters, omegas, method, eps_rank):
    """Header and columns of ``spectra.csv``: G_i, J_i, S_ij (i < j), rank."""
    bases = mode_bases(provider, emitters, omegas, method, eps_rank)
    names = emitters.names
    header = ["omega_ev"]
    cols = [np.asarray(omegas)]
    G = np.array([b.G for b in bases])
    for i, n in enumerate(names):
        header.append(f"G_{n}")
        cols.append(G[:, i])
    for i, n in enumerate(names):
        header.append(f"J_{n}")
        cols.append((emitters[i].dipole * G[:, i]) ** 2)
    for i in range(len(names)):
        for j in range(i + 1, len(names)):
            header.append(f"S_{names[i]}_{names[j]}")
            cols.append(np.array([b.S[i, j] for b in bases]))
    header.append("rank")
    cols.append(np.array([float(b.rank) for b in bases]))
    return header, cols


def _write_populations(path, series: ObservableSeries, names):
    header = ["t_fs"] + [f"pop_emitter_{n}" for n in names]
    cols = [series.times] + list(series.emitter_populations.T)
    if series.ground:
        header.append("pop_ground")
        cols.append(series.ground_population)
    header.append("norm")
    cols.append(series.norm)
    write_csv(path, header, cols)


def _write_continuum(path, series: ObservableSeries, times):
    system = series.system
    header = ["omega_ev"]
    cols = [system.grid.nodes]
    for t in times:
        k = series.sample_index(t)
        dens = continuum_population_density(series.state(k), system)
        for j in range(dens.shape[0]):
            header.append(f"density_{j + 1}_t{format_float(series.times[k])}")
            cols.append(dens[j])
    write_csv(path, header, cols)


def run_scenario(config: RunConfig, out_dir=None, dump_spectra=False) -> RunManifest:
    """Execute the configured scenario and write its outputs to ``out_dir``."""
    start = time.perf_counter()
    out = Path(out_dir or config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario = config.run["scenario"]
    grid = config.grid()
    emitters = config.emitters
    outputs = []
    caught = []

    with warnings.catch_warnings(record=True) as wlist:
        warnings.simplefilter("always")
        if scenario == "spectra" or dump_spectra:
            header, cols = spectra_columns(config.provider, emitters, grid.nodes, config.method, config.eps_rank)
            write_csv(out / "spectra.csv", header, cols)
            outputs.append("spectra.csv")

        if scenario == "spectra":
            ranks = [int(r) for r in cols[-1]]
            rank_map = _rank_runs(grid.nodes, ranks)
            drift = None
        else:
            system = assemble(config.provider, emitters, grid, config.method, config.eps_rank)
            rank_map = [list(r) for r in system.rank_map()]
            run = config.run
            if scenario == "wigner_weisskopf":
                state = wigner_weisskopf_initial(system, run["initial_emitter"])
                series = propagate(system, state, run["t_end_fs"], dt=run["dt_fs"],
                                   propagator=run["propagator"], n_samples=run["samples"])
            else:
                if "initial_emitter" in config.raw.get("run", {}):
                    state = wigner_weisskopf_initial(system, run["initial_emitter"]).with_ground(0.0)
                else:
                    state = ground_state(system)
                series = propagate_driven(system, config.pulse, state, run["t_end_fs"],
                                          dt=run["dt_fs"], n_samples=run["samples"])
            drift = series.norm_drift
            _write_populations(out / "populations.csv", series, emitters.names)
            outputs.append("populations.csv")
            ctimes = run["continuum_times_fs"] or [run["t_end_fs"]]
            _write_continuum(out / "continuum.csv", series, ctimes)
            outputs.append("continuum.csv")
            for p in config.observation:
                classical = config.pulse.observation_field(p) if (scenario == "driven" and config.pulse) else None
                fs = reconstruct_field(series, system, config.provider, p, classical=classical)
                write_csv(out / f"field_{p}.csv", ["t_fs", "re_E", "im_E", "intensity"],
                          [fs.times, fs.amplitude.real, fs.amplitude.imag, fs.intensity])
                outputs.append(f"field_{p}.csv")
        caught = sorted({str(w.message) for w in wlist})
    for msg in caught:
        log.warning(msg)

    manifest = RunManifest(
        config_hash=config.hash(__version__),
        version=__version__,
        scenario=scenario,
        grid={
            "omega_min_ev": grid.omega_min,
            "omega_max_ev": grid.omega_max,
            "nodes": int(grid.nodes.size),
            "scheme": grid.scheme,
        },
        rank_map=rank_map,
        wall_time_s=time.perf_counter() - start,
        outputs=outputs + ["manifest.json"],
        warnings=caught,
        norm_drift=drift,
    )
    manifest.write(out / "manifest.json")
    return manifest


def _rank_runs(nodes, ranks):
    out = []
    for w, r in zip(nodes, ranks):
        if out and out[-1][2] == r:
            out[-1][1] = float(w)
        else:
            out.append([float(w), float(w), int(r)])
    return out


def _diagnose(out_dir, text):
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "diagnostic.txt").write_text(text, encoding="utf-8")
    except OSError:
        pass


def main(argv=None):
    parser = argparse.ArgumentParser(prog="ecmodes", description=__doc__.splitlines()[0])
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--out", help="output directory (overrides output.directory)")
    parser.add_argument("--scenario-override", choices=["spectra", "wigner_weisskopf", "driven"])
    parser.add_argument("--dump-spectra", action="store_true", help="also write spectra.csv")
    parser.add_argument("--log-level", default="WARNING")
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")

    out_dir = Path(args.out) if args.out else None
    try:
        config = parse_and_validate(args.config, args.scenario_override, out_dir)
    except ValidationError as exc:
        print(str(exc), file=sys.stderr)
        if out_dir:
            _diagnose(out_dir, str(exc) + "\n")
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        if out_dir:
            _diagnose(out_dir, f"I/O error: {exc}\n")
        return EXIT_IO

    try:
        manifest = run_scenario(config, config.output_dir, dump_spectra=args.dump_spectra)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        _diagnose(config.output_dir, f"I/O error: {exc}\n")
        return EXIT_IO
    except Exception as exc:  # surfaced as a runtime failure with a diagnostic file
        print(f"runtime error: {exc}", file=sys.stderr)
        _diagnose(config.output_dir, traceback.format_exc())
        return EXIT_RUNTIME
    log.info("wrote %s to %s", ", ".join(manifest.outputs), config.output_dir)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
