"""Run configuration: YAML parsing and validation.

All problems found in a file are collected and reported together, each
with the dotted path of the offending field. See ``docs/config.md`` for
the grammar.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import drive as drive_mod
from . import greens
from .dynamics import EIGEN, GAUSS_LEGENDRE, RK4, UNIFORM, build_grid
from .modes import DEFAULT_EPS_RANK, METHODS, Emitter, EmitterSet

SCENARIOS = ("spectra", "wigner_weisskopf", "driven")


class ValidationError(ValueError):
    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n" + "\n".join(f"  {e}" for e in self.errors))


class ConfigIOError(OSError):
    pass


@dataclass
class RunConfig:
    path: Path | None
    raw: dict
    emitters: EmitterSet
    provider: greens.GreensProvider
    grid_spec: dict
    method: str
    eps_rank: float
    run: dict
    observation: list
    pulse: object = None
    output_dir: Path = Path("out")
    green_file: Path | None = None

    def grid(self):
        g = self.grid_spec
        return build_grid(g["omega_min_ev"], g["omega_max_ev"], g["nodes"], g["scheme"], self.emitters)

    def hash(self, version=""):
        canon = json.dumps(self.raw, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256((canon + "|" + version).encode()).hexdigest()


class _Checker:
    def __init__(self):
        self.errors = []

    def fail(self, path, msg):
        self.errors.append(f"{path}: {msg}")

    def get(self, d, key, path, kind, required=True, default=None, check=None, expect=""):
        if not isinstance(d, dict) or key not in d or d[key] is None:
            if required:
                self.fail(f"{path}.{key}", f"missing (expected {expect or kind.__name__})")
            return default
        val = d[key]
        try:
            if kind is float:
                if isinstance(val, bool):
                    raise TypeError
                val = float(val)
                if not np.isfinite(val):
                    raise ValueError
            elif kind is int:
                if isinstance(val, bool) or int(val) != val:
                    raise TypeError
                val = int(val)
            elif kind is str:
                if not isinstance(val, str):
                    raise TypeError
            elif kind is list:
                if not isinstance(val, list):
                    raise TypeError
            elif kind is dict:
                if not isinstance(val, dict):
                    raise TypeError
        except (TypeError, ValueError):
            self.fail(f"{path}.{key}", f"got {val!r}, expected {expect or kind.__name__}")
            return default
        if check is not None and not check(val):
            self.fail(f"{path}.{key}", f"got {val!r}, expected {expect}")
            return default
        return val

    def vector(self, d, key, path, required=True, default=None, unit=False):
        val = self.get(d, key, path, list, required=required, default=None, expect="3-vector")
        if val is None:
            return default
        try:
            v = np.array([float(x) for x in val])
            if v.shape != (3,) or not np.all(np.isfinite(v)):
                raise ValueError
        except (TypeError, ValueError):
            self.fail(f"{path}.{key}", f"got {val!r}, expected 3-vector")
            return default
        if unit and abs(np.linalg.norm(v) - 1) > 1e-12:
            self.fail(f"{path}.{key}", f"|n| = {np.linalg.norm(v)!r}, expected unit vector")
            return default
        return v


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e7``-style floats (YAML 1.2 rule)."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+][0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def _positive(x):
    return x > 0


def load_yaml(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigIOError(f"cannot read config {path}: {exc.strerror or exc}") from None
    try:
        data = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        raise ValidationError([f"<file>: YAML syntax error: {exc}"]) from None
    if not isinstance(data, dict):
        raise ValidationError(["<root>: expected a mapping of sections"])
    return data


def parse_and_validate(path, scenario_override=None, output_override=None) -> RunConfig:
    """Parse the YAML run file at ``path`` and validate every field.

    Raises :class:`ValidationError` listing all problems, or
    :class:`ConfigIOError` if the file or a referenced data file cannot be
    read.
    """
    path = Path(path)
    raw = load_yaml(path)
    if scenario_override:
        raw.setdefault("run", {})
        if isinstance(raw["run"], dict):
            raw["run"]["scenario"] = scenario_override
    return validate(raw, base_dir=path.parent, path=path, output_override=output_override)


def validate(raw, base_dir=Path("."), path=None, output_override=None) -> RunConfig:
    ck = _Checker()
    known = {"emitters", "greens", "grid", "orthogonalization", "run", "drive", "observation_points", "output"}
    for key in raw:
        if key not in known:
            ck.fail(key, f"unknown section (expected one of {sorted(known)})")

    # emitters
    emitters = []
    positions = {}
    ems = ck.get(raw, "emitters", "<root>", list, expect="list of emitters")
    for n, e in enumerate(ems or []):
        p = f"emitters[{n}]"
        if not isinstance(e, dict):
            ck.fail(p, "expected a mapping")
            continue
        name = ck.get(e, "name", p, str)
        if name is not None and "_" in name:
            ck.fail(f"{p}.name", f"got {name!r}, names may not contain '_'")
        mu = ck.get(e, "dipole_enm", p, float, check=lambda x: x >= 0, expect="dipole >= 0 (e nm)")
        w = ck.get(e, "frequency_ev", p, float, check=_positive, expect="frequency > 0 (eV)")
        point = ck.get(e, "point", p, str, required=False, default=name)
        pos = ck.vector(e, "position_nm", p, required=False)
        ori = ck.vector(e, "orientation", p, required=False, default=np.array([0.0, 0.0, 1.0]), unit=True)
        if None not in (name, mu, w):
            emitters.append(Emitter(name, mu, w, point))
            positions[point] = (pos, ori, f"{p}.position_nm")
    if ems is not None and not ems:
        ck.fail("emitters", "need at least one emitter")
    names = [e.name for e in emitters]
    if len(set(names)) != len(names):
        ck.fail("emitters", "duplicate emitter names")

    # observation points
    observation = []
    obs = ck.get(raw, "observation_points", "<root>", list, required=False, default=[])
    for n, o in enumerate(obs or []):
        p = f"observation_points[{n}]"
        if not isinstance(o, dict):
            ck.fail(p, "expected a mapping")
            continue
        name = ck.get(o, "name", p, str)
        if name is not None and "_" in name:
            ck.fail(f"{p}.name", f"got {name!r}, names may not contain '_'")
        pos = ck.vector(o, "position_nm", p, required=False)
        ori = ck.vector(o, "orientation", p, required=False, default=np.array([0.0, 0.0, 1.0]), unit=True)
        if name is not None:
            if name in positions:
                ck.fail(f"{p}.name", f"{name!r} clashes with an emitter point")
            observation.append(name)
            positions[name] = (pos, ori, f"{p}.position_nm")

    # grid
    gsec = ck.get(raw, "grid", "<root>", dict, expect="grid section")
    grid_spec = {}
    if gsec is not None:
        grid_spec["omega_min_ev"] = ck.get(gsec, "omega_min_ev", "grid", float, check=_positive, expect="> 0 (eV)")
        grid_spec["omega_max_ev"] = ck.get(gsec, "omega_max_ev", "grid", float, check=_positive, expect="> omega_min_ev (eV)")
        grid_spec["nodes"] = ck.get(gsec, "nodes", "grid", int, check=lambda x: x >= 2, expect="integer >= 2")
        grid_spec["scheme"] = ck.get(
            gsec, "scheme", "grid", str, required=False, default=UNIFORM,
            check=lambda x: x in (UNIFORM, GAUSS_LEGENDRE), expect=f"one of {UNIFORM}, {GAUSS_LEGENDRE}",
        )
        lo, hi = grid_spec["omega_min_ev"], grid_spec["omega_max_ev"]
        if lo is not None and hi is not None:
            if lo >= hi:
                ck.fail("grid.omega_max_ev", f"got {hi!r}, expected > omega_min_ev = {lo!r}")
            elif emitters and not any(lo <= e.frequency <= hi for e in emitters):
                ck.fail("grid", f"window [{lo}, {hi}] eV excludes every emitter frequency")

    # orthogonalization
    osec = ck.get(raw, "orthogonalization", "<root>", dict, required=False, default={})
    method = ck.get(osec, "method", "orthogonalization", str, required=False, default="cholesky",
                    check=lambda x: x in METHODS, expect=f"one of {METHODS}")
    eps_rank = ck.get(osec, "eps_rank", "orthogonalization", float, required=False, default=DEFAULT_EPS_RANK,
                      check=lambda x: 0 < x < 1, expect="0 < eps_rank < 1")

    # run
    rsec = ck.get(raw, "run", "<root>", dict, expect="run section") or {}
    run = {}
    run["scenario"] = ck.get(rsec, "scenario", "run", str, check=lambda x: x in SCENARIOS, expect=f"one of {SCENARIOS}")
    dynamic = run["scenario"] in ("wigner_weisskopf", "driven")
    run["t_end_fs"] = ck.get(rsec, "t_end_fs", "run", float, required=dynamic, check=_positive, expect="t_end > 0 (fs)")
    run["dt_fs"] = ck.get(rsec, "dt_fs", "run", float, required=False, check=_positive, expect="dt > 0 (fs)")
    run["propagator"] = ck.get(rsec, "propagator", "run", str, required=False, default=RK4,
                               check=lambda x: x in (RK4, EIGEN), expect=f"one of {RK4}, {EIGEN}")
    run["samples"] = ck.get(rsec, "samples", "run", int, required=False, default=200,
                            check=lambda x: x >= 1, expect="integer >= 1")
    run["initial_emitter"] = ck.get(rsec, "initial_emitter", "run", str, required=False,
                                    default=names[0] if names else None)
    if run["scenario"] == "wigner_weisskopf" and run["initial_emitter"] not in names:
        ck.fail("run.initial_emitter", f"got {run['initial_emitter']!r}, expected one of {names}")
    if run["scenario"] == "driven" and "initial_emitter" in rsec and run["initial_emitter"] not in names:
        ck.fail("run.initial_emitter", f"got {run['initial_emitter']!r}, expected one of {names}")
    if run["scenario"] == "driven" and run["propagator"] == EIGEN:
        ck.fail("run.propagator", "driven runs require rk4")
    ctimes = ck.get(rsec, "continuum_times_fs", "run", list, required=False, default=None)
    if ctimes is not None:
        try:
            ctimes = [float(t) for t in ctimes]
            if any(t < 0 for t in ctimes) or (run["t_end_fs"] and any(t > run["t_end_fs"] for t in ctimes)):
                raise ValueError
        except (TypeError, ValueError):
            ck.fail("run.continuum_times_fs", f"got {ctimes!r}, expected times in [0, t_end_fs]")
            ctimes = None
    run["continuum_times_fs"] = ctimes

    # drive
    pulse = None
    dsec = ck.get(raw, "drive", "<root>", dict, required=False, default=None)
    if run["scenario"] == "driven" and dsec is None:
        ck.fail("drive", "missing (driven scenario needs a drive section)")
    if dsec is not None:
        pulse = _build_pulse(ck, dsec, names, observation, base_dir)

    # greens provider
    provider = None
    green_file = None
    gr = ck.get(raw, "greens", "<root>", dict, expect="greens section")
    if gr is not None:
        provider, green_file = _build_provider(ck, gr, emitters, observation, positions, base_dir)

    if isinstance(provider, greens.Tabulated) and None not in (grid_spec.get("omega_min_ev"), grid_spec.get("omega_max_ev")):
        lo, hi = provider.range
        if grid_spec["omega_min_ev"] < lo or grid_spec["omega_max_ev"] > hi:
            ck.fail("grid", f"window [{grid_spec['omega_min_ev']}, {grid_spec['omega_max_ev']}] eV "
                            f"exceeds tabulated range [{lo}, {hi}] eV")

    out_dir = output_override
    if out_dir is None:
        osec2 = ck.get(raw, "output", "<root>", dict, required=False, default={})
        out_dir = ck.get(osec2, "directory", "output", str, required=False, default="out")
        # relative output paths resolve against the working directory
        out_dir = Path(out_dir) if out_dir is not None else None

    if ck.errors:
        raise ValidationError(ck.errors)
    return RunConfig(
        path=Path(path) if path else None,
        raw=raw,
        emitters=EmitterSet(emitters),
        provider=provider,
        grid_spec=grid_spec,
        method=method,
        eps_rank=eps_rank,
        run=run,
        observation=observation,
        pulse=pulse,
        output_dir=Path(out_dir),
        green_file=green_file,
    )


def _build_pulse(ck, dsec, names, observation, base_dir):
    if "file" in dsec:
        fname = ck.get(dsec, "file", "drive", str)
        if fname is None:
            return None
        fpath = base_dir / fname
        if not fpath.exists():
            raise ConfigIOError(f"drive.file: pulse file not found: {fpath}")
        try:
            pulse = drive_mod.load_pulse_csv(fpath)
        except ValueError as exc:
            ck.fail("drive.file", str(exc))
            return None
        unknown = set(pulse.fields) - set(names)
        if unknown:
            ck.fail("drive.file", f"columns for unknown emitters {sorted(unknown)}")
        return pulse
    carrier = ck.get(dsec, "carrier_ev", "drive", float, check=lambda x: x >= 0, expect=">= 0 (eV)")
    center = ck.get(dsec, "center_fs", "drive", float)
    width = ck.get(dsec, "width_fs", "drive", float, check=_positive, expect="> 0 (fs)")
    phase = ck.get(dsec, "phase_rad", "drive", float, required=False, default=0.0)
    amps = ck.get(dsec, "amplitudes_vpm", "drive", dict, expect="mapping emitter -> V/m") or {}
    obs = ck.get(dsec, "observation_vpm", "drive", dict, required=False, default={}) or {}
    rwa = dsec.get("rwa", "auto")
    if rwa not in ("auto", True, False):
        ck.fail("drive.rwa", f"got {rwa!r}, expected auto, true or false")
        rwa = "auto"
    clean = {}
    for k, v in amps.items():
        if k not in names:
            ck.fail(f"drive.amplitudes_vpm.{k}", f"unknown emitter (expected one of {names})")
        elif isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            ck.fail(f"drive.amplitudes_vpm.{k}", f"got {v!r}, expected finite number (V/m)")
        else:
            clean[k] = float(v)
    clean_obs = {}
    for k, v in obs.items():
        if k not in observation:
            ck.fail(f"drive.observation_vpm.{k}", f"unknown observation point (expected one of {observation})")
        elif isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
            ck.fail(f"drive.observation_vpm.{k}", f"got {v!r}, expected finite number (V/m)")
        else:
            clean_obs[k] = float(v)
    if None in (carrier, center, width):
        return None
    return drive_mod.ClassicalPulse(
        carrier, center, width, clean, phase or 0.0, clean_obs, None if rwa == "auto" else bool(rwa)
    )


def _build_provider(ck, gr, emitters, observation, positions, base_dir):
    kind = ck.get(gr, "kind", "greens", str, check=lambda x: x in ("free_space", "lorentzian", "tabulated"),
                  expect="one of free_space, lorentzian, tabulated")
    needed = list(dict.fromkeys([e.point for e in emitters] + list(observation)))
    if kind == "free_space":
        n_bg = ck.get(gr, "n_bg", "greens", float, required=False, default=1.0, check=_positive, expect="> 0")
        pts = []
        for name in needed:
            pos, ori, p = positions.get(name, (None, None, name))
            if pos is None:
                ck.fail(p, "missing (free_space provider needs positions)")
            else:
                pts.append(greens.PointSpec(name, pos, ori))
        if len(pts) == len(needed) and n_bg is not None:
            return greens.FreeSpace(pts, n_bg), None
        return None, None
    if kind == "lorentzian":
        pnames = ck.get(gr, "points", "greens", list, required=False, default=needed)
        missing = [n for n in needed if n not in (pnames or [])]
        if missing:
            ck.fail("greens.points", f"missing points {missing}")
        terms = []
        for n, t in enumerate(ck.get(gr, "terms", "greens", list, expect="list of terms") or []):
            p = f"greens.terms[{n}]"
            c = ck.get(t, "center_ev", p, float, check=_positive, expect="> 0 (eV)")
            w = ck.get(t, "width_ev", p, float, check=_positive, expect="> 0 (eV)")
            a = ck.get(t, "amplitude_per_m", p, list, expect="square matrix (1/m)")
            if None in (c, w, a):
                continue
            try:
                amp = np.array(a, dtype=float)
                if amp.shape != (len(pnames), len(pnames)):
                    raise ValueError(f"shape {amp.shape}, expected {(len(pnames),) * 2}")
                terms.append(greens.LorentzianTerm(c, w, amp))
            except (ValueError, TypeError) as exc:
                ck.fail(f"{p}.amplitude_per_m", str(exc))
        if not missing and pnames is not None:
            return greens.LorentzianModel(pnames, terms), None
        return None, None
    if kind == "tabulated":
        fname = ck.get(gr, "file", "greens", str)
        interp = ck.get(gr, "interpolation", "greens", str, required=False, default="pchip",
                        check=lambda x: x in ("pchip", "linear"), expect="pchip or linear")
        if fname is None:
            return None, None
        fpath = Path(base_dir) / os.path.expanduser(fname)
        if not fpath.is_file():
            raise ConfigIOError(f"greens.file: Green's function file not found: {fpath}")
        try:
            prov = greens.load_tabulated(fpath, kind=interp or "pchip")
        except ValueError as exc:
            ck.fail("greens.file", f"{fpath}: {exc}")
            return None, fpath
        missing = [n for n in needed if n not in prov.names]
        if missing:
            ck.fail("greens.file", f"{fpath}: no data for points {missing}")
            return None, fpath
        return prov, fpath
    return None, None
