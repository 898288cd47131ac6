"""JSON/CSV formats for configs, scattering data, reports and coefficient tables.

Scattering-data files store upper-rim samples only; the lower rim is the
complex conjugate.  Complex numbers are written as ``[re, im]`` pairs and
every float uses Python's shortest round-trip representation, so files
re-ingest losslessly.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema
import numpy as np

from .background import Grid, background_from_dict
from .direct import Coefficients, ScatteringData

DATA_FORMAT = "jacobi-scattering-data"
DATA_VERSION = 1

_BACKGROUND = {
    "oneOf": [
        {
            "type": "object",
            "properties": {
                "type": {"const": "constant"},
                "a": {"type": "number", "exclusiveMinimum": 0},
                "b": {"type": "number"},
            },
            "required": ["type", "a", "b"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "type": {"const": "periodic"},
                "a": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 1},
                "b": {"type": "array", "items": {"type": "number"}, "minItems": 1},
            },
            "required": ["type", "a", "b"],
            "additionalProperties": False,
        },
    ]
}

_SITE_MAP = {
    "type": "object",
    "patternProperties": {"^-?[0-9]+$": {"type": "number"}},
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "type": "object",
    "properties": {
        "command": {"enum": ["forward", "inverse", "validate", "spectrum", "roundtrip"]},
        "background_plus": _BACKGROUND,
        "background_minus": _BACKGROUND,
        "perturbation": {
            "type": "object",
            "properties": {
                "window": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                "a_dev": _SITE_MAP,
                "b_dev": _SITE_MAP,
                "random": {
                    "type": "object",
                    "properties": {
                        "radius": {"type": "integer", "minimum": 0},
                        "amplitude": {"type": "number", "minimum": 0},
                    },
                    "required": ["radius", "amplitude"],
                    "additionalProperties": False,
                },
            },
            "additionalProperties": False,
        },
        "grid": {
            "type": "object",
            "properties": {"points": {"type": "integer", "minimum": 8}},
            "additionalProperties": False,
        },
        "moment_q": {"type": "integer", "minimum": 1},
        "truncation": {"type": "integer", "minimum": 1},
        "reconstruct_range": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
        "tolerances": {
            "type": "object",
            "properties": {k: {"type": "number", "exclusiveMinimum": 0}
                           for k in ("tol_quad", "tol_tail", "tol_root", "tol_prop", "tol_edge", "tol_resid")},
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {"dir": {"type": "string"}},
            "additionalProperties": False,
        },
    },
    "required": ["background_plus"],
    "additionalProperties": False,
}


class InputError(ValueError):
    """Malformed or schema-invalid input file."""


def load_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc


def dump_json(obj, path) -> None:
    text = json.dumps(obj, indent=1, allow_nan=False) + "\n"
    Path(path).write_text(text)


def validate_config(cfg: dict) -> dict:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise InputError(f"invalid config: {exc.message}") from exc
    return cfg


def load_config(path) -> dict:
    return validate_config(load_json(path))


def coefficients_from_config(cfg: dict, seed=None) -> Coefficients:
    bgp = background_from_dict(cfg["background_plus"])
    bgm = background_from_dict(cfg.get("background_minus", cfg["background_plus"]))
    pert = cfg.get("perturbation", {})
    a_dev = {int(k): float(v) for k, v in pert.get("a_dev", {}).items()}
    b_dev = {int(k): float(v) for k, v in pert.get("b_dev", {}).items()}
    window = tuple(pert["window"]) if "window" in pert else None
    if "random" in pert:
        r, amp = pert["random"]["radius"], pert["random"]["amplitude"]
        rng = np.random.default_rng(seed)
        sites = range(-r, r + 1)
        b_rand = rng.uniform(-amp, amp, len(sites))
        a_rand = rng.uniform(-amp, amp, len(sites))
        for n, db, da in zip(sites, b_rand, a_rand):
            b_dev[n] = b_dev.get(n, 0.0) + float(db)
            base = bgp.a(n) if n >= 0 else bgm.a(n)
            # keep a(n) positive with a margin
            a_dev[n] = a_dev.get(n, 0.0) + float(max(da, -0.5 * base))
        if window is None:
            window = (-r, r)
    return Coefficients.from_sites(bgp, bgm, a_dev, b_dev, window)


# ---------------------------------------------------------------------------
# Scattering data
# ---------------------------------------------------------------------------

def _cplx(arr) -> list:
    return [[float(z.real), float(z.imag)] for z in np.asarray(arr, dtype=complex)]


def _uncplx(rows) -> np.ndarray:
    a = np.asarray(rows, dtype=float).reshape(-1, 2)
    out = np.empty(len(a), dtype=complex)
    out.real, out.imag = a[:, 0], a[:, 1]  # keeps signed zeros
    return out


def _grid_dict(g: Grid) -> dict:
    return {
        "panels": [[float(lo), float(hi)] for lo, hi in g.panels],
        "panel": [int(i) for i in g.panel],
        "lambda": [float(x) for x in g.lam],
        "weight": [float(x) for x in g.weight],
    }


def _grid_from(d: dict) -> Grid:
    return Grid(np.asarray(d["lambda"], float), np.asarray(d["weight"], float),
                np.asarray(d["panel"], int), tuple((lo, hi) for lo, hi in d["panels"]))


def scattering_to_dict(S: ScatteringData) -> dict:
    sets = S.sets
    return {
        "format": DATA_FORMAT,
        "version": DATA_VERSION,
        "background_plus": S.bg_plus.to_dict(),
        "background_minus": S.bg_minus.to_dict(),
        "q_declared": int(S.q_declared),
        "grid_plus": _grid_dict(S.grid_plus),
        "grid_minus": _grid_dict(S.grid_minus),
        "R_plus": _cplx(S.R_plus),
        "T_plus": _cplx(S.T_plus),
        "R_minus": _cplx(S.R_minus),
        "T_minus": _cplx(S.T_minus),
        "eigenvalues": [float(x) for x in S.eigenvalues],
        "gamma_plus": [float(x) for x in S.gamma_plus],
        "gamma_minus": [float(x) for x in S.gamma_minus],
        "T_infinity": [[float(L), float(tp), float(tm)] for L, tp, tm in S.T_infinity],
        "metadata": {
            "sigma": sets["sigma"].to_list(),
            "sigma2": sets["sigma2"].to_list(),
            "sigma1_plus": sets["sigma1_plus"].to_list(),
            "sigma1_minus": sets["sigma1_minus"].to_list(),
            "sigma2_empty": not bool(sets["sigma2"]),
            "virtual_levels": [float(x) for x in sets["virtual_levels"]],
            "lower_rim": "complex conjugate of the upper rim",
            "flags": list(S.flags),
        },
    }


def scattering_from_dict(d: dict) -> ScatteringData:
    if d.get("format") != DATA_FORMAT:
        raise InputError("not a scattering-data file")
    try:
        S = ScatteringData(
            background_from_dict(d["background_plus"]),
            background_from_dict(d["background_minus"]),
            _grid_from(d["grid_plus"]),
            _grid_from(d["grid_minus"]),
            _uncplx(d["R_plus"]),
            _uncplx(d["T_plus"]),
            _uncplx(d["R_minus"]),
            _uncplx(d["T_minus"]),
            np.asarray(d["eigenvalues"], float),
            np.asarray(d["gamma_plus"], float),
            np.asarray(d["gamma_minus"], float),
            int(d.get("q_declared", 2)),
            [tuple(x) for x in d.get("T_infinity", [])],
            None,
            list(d.get("metadata", {}).get("flags", [])),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"malformed scattering data: {exc}") from exc
    _check_structure(S)
    return S


def _check_structure(S: ScatteringData) -> None:
    if len(S.R_plus) != len(S.grid_plus) or len(S.T_plus) != len(S.grid_plus):
        raise InputError("R_plus/T_plus length does not match grid_plus")
    if len(S.R_minus) != len(S.grid_minus) or len(S.T_minus) != len(S.grid_minus):
        raise InputError("R_minus/T_minus length does not match grid_minus")
    k = len(S.eigenvalues)
    if len(S.gamma_plus) != k or len(S.gamma_minus) != k:
        raise InputError("norming constants do not match eigenvalues")
    if np.any(S.gamma_plus <= 0) or np.any(S.gamma_minus <= 0):
        raise InputError("norming constants must be positive")
    if k and np.any(np.diff(S.eigenvalues) <= 0):
        raise InputError("eigenvalues must be sorted and distinct")


def save_scattering(S: ScatteringData, path) -> None:
    dump_json(scattering_to_dict(S), path)


def load_scattering(path) -> ScatteringData:
    return scattering_from_dict(load_json(path))


# ---------------------------------------------------------------------------
# CSV tables
# ---------------------------------------------------------------------------

def fmt(x) -> str:
    return format(float(x), ".17g")


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else fmt(v)
    return v


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def scattering_rows(S: ScatteringData):
    """(side, lambda, Re R, Im R, |T|^2, Re(g_side / g_other)) per node."""
    for side, grid, R, T, bg, other in (("+", S.grid_plus, S.R_plus, S.T_plus, S.bg_plus, S.bg_minus),
                                        ("-", S.grid_minus, S.R_minus, S.T_minus, S.bg_minus, S.bg_plus)):
        if len(grid) == 0:
            continue
        ratio = np.real(bg.green(grid.lam) / other.green(grid.lam))
        for lam, r, t, g in zip(grid.lam, R, T, ratio):
            yield side, float(lam), float(r.real), float(r.imag), float(abs(t) ** 2), float(g)


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.reader(fh))
