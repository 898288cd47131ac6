"""Command-line entry point: ``jacobi-ist {forward,inverse,validate,spectrum,roundtrip}``."""
from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import io
from .background import BandEdgeError, EdgeSearchError, TOL_QUAD
from .direct import (
    InvalidCoefficients,
    QuadratureError,
    SpectralSingularity,
    forward,
    search_eigenvalues,
)
from .marchenko import DataNotInClass, GridTooCoarse, inverse, kernel_decay_check, kernel_difference_check
from .validate import classify_spectrum_cases, edge_analysis, overall_verdict, validate_all

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC, EXIT_NOT_IN_CLASS = 0, 2, 3, 4

log = logging.getLogger("jacobi_ist")


def _settings(args, cfg: dict) -> dict:
    tol = dict(cfg.get("tolerances", {}))
    if args.tol_quad is not None:
        tol["tol_quad"] = args.tol_quad
    return {
        "points": args.grid_points if args.grid_points is not None else cfg.get("grid", {}).get("points", 512),
        "q": args.moment_q if args.moment_q is not None else cfg.get("moment_q", 2),
        "truncation": args.truncation if args.truncation is not None else cfg.get("truncation"),
        "tol_quad": tol.get("tol_quad", TOL_QUAD),
        "tol_tail": tol.get("tol_tail", 1e-10),
    }


def _out_dir(args, cfg) -> Path:
    d = Path(args.out or cfg.get("output", {}).get("dir", "."))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_cfg(args, required=True) -> dict:
    if args.config is None:
        if required:
            raise io.InputError("--config is required")
        return {}
    return io.load_config(args.config)


def _recon_range(cfg, coeffs=None) -> tuple:
    if "reconstruct_range" in cfg:
        lo, hi = cfg["reconstruct_range"]
    elif coeffs is not None:
        lo, hi = coeffs.n_min - 2, coeffs.n_max + 2
    else:
        lo, hi = -6, 6
    return int(lo), int(hi)


def cmd_forward(args) -> int:
    cfg = _load_cfg(args)
    st = _settings(args, cfg)
    coeffs = io.coefficients_from_config(cfg, args.seed)
    S = forward(coeffs, st["points"], st["q"])
    out = _out_dir(args, cfg)
    io.save_scattering(S, out / "scattering.json")
    io.write_csv(out / "scattering.csv", ["side", "lambda", "re_R", "im_R", "abs_T2", "g_ratio"],
                 io.scattering_rows(S))
    return EXIT_OK


def _inverse_payload(S, lo, hi, st) -> dict:
    res = inverse(S, lo, hi, st["truncation"], st["tol_tail"], st["tol_quad"])
    rec = res.reconstruction
    diag = {}
    for name, F, bg in (("plus", res.F_plus, S.bg_plus), ("minus", res.F_minus, S.bg_minus)):
        dec = kernel_decay_check(F)
        dif = kernel_difference_check(F, S.q_declared if S.q_declared >= 2 else 0, bg)
        diag[name] = {
            "decay_rate": None if not np.isfinite(dec.decay_rate) else dec.decay_rate,
            "difference_sums": dif.sums,
            "difference_tails": dif.tails,
            "converged": dif.converged,
            "imag_residue": F.imag_residue,
        }
    payload = rec.to_dict()
    payload["truncation"] = {side: {str(k): v for k, v in sorted(t.items())} for side, t in res.truncations.items()}
    payload["IVq"] = diag
    return payload, rec


def cmd_inverse(args) -> int:
    cfg = _load_cfg(args, required=False)
    st = _settings(args, cfg)
    if args.data is None:
        raise io.InputError("--data is required")
    S = io.load_scattering(args.data)
    if args.moment_q is not None:
        S.q_declared = args.moment_q
    lo, hi = _recon_range(cfg)
    payload, rec = _inverse_payload(S, lo, hi, st)
    out = _out_dir(args, cfg)
    io.dump_json(payload, out / "coefficients.json")
    io.write_csv(out / "coefficients.csv", ["n", "a", "b", "a_plus", "b_plus", "a_minus", "b_minus"],
                 ([int(n), float(a), float(b), float(ap), float(bp), float(am), float(bm)]
                  for n, a, b, ap, bp, am, bm in zip(rec.sites, rec.a(), rec.b(), rec.a_plus, rec.b_plus,
                                                     rec.a_minus, rec.b_minus)))
    return EXIT_OK


def cmd_validate(args) -> int:
    cfg = _load_cfg(args, required=False)
    if args.data is None:
        raise io.InputError("--data is required")
    S = io.load_scattering(args.data)
    coeffs = io.coefficients_from_config(cfg, args.seed) if cfg else None
    reports = validate_all(S, coeffs, allow_reconstruction=not args.no_reconstruct)
    out = _out_dir(args, cfg)
    io.dump_json({"verdict": overall_verdict(reports), "reports": [r.to_dict() for r in reports]},
                 out / "report.json")
    return EXIT_OK


def cmd_spectrum(args) -> int:
    cfg = _load_cfg(args)
    coeffs = io.coefficients_from_config(cfg, args.seed)
    case = classify_spectrum_cases(coeffs.bg_plus, coeffs.bg_minus)
    from .background import spectral_sets
    sets = spectral_sets(coeffs.bg_plus.spectrum(), coeffs.bg_minus.spectrum())
    rows = []
    for name, bands in (("sigma_plus", coeffs.bg_plus.spectrum()), ("sigma_minus", coeffs.bg_minus.spectrum()),
                        ("sigma2", sets["sigma2"]), ("sigma1_plus", sets["sigma1_plus"]),
                        ("sigma1_minus", sets["sigma1_minus"])):
        for lo, hi in bands:
            rows.append([name, float(lo), float(hi), "", "", ""])
    for lam in search_eigenvalues(coeffs).eigenvalues:
        rows.append(["eigenvalue", float(lam), "", "", "", ""])
    for E in case.sigma_v:
        ea = edge_analysis(coeffs, E)
        rows.append(["virtual_level", float(E), "", "resonant" if ea.resonant else "nonresonant",
                     float(ea.fitted_exponent), float(abs(ea.W_edge))])
    rows.append(["case", case.case, "", "", "", ""])
    out = _out_dir(args, cfg)
    io.write_csv(out / "spectrum.csv", ["kind", "value", "value2", "resonance", "exponent", "abs_W_edge"], rows)
    return EXIT_OK


def cmd_roundtrip(args) -> int:
    cfg = _load_cfg(args)
    st = _settings(args, cfg)
    coeffs = io.coefficients_from_config(cfg, args.seed)
    t0 = time.perf_counter()
    S = forward(coeffs, st["points"], st["q"])
    lo, hi = _recon_range(cfg, coeffs)
    payload, rec = _inverse_payload(S, lo, hi, st)
    n = rec.sites
    err_a = np.abs(rec.a() - coeffs.a(n))
    err_b = np.abs(rec.b() - coeffs.b(n))
    inside = (n >= coeffs.n_min - 1) & (n <= coeffs.n_max + 1)
    summary = {
        "max_error_inside": float(np.max(np.maximum(err_a, err_b)[inside])) if inside.any() else 0.0,
        "max_error_outside": float(np.max(np.maximum(err_a, err_b)[~inside])) if (~inside).any() else 0.0,
        "agreement": rec.agreement,
        "eigenvalues": [float(x) for x in S.eigenvalues],
    }
    log.info("roundtrip finished in %.2fs", time.perf_counter() - t0)
    out = _out_dir(args, cfg)
    io.dump_json({"summary": summary, "reconstruction": payload}, out / "roundtrip.json")
    return EXIT_OK


COMMANDS = {
    "forward": cmd_forward,
    "inverse": cmd_inverse,
    "validate": cmd_validate,
    "spectrum": cmd_spectrum,
    "roundtrip": cmd_roundtrip,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="jacobi-ist", description="Direct and inverse scattering for Jacobi operators "
                                "with steplike constant or periodic backgrounds.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON job config")
        s.add_argument("--out", help="output directory (default: config output.dir or .)")
        s.add_argument("--data", help="scattering-data JSON (inverse, validate)")
        s.add_argument("--grid-points", type=int, help="quadrature nodes per panel (default 512)")
        s.add_argument("--truncation", type=int, help="fixed GLM truncation N (default adaptive)")
        s.add_argument("--tol-quad", type=float, help="quadrature tolerance")
        s.add_argument("--moment-q", type=int, help="declared moment class q")
        s.add_argument("--seed", type=int, default=0, help="seed for random fixture perturbations")
        if name == "validate":
            s.add_argument("--no-reconstruct", action="store_true",
                           help="do not reconstruct coefficients for coefficient-dependent checks")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not args.verbose:
        warnings.simplefilter("ignore")
    try:
        return COMMANDS[args.command](args)
    except (io.InputError, InvalidCoefficients, BandEdgeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DataNotInClass as exc:
        print(f"data not in class: {exc}", file=sys.stderr)
        return EXIT_NOT_IN_CLASS
    except (SpectralSingularity, GridTooCoarse, QuadratureError, EdgeSearchError, ArithmeticError,
            np.linalg.LinAlgError, RuntimeError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
