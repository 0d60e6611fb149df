"""Command-line front end: ``kbunmix {synth,unmix,eval,sweep,replay}``.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Diagnostics go
to standard error; results go to files.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import itertools
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DimensionMismatch, UnmixError
from .io import (
    ensure_dir,
    read_cube,
    read_json,
    read_spectra,
    write_cube,
    write_json,
    write_report,
    write_spectra,
)
from .kbsnmf import solve
from .metrics import evaluate
from .model import SolverConfig, SpectralCube
from .synth import SpectralLibrary, SynthSpec, add_noise, bundled_library, generate_cube

log = logging.getLogger("kbunmix")

CUBE_FILE = "cube.hsb"
ENDMEMBERS_FILE = "endmembers.csv"
ABUNDANCES_FILE = "abundances.hsb"
MANIFEST_FILE = "manifest.json"
REPORT_FILE = "report.json"

SWEEP_PARAMS = ("gamma", "theta", "snr", "bands", "size", "endmembers")
SWEEP_HEADER = (
    "cell", "seed", "variant", "gamma", "theta", "snr", "bands", "size", "endmembers",
    "repeats", "sad_mean", "sad_min", "rmse_mean", "rmse_min", "iterations_mean",
    "status", "error",
)


class UsageError(Exception):
    pass


# -- flag parsing helpers ---------------------------------------------------

def parse_size(text: str):
    try:
        rows, cols = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 64x64, got {text!r}")
    if rows < 1 or cols < 1:
        raise argparse.ArgumentTypeError("size must be positive")
    return rows, cols


def parse_range(text: str):
    """``a:b:step`` inclusive of ``b`` (within rounding) or ``v1;v2;...``."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise UsageError(f"range must be start:stop:step, got {text!r}")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise UsageError(f"bad range {text!r}")
        count = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(count)]
    return [float(v) for v in text.split(";") if v]


def parse_grid(text: str) -> dict:
    """Parse ``gamma=0:25:1,theta=0:1:0.1`` into ordered value lists."""
    grid = {}
    for item in filter(None, (s.strip() for s in text.split(","))):
        key, sep, spec = item.partition("=")
        key = key.strip()
        if not sep or key not in SWEEP_PARAMS:
            raise UsageError(f"grid entries must be <param>=<range> with param in {SWEEP_PARAMS}")
        try:
            grid[key] = parse_range(spec)
        except ValueError as exc:
            raise UsageError(f"bad grid values for {key}: {exc}")
    if not grid:
        raise UsageError("empty grid")
    return grid


def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_library(spec: str, n_bands):
    if spec == "bundled":
        return bundled_library(n_bands) if n_bands else bundled_library()
    lib = read_spectra(spec)
    if n_bands and lib.n_bands != n_bands:
        lib = lib.resample(n_bands)
    return lib


def _write_manifest(out: Path, command: str, args: dict, outputs) -> None:
    write_json({
        "tool": "kbunmix",
        "version": __version__,
        "command": command,
        "args": args,
        "outputs": {name: _sha256(out / name) for name in outputs},
    }, out / MANIFEST_FILE)


# -- commands ---------------------------------------------------------------

def cmd_synth(a) -> int:
    rows, cols = a.size
    lib = _load_library(a.library, a.bands)
    spec = SynthSpec(r=a.endmembers, rows_px=rows, cols_px=cols, field_scale=a.field_scale,
                     purity=a.purity, seed=a.seed, library=lib, contrast=a.contrast)
    cube, A, S = generate_cube(spec)
    if a.snr is not None:
        cube = add_noise(cube, a.snr, seed=a.seed)
    out = ensure_dir(a.out)
    write_cube(cube, out / CUBE_FILE)
    write_spectra(SpectralLibrary(A.names, A.data), out / ENDMEMBERS_FILE)
    write_cube(SpectralCube(S.data, rows, cols), out / ABUNDANCES_FILE)
    _write_manifest(out, "synth", _args_dict(a), (CUBE_FILE, ENDMEMBERS_FILE, ABUNDANCES_FILE))
    log.info("wrote %d-band %dx%d scene with %d endmembers to %s", cube.n_bands, rows, cols,
             a.endmembers, out)
    return 0


def _config_from_args(a) -> SolverConfig:
    return SolverConfig(variant=a.variant, gamma=a.gamma, theta=a.theta, t_max=a.max_iters,
                        c_min=a.tol, init=a.init, seed=a.seed,
                        compensate_normalization=a.compensate, stop_on=a.stop_on)


def cmd_unmix(a) -> int:
    cube = read_cube(a.input)
    cfg = _config_from_args(a)
    res = solve(cube, a.endmembers, cfg)
    out = ensure_dir(a.out)
    names = tuple(f"E{i + 1}" for i in range(a.endmembers))
    write_spectra(SpectralLibrary(names, res.endmembers.data), out / ENDMEMBERS_FILE)
    write_cube(SpectralCube(res.effective_abundances, cube.rows_px, cube.cols_px),
               out / ABUNDANCES_FILE)
    write_report(out / REPORT_FILE, result=res)
    traces = REPORT_FILE.replace(".json", ".traces.csv")
    args = _args_dict(a)
    args.update(gamma=cfg.gamma, theta=cfg.theta)
    _write_manifest(out, "unmix", args, (ENDMEMBERS_FILE, ABUNDANCES_FILE, REPORT_FILE, traces))
    log.info("%s after %d iterations (gamma=%g, theta=%g, %d floored)", res.termination,
             res.iterations_run, cfg.gamma, cfg.theta, res.floored_count)
    return 0


def _read_pair(directory):
    d = Path(directory)
    lib = read_spectra(d / ENDMEMBERS_FILE)
    ab = read_cube(d / ABUNDANCES_FILE)
    return lib.spectra, ab.data


def cmd_eval(a) -> int:
    A_hat, S_hat = _read_pair(a.extracted)
    A, S = _read_pair(a.truth)
    if A_hat.shape[1] != A.shape[1]:
        raise DimensionMismatch("r", A.shape[1], A_hat.shape[1], "extracted vs truth endmembers")
    rep = evaluate(A_hat, S_hat, A, S, renormalize=a.renormalize)
    write_report(a.out, report=rep)
    log.info("sad_average=%.4f rmse_average=%.4f", rep.sad_average, rep.rmse_average)
    return 0


def _run_cell(job):
    """Worker for one sweep cell; returns a table row and never raises."""
    cell, seed, params, base = job
    row = {"cell": cell, "seed": seed, "variant": base["variant"], **params,
           "repeats": base["repeats"], "status": "ok", "error": ""}
    try:
        sads, rmses, iters = [], [], []
        size = int(params["size"])
        for j in range(base["repeats"]):
            s = seed + j * base["n_cells"]
            spec = SynthSpec(r=int(params["endmembers"]), rows_px=size, cols_px=size,
                             field_scale=base["field_scale"], purity=base["purity"], seed=s,
                             n_bands=int(params["bands"]), contrast=base["contrast"])
            cube, A, S = generate_cube(spec)
            if params["snr"] is not None and math.isfinite(params["snr"]):
                cube = add_noise(cube, params["snr"], seed=s)
            cfg = SolverConfig(variant=base["variant"], gamma=params["gamma"],
                               theta=params["theta"], t_max=base["max_iters"], c_min=base["tol"],
                               seed=s)
            res = solve(cube, int(params["endmembers"]), cfg)
            rep = evaluate(res.endmembers.data, res.effective_abundances, A.data, S.data)
            sads.append(rep.sad_average)
            rmses.append(rep.rmse_average)
            iters.append(res.iterations_run)
        row.update(sad_mean=float(np.mean(sads)), sad_min=float(np.min(sads)),
                   rmse_mean=float(np.mean(rmses)), rmse_min=float(np.min(rmses)),
                   iterations_mean=float(np.mean(iters)))
    except Exception as exc:  # tagged in the table, the sweep goes on
        row.update(status="failed", error=f"{type(exc).__name__}: {exc}".replace(",", ";"))
    return row


def sweep_jobs(grid: dict, defaults: dict, base_seed: int):
    keys = list(grid)
    combos = list(itertools.product(*(grid[k] for k in keys)))
    jobs = []
    for cell, values in enumerate(combos):
        params = dict(defaults)
        params.update(zip(keys, values))
        jobs.append((cell, base_seed + cell, params))
    return jobs


def cmd_sweep(a) -> int:
    grid = parse_grid(a.grid)
    rows, cols = a.size
    if rows != cols and "size" in grid:
        raise UsageError("a size grid needs square base size")
    defaults = {"gamma": a.gamma, "theta": a.theta, "snr": a.snr, "bands": a.bands,
                "size": rows, "endmembers": a.endmembers}
    if defaults["gamma"] is None or defaults["theta"] is None:
        cfg = SolverConfig(variant=a.variant)
        defaults["gamma"] = cfg.gamma if a.gamma is None else a.gamma
        defaults["theta"] = cfg.theta if a.theta is None else a.theta
    jobs = sweep_jobs(grid, defaults, a.seeds)
    base = {"variant": a.variant, "repeats": a.repeats, "n_cells": len(jobs),
            "field_scale": a.field_scale, "purity": a.purity, "contrast": a.contrast,
            "max_iters": a.max_iters, "tol": a.tol}
    work = [(c, s, p, base) for c, s, p in jobs]
    log.info("sweeping %d cells x %d repeats on %d worker(s)", len(work), a.repeats, a.parallel)
    if a.parallel > 1:
        with ProcessPoolExecutor(max_workers=a.parallel) as pool:
            results = list(pool.map(_run_cell, work, chunksize=1))
    else:
        results = [_run_cell(w) for w in work]
    out = Path(a.out)
    if out.parent and not out.parent.exists():
        ensure_dir(out.parent)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=SWEEP_HEADER, extrasaction="ignore")
        w.writeheader()
        for row in results:
            w.writerow({k: ("" if row.get(k) is None else row.get(k, "")) for k in SWEEP_HEADER})
    failed = sum(r["status"] != "ok" for r in results)
    if failed:
        log.warning("%d of %d cells failed", failed, len(results))
    return 1 if failed == len(results) else 0


def cmd_replay(a) -> int:
    """Re-run a manifest's command into ``--out`` and compare output hashes."""
    man = read_json(a.manifest)
    command, args = man.get("command"), dict(man.get("args", {}))
    if command not in ("synth", "unmix"):
        raise UsageError(f"manifest command {command!r} cannot be replayed")
    args["out"] = a.out
    argv = [command] + _to_argv(command, args)
    code = main(argv)
    if code != 0:
        return code
    mismatched = [name for name, digest in man.get("outputs", {}).items()
                  if _sha256(Path(a.out) / name) != digest]
    if mismatched:
        print(f"replay differs in: {', '.join(mismatched)}", file=sys.stderr)
        return 1
    log.info("replay reproduced %d output(s) bit-identically", len(man.get("outputs", {})))
    return 0


# -- argument plumbing ------------------------------------------------------

def _args_dict(a) -> dict:
    d = {k: v for k, v in vars(a).items() if k not in ("func", "verbose", "command")}
    if "size" in d and isinstance(d["size"], tuple):
        d["size"] = f"{d['size'][0]}x{d['size'][1]}"
    return d


def _to_argv(command: str, args: dict) -> list:
    flags = []
    for key, value in args.items():
        if value is None:
            continue
        flag = "--" + key.replace("_", "-")
        if key == "compensate":
            flags += [flag, "on" if value else "off"]
        else:
            flags += [flag, str(value)]
    return flags


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kbunmix", description="Kurtosis-based smooth NMF unmixing")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="generate a synthetic scene")
    s.add_argument("--endmembers", type=int, default=3)
    s.add_argument("--size", type=parse_size, default=(64, 64))
    s.add_argument("--bands", type=int, default=200)
    s.add_argument("--field-scale", type=float, default=8.0)
    s.add_argument("--purity", type=float, default=1.0)
    s.add_argument("--contrast", type=float, default=2.0)
    s.add_argument("--snr", type=float, default=None, help="dB; omit for a clean cube")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--library", default="bundled", help="spectra file or 'bundled'")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    u = sub.add_parser("unmix", help="run KbSNMF on a cube")
    u.add_argument("--input", required=True)
    u.add_argument("--endmembers", type=int, required=True)
    _solver_flags(u)
    u.add_argument("--init", choices=("nndsvd", "random"), default="nndsvd")
    u.add_argument("--seed", type=int, default=0)
    u.add_argument("--compensate", type=_on_off, default=True, help="on|off")
    u.add_argument("--stop-on", choices=("objective", "fit"), default="objective")
    u.add_argument("--out", required=True)
    u.set_defaults(func=cmd_unmix)

    e = sub.add_parser("eval", help="score extracted factors against ground truth")
    e.add_argument("--extracted", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--renormalize", type=_on_off, default=True, help="on|off")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    w = sub.add_parser("sweep", help="grid of synthetic unmixing runs")
    w.add_argument("--grid", required=True, help="e.g. gamma=0:25:1,theta=0:1:0.1")
    w.add_argument("--repeats", type=int, default=1)
    w.add_argument("--seeds", type=int, default=0, help="base seed")
    w.add_argument("--parallel", type=int, default=1)
    w.add_argument("--endmembers", type=int, default=3)
    w.add_argument("--size", type=parse_size, default=(16, 16))
    w.add_argument("--bands", type=int, default=100)
    w.add_argument("--snr", type=float, default=None)
    w.add_argument("--field-scale", type=float, default=4.0)
    w.add_argument("--purity", type=float, default=1.0)
    w.add_argument("--contrast", type=float, default=2.0)
    _solver_flags(w)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)

    r = sub.add_parser("replay", help="re-run a manifest and verify its outputs")
    r.add_argument("manifest")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_replay)
    return p


def _solver_flags(p):
    p.add_argument("--variant", choices=("fnorm", "div"), default="fnorm")
    p.add_argument("--gamma", type=float, default=None, help="default 3 (fnorm) or 8 (div)")
    p.add_argument("--theta", type=float, default=None, help="default 0.4")
    p.add_argument("--max-iters", type=int, default=1000)
    p.add_argument("--tol", type=float, default=1e-5)


def _validate(a):
    for key in ("endmembers", "bands", "repeats", "parallel", "max_iters"):
        v = getattr(a, key, None)
        if v is not None and v < 1:
            raise UsageError(f"--{key.replace('_', '-')} must be >= 1")
    for key in ("seed", "seeds"):
        v = getattr(a, key, None)
        if v is not None and v < 0:
            raise UsageError(f"--{key} must be >= 0")


def main(argv=None) -> int:
    parser = build_parser()
    try:
        a = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if a.verbose and not logging.getLogger().handlers:
        logging.basicConfig(level=logging.INFO, stream=sys.stderr, format="%(name)s: %(message)s")
    try:
        _validate(a)
        return a.func(a)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"kbunmix: error: {exc}", file=sys.stderr)
        return 2
    except (UnmixError, OSError, ValueError) as exc:
        print(f"kbunmix {a.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
