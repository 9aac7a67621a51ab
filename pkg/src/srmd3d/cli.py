"""Command-line front end: ``python -m srmd3d <command>``.

Commands
--------
synth        write a synthetic test signal and its ground-truth modes
decompose    split a CSV/WAV signal into modes (3D-SRMD or baseline SRMD)
benchmark    run the noise sweep described by a JSON config
spectrogram  export STFT magnitudes or the chirplet tensor
rerun        repeat the run recorded in a manifest

Every command that writes a directory leaves ``manifest.json`` there with
the resolved arguments and SHA-256 checksums of inputs and outputs. Exit
codes: 0 success, 2 outputs written but the solver did not converge,
1 error.

Decomposition flags can also come from ``SRMD3D_*`` environment variables
(``SRMD3D_K``, ``SRMD3D_N_FEATURES``, ``SRMD3D_ALPHA``, ``SRMD3D_LAMBDA``,
``SRMD3D_SIGMA``, ``SRMD3D_SEED``, ``SRMD3D_MAX_ITER``); an explicit flag
wins over the environment.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .baseline import match_modes, srmd_decompose
from .features import write_atoms_csv
from .io import read_signal, write_signal_csv, write_tensor_binary, write_tensor_csv, write_wav
from .pipeline import (DecompositionConfig, benchmark_snr_sweep, decompose_3d,
                       summarize_benchmark, write_benchmark_csv)
from .ridges import write_ridges_csv
from .signal import ModeSet, add_white_noise, crossover_chirp_pair, paper_simulated_signal, tones
from .tfa import STFTGrid, chirplet_transform, default_cr_axis, stft

log = logging.getLogger("srmd3d")

SIGNALS = {
    "paper-sim": paper_simulated_signal,
    "crossover-pair": crossover_chirp_pair,
    "tones": tones,
}

# flag name -> (env var, type)
ENV_FLAGS = {
    "k": ("SRMD3D_K", int),
    "n_features": ("SRMD3D_N_FEATURES", int),
    "alpha": ("SRMD3D_ALPHA", float),
    "lam": ("SRMD3D_LAMBDA", float),
    "sigma": ("SRMD3D_SIGMA", float),
    "seed": ("SRMD3D_SEED", int),
    "max_iter": ("SRMD3D_MAX_ITER", int),
}
DEFAULTS = {"k": 2, "n_features": 5000, "alpha": None, "lam": None, "sigma": None,
            "seed": 0, "max_iter": 1000}


class CliError(Exception):
    pass


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _float(s: str) -> float:
    return float(s)  # accepts "inf"


def _apply_env(ns: argparse.Namespace) -> None:
    # a manifest re-run already carries resolved values
    if getattr(ns, "resolved", False):
        return
    for name, (var, typ) in ENV_FLAGS.items():
        if not hasattr(ns, name):
            continue
        if getattr(ns, name) is None and var in os.environ:
            try:
                setattr(ns, name, typ(os.environ[var]))
            except ValueError as exc:
                raise CliError(f"{var}={os.environ[var]!r}: {exc}") from exc
        if getattr(ns, name) is None:
            setattr(ns, name, DEFAULTS[name])


def _finish_dir(tmp: Path, out: Path) -> None:
    """Move a completed temporary directory into place."""
    if out.exists():
        for p in tmp.iterdir():
            dest = out / p.name
            if dest.exists():
                dest.unlink()
            shutil.move(str(p), dest)
        tmp.rmdir()
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        shutil.move(str(tmp), out)


def _write_manifest(d: Path, command: str, args: dict, inputs: list, extra: dict | None = None):
    outputs = {p.name: sha256(p) for p in sorted(d.iterdir()) if p.name != "manifest.json"}
    manifest = {
        "tool": "srmd3d",
        "tool_version": __version__,
        "command": command,
        "args": args,
        "seed": args.get("seed"),
        "input_checksums": {str(p): sha256(p) for p in inputs},
        "output_checksums": outputs,
    }
    if extra:
        manifest.update(extra)
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    if isinstance(v, Path):
        return str(v)
    return v


def cmd_synth(ns) -> int:
    factory = SIGNALS[ns.kind]
    kwargs = {"fs": ns.fs, "duration": ns.duration}
    if ns.kind == "tones" and ns.freqs:
        kwargs["freqs"] = ns.freqs
    x, modes = factory(**kwargs)
    x, noise_var = add_white_noise(x, ns.snr_db, ns.seed)
    out = Path(ns.out)
    tmp = Path(tempfile.mkdtemp(prefix=".synth-", dir=out.parent if out.parent.exists() else None))
    ext = ns.format
    writer = write_signal_csv if ext == "csv" else write_wav
    writer(tmp / f"signal.{ext}", x)
    for k, md in enumerate(modes):
        writer(tmp / f"truth_mode{k}.{ext}", md)
    args = {k: _jsonable(v) for k, v in vars(ns).items() if k not in ("func", "resolved")}
    _write_manifest(tmp, "synth", args, [], {"noise_variance": noise_var})
    _finish_dir(tmp, out)
    print(f"wrote {len(modes)} modes and signal.{ext} to {out}")
    return 0


def _run_decompose(ns, x, tmp: Path) -> tuple[int, list]:
    truth = [read_signal(p, ns.channel) for p in (ns.truth or [])]
    if ns.method == "srmd3d":
        cfg = DecompositionConfig(k_modes=ns.k, n_features_per_mode=ns.n_features, alpha=ns.alpha,
                                  lam=ns.lam, max_solver_iter=ns.max_iter, seed=ns.seed,
                                  sigma_override=ns.sigma)
        res = decompose_3d(x, cfg)
        modes, sol = res.modes, res.solution
        write_ridges_csv(tmp / "ridges.csv", res.ridges)
        write_atoms_csv(tmp / "atoms.csv", res.atoms.groups)
        sigma2 = res.sigma2
    else:
        res = srmd_decompose(x, ns.k * ns.n_features, alpha=ns.alpha, seed=ns.seed,
                             max_iter=ns.max_iter, sigma_override=ns.sigma)
        modes, sol = res.modes, res.solution
        labels = np.full(res.atoms.n_atoms, -1)
        labels[res.kept] = res.labeling.labels
        write_atoms_csv(tmp / "atoms.csv", res.atoms.groups, labels)
        sigma2 = res.sigma2
    sol.write_trace(tmp / "solver_trace.csv")
    for k, md in enumerate(modes):
        write_signal_csv(tmp / f"mode{k}.csv", md)
        if ns.wav:
            write_wav(tmp / f"mode{k}.wav", md)
    report = {"converged": bool(sol.converged), "iterations": sol.iterations,
              "residual_norm": sol.residual_norm, "sigma2": sigma2, "n_modes": len(modes)}
    if truth:
        _, snr = match_modes(ModeSet(tuple(truth)), modes)
        report["snr_db"] = [float(s) for s in snr]
        for k, s in enumerate(snr):
            print(f"mode {k}: output SNR {s:.2f} dB")
    (tmp / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    print(f"{ns.method}: {len(modes)} modes, solver "
          f"{'converged' if sol.converged else 'did not converge'} after {sol.iterations} iterations")
    return (0 if sol.converged else 2), truth


def cmd_decompose(ns) -> int:
    _apply_env(ns)
    inp = Path(ns.input)
    if not inp.exists():
        raise CliError(f"input not found: {inp}")
    x = read_signal(inp, ns.channel, ns.fs)
    out = Path(ns.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".decompose-", dir=out.parent))
    try:
        code, _ = _run_decompose(ns, x, tmp)
        args = {k: _jsonable(v) for k, v in vars(ns).items() if k not in ("func", "resolved")}
        _write_manifest(tmp, "decompose", args, [inp, *(ns.truth or [])])
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    _finish_dir(tmp, out)
    return code


BENCHMARK_FIELDS = {
    "signal": str, "snr_levels": list, "n_trials": int, "seed": int, "k": int,
    "n_features": int, "alpha": (float, type(None)), "lambda": (float, type(None)),
    "max_iter": int, "methods": list, "fs": float, "duration": float,
}


def load_benchmark_config(path) -> dict:
    """Parse and validate a benchmark config; errors name the line or field."""
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CliError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if not isinstance(cfg, dict):
        raise CliError(f"{path}: top level must be an object")
    unknown = set(cfg) - set(BENCHMARK_FIELDS)
    if unknown:
        raise CliError(f"{path}: unknown field(s) {sorted(unknown)}")
    out = {"signal": "paper-sim", "snr_levels": [0, 5, 10, 15, 20], "n_trials": 10, "seed": 0,
           "k": 2, "n_features": 5000, "alpha": None, "lambda": None, "max_iter": 1000,
           "methods": ["srmd3d", "srmd"], "fs": 1024.0, "duration": 1.0}
    for key, val in cfg.items():
        typ = BENCHMARK_FIELDS[key]
        if typ is float and isinstance(val, int):
            val = float(val)
        if isinstance(typ, tuple) and isinstance(val, int):
            val = float(val)
        if not isinstance(val, typ) or isinstance(val, bool):
            raise CliError(f"{path}: field {key!r} has the wrong type ({type(val).__name__})")
        out[key] = val
    if out["signal"] not in SIGNALS:
        raise CliError(f"{path}: field 'signal' must be one of {sorted(SIGNALS)}")
    try:
        out["snr_levels"] = [float(v) for v in out["snr_levels"]]
    except (TypeError, ValueError) as exc:
        raise CliError(f"{path}: field 'snr_levels' must hold numbers") from exc
    bad = set(out["methods"]) - {"srmd3d", "srmd"}
    if bad:
        raise CliError(f"{path}: field 'methods' has unknown method(s) {sorted(bad)}")
    if out["n_trials"] < 1:
        raise CliError(f"{path}: field 'n_trials' must be >= 1")
    return out


def cmd_benchmark(ns) -> int:
    cfg_path = Path(ns.config)
    if not cfg_path.exists():
        raise CliError(f"config not found: {cfg_path}")
    bc = load_benchmark_config(cfg_path)
    factory = SIGNALS[bc["signal"]]
    dcfg = DecompositionConfig(k_modes=bc["k"], n_features_per_mode=bc["n_features"],
                               alpha=bc["alpha"], lam=bc["lambda"],
                               max_solver_iter=bc["max_iter"], seed=bc["seed"])
    rows = benchmark_snr_sweep(lambda: factory(fs=bc["fs"], duration=bc["duration"]),
                               bc["snr_levels"], bc["n_trials"], dcfg, base_seed=bc["seed"],
                               methods=bc["methods"])
    out = Path(ns.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".benchmark-", dir=out.parent))
    write_benchmark_csv(tmp / "benchmark.csv", rows)
    lines = [f"{'input_snr_db':>12} {'method':>8} {'mean_db':>9} {'std_db':>8} {'failed':>6}"]
    for s in summarize_benchmark(rows):
        lines.append(f"{s['input_snr_db']:>12g} {s['method']:>8} {s['mean']:>9.2f} "
                     f"{s['std']:>8.2f} {s['n_failed']:>6d}")
    (tmp / "summary.txt").write_text("\n".join(lines) + "\n")
    _write_manifest(tmp, "benchmark", {"config": str(cfg_path), "out": str(out), **bc},
                    [cfg_path])
    _finish_dir(tmp, out)
    print("\n".join(lines))
    return 0


def cmd_spectrogram(ns) -> int:
    inp = Path(ns.input)
    if not inp.exists():
        raise CliError(f"input not found: {inp}")
    x = read_signal(inp, ns.channel, ns.fs)
    alpha = ns.alpha if ns.alpha is not None else (x.duration / 80.0) ** 2
    grid = STFTGrid.from_alpha(alpha, x.sample_rate, hop=ns.hop)
    if ns.chirplet:
        cr = default_cr_axis(x.sample_rate, x.duration, ns.cr_max / 1.5 if ns.cr_max else None,
                             n_bins=ns.n_cr)
        obj = chirplet_transform(x, grid, cr)
    else:
        obj = stft(x, grid)
    out = Path(ns.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if ns.format == "csv":
        write_tensor_csv(out, obj)
    else:
        write_tensor_binary(out, obj)
    print(f"wrote {np.shape(obj.values)} tensor to {out}")
    return 0


def cmd_rerun(ns) -> int:
    manifest = json.loads(Path(ns.manifest).read_text())
    command = manifest.get("command")
    args = dict(manifest.get("args", {}))
    if command == "benchmark":
        sub = argparse.Namespace(config=args["config"], out=ns.out)
        return cmd_benchmark(sub)
    if command not in ("synth", "decompose"):
        raise CliError(f"manifest command {command!r} cannot be re-run")
    for key, val in list(args.items()):
        if isinstance(val, str) and val in ("inf", "-inf", "nan"):
            args[key] = float(val)
    args["out"] = ns.out
    args["resolved"] = True
    sub = argparse.Namespace(**args)
    if command == "decompose":
        for path, digest in manifest.get("input_checksums", {}).items():
            if Path(path).exists() and sha256(path) != digest:
                log.warning("input %s changed since the manifest was written", path)
        return cmd_decompose(sub)
    return cmd_synth(sub)


def _add_config_flags(p):
    p.add_argument("--k", type=int, help="number of modes")
    p.add_argument("--n-features", dest="n_features", type=int, help="features per mode")
    p.add_argument("--alpha", type=float, help="atom envelope variance in s^2 (default: from the ridge window)")
    p.add_argument("--lambda", dest="lam", type=float, help="feature band width in Hz")
    p.add_argument("--sigma", type=float, help="noise std; skips the estimator")
    p.add_argument("--seed", type=int)
    p.add_argument("--max-iter", dest="max_iter", type=int, help="solver iteration budget")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="srmd3d", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic signal and its modes")
    p.add_argument("kind", choices=sorted(SIGNALS))
    p.add_argument("--fs", type=float, default=1024.0)
    p.add_argument("--duration", type=float, default=1.0)
    p.add_argument("--snr-db", dest="snr_db", type=_float, default=float("inf"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--freqs", type=float, nargs="+", help="tone frequencies (tones only)")
    p.add_argument("--format", choices=("csv", "wav"), default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("decompose", help="decompose a signal file")
    p.add_argument("input")
    p.add_argument("--method", choices=("srmd3d", "srmd"), default="srmd3d")
    _add_config_flags(p)
    p.add_argument("--truth", nargs="+", help="ground-truth mode files for an SNR report")
    p.add_argument("--channel", type=int, help="WAV channel to use")
    p.add_argument("--fs", type=float, help="sample rate for a one-row CSV")
    p.add_argument("--wav", action="store_true", help="also write modes as WAV")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("benchmark", help="run a noise sweep from a JSON config")
    p.add_argument("config")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("spectrogram", help="export STFT or chirplet magnitudes")
    p.add_argument("input")
    p.add_argument("--chirplet", action="store_true", help="time-frequency-chirprate tensor")
    p.add_argument("--alpha", type=float, help="window variance in s^2")
    p.add_argument("--hop", type=int)
    p.add_argument("--n-cr", dest="n_cr", type=int, default=41)
    p.add_argument("--cr-max", dest="cr_max", type=float, help="largest |chirp rate| in Hz/s")
    p.add_argument("--channel", type=int)
    p.add_argument("--fs", type=float)
    p.add_argument("--format", choices=("csv", "bin"), default="csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_spectrogram)

    p = sub.add_parser("rerun", help="repeat a run from its manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rerun)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    ns = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return ns.func(ns)
    except (CliError, FileNotFoundError, ValueError, RuntimeError, MemoryError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
