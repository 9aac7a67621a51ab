"""End-to-end 3D sparse random mode decomposition and its benchmarks.

``decompose_3d`` runs ridge estimation, concentrated feature sampling,
dictionary assembly, noise estimation and the BPDN fit, then rebuilds each
mode from its own column block. No clustering is needed because every
column already belongs to the mode whose ridge it was sampled around.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .baseline import match_modes, srmd_decompose
from .features import FeatureDictionary, build_dictionary, sample_concentrated_3d
from .noise import bpdn_sigma, estimate_noise_variance
from .ridges import RidgeCurve, RidgeEstimate, estimate_ridges
from .signal import ModeSet, Signal, add_white_noise
from .solver import BpdnProblem, SparseSolution, solve_bpdn
from .tfa import STFTGrid

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    """A stage failed; ``stage`` names it and ``__cause__`` holds the original error."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage


@dataclass(frozen=True)
class DecompositionConfig:
    """Settings for :func:`decompose_3d`.

    ``lam`` (Hz) defaults to ``fs / 100`` once the signal is known.
    ``ridge_window_s`` is the standard deviation of the first-pass
    chirplet window used to find the ridges; it defaults to ``L / 80``.

    ``alpha`` (s^2) is the atom envelope variance. When left unset it
    follows the ridge stage: the atom std is ``atom_window_factor`` times
    the window the ridge estimator settled on, never below ``L / 80``.
    Slowly bending modes thus get longer atoms, which resolve chirp rate
    better; for fast oscillating IFs it stays at ``L / 80``.
    """

    k_modes: int = 2
    n_features_per_mode: int = 5000
    alpha: float | None = None
    lam: float | None = None
    max_solver_iter: int = 1000
    seed: int = 0
    sigma_override: float | None = None
    noise_floor_rel: float = 1e-10
    ridge_window_s: float | None = None
    atom_window_factor: float = 0.6

    def __post_init__(self):
        if self.k_modes < 1 or self.n_features_per_mode < 1 or self.max_solver_iter < 1:
            raise ValueError("k_modes, n_features_per_mode and max_solver_iter must be >= 1")
        if self.alpha is not None and not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lambda must be positive")
        if self.sigma_override is not None and self.sigma_override < 0:
            raise ValueError("sigma must be non-negative")
        if self.ridge_window_s is not None and not self.ridge_window_s > 0:
            raise ValueError("ridge_window_s must be positive")
        if not self.atom_window_factor > 0:
            raise ValueError("atom_window_factor must be positive")

    def resolved(self, x: Signal) -> "DecompositionConfig":
        """Copy with signal-dependent defaults filled in (``alpha`` excepted)."""
        return replace(
            self,
            lam=self.lam if self.lam is not None else x.sample_rate / 100.0,
            ridge_window_s=(self.ridge_window_s if self.ridge_window_s is not None
                            else x.duration / 80.0),
        )


@dataclass
class DecompositionResult:
    modes: ModeSet
    ridges: list[RidgeCurve]
    atoms: FeatureDictionary
    solution: SparseSolution
    sigma2: float
    config: DecompositionConfig
    residual: Signal
    ridge_estimate: RidgeEstimate | None = None
    timings: dict = field(default_factory=dict)

    @property
    def converged(self) -> bool:
        return self.solution.converged


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except PipelineError:
        raise
    except Exception as exc:  # tag and re-raise
        raise PipelineError(name, exc) from exc


def _noise_grid(alpha: float, x: Signal) -> STFTGrid:
    """STFT grid for the noise estimate, shortened until four windows fit in ``x``."""
    grid = STFTGrid.from_alpha(alpha, x.sample_rate)
    while 4 * grid.window_len > x.m and grid.window_len > 3:
        alpha /= 4.0
        grid = STFTGrid.from_alpha(alpha, x.sample_rate)
    return grid


def decompose_3d(x: Signal, cfg: DecompositionConfig | None = None) -> DecompositionResult:
    """Split ``x`` into ``cfg.k_modes`` modes.

    Raises
    ------
    PipelineError
        With ``stage`` one of ``ridges``, ``features``, ``noise``, ``solver``.
    """
    cfg = (cfg or DecompositionConfig()).resolved(x)
    timings = {}
    fs = x.sample_rate
    L = x.duration
    # work on a time axis starting at zero; the output keeps x.start_time
    x0 = Signal(x.samples, fs)

    t0 = time.perf_counter()
    est = _stage("ridges", estimate_ridges, x0, cfg.k_modes, cfg.ridge_window_s)
    timings["ridges"] = time.perf_counter() - t0
    if cfg.alpha is None:
        std = max(L / 80.0, cfg.atom_window_factor * est.window_std_s)
        cfg = replace(cfg, alpha=std ** 2)

    t0 = time.perf_counter()
    seeds = np.random.SeedSequence(cfg.seed).spawn(cfg.k_modes)
    groups = [
        _stage("features", sample_concentrated_3d, r, cfg.n_features_per_mode, cfg.lam,
               np.random.default_rng(s), L=L, fs=fs, mode_index=k)
        for k, (r, s) in enumerate(zip(est.curves, seeds))
    ]
    dictionary, psi = _stage("features", build_dictionary, groups, np.arange(x.m) / fs, cfg.alpha)
    timings["features"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if cfg.sigma_override is not None:
        sigma2 = float(cfg.sigma_override) ** 2
    else:
        grid = _noise_grid(cfg.alpha, x0)
        sigma2 = _stage("noise", estimate_noise_variance, x0, grid).sigma2
    bound = bpdn_sigma(sigma2, x0, cfg.noise_floor_rel)
    timings["noise"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sol = _stage("solver", solve_bpdn, BpdnProblem(psi, x0.samples, bound),
                 max_iter=cfg.max_solver_iter)
    timings["solver"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    c = sol.coefficients
    parts = [psi[:, dictionary.block(k)] @ c[dictionary.block(k)] for k in range(cfg.k_modes)]
    modes = ModeSet(tuple(x.with_samples(p) for p in parts),
                    tuple(f"mode{k}" for k in range(cfg.k_modes)))
    residual = x.with_samples(x.samples - np.sum(parts, axis=0))
    timings["reconstruct"] = time.perf_counter() - t0
    timings["total"] = sum(timings.values())
    if not sol.converged:
        log.warning("solver stopped before convergence: %s", sol.message)
    return DecompositionResult(modes, est.curves, dictionary, sol, sigma2, cfg, residual,
                               est, timings)


# ---------------------------------------------------------------- benchmarks

BENCHMARK_COLUMNS = ("input_snr_db", "method", "trial", "mode", "output_snr_db",
                     "runtime_s", "converged")


@dataclass(frozen=True)
class BenchmarkRow:
    input_snr_db: float
    method: str
    trial: int
    mode: int
    output_snr_db: float
    runtime_s: float
    converged: bool


def trial_seed(base_seed: int, level_index: int, trial: int) -> int:
    return int(np.random.SeedSequence([base_seed, level_index, trial]).generate_state(1)[0])


def benchmark_snr_sweep(signal_factory: Callable[[], tuple[Signal, ModeSet]],
                        input_snrs_db: Sequence[float], n_trials: int,
                        cfg: DecompositionConfig | None = None, base_seed: int = 0,
                        methods: Sequence[str] = ("srmd3d", "srmd"),
                        srmd_kwargs: dict | None = None) -> list[BenchmarkRow]:
    """Output SNR of each method over noise levels and trials.

    Each (level, trial) draws fresh noise from a seed derived from
    ``base_seed``; both methods see the same noisy signal, and the feature
    seed equals the noise seed. The baseline gets ``k_modes *
    n_features_per_mode`` uniform atoms so the dictionaries are the same
    size. Estimated modes are matched to the truth by a maximum-SNR
    assignment. A failing trial yields NaN SNRs and ``converged=False``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    cfg = cfg or DecompositionConfig()
    x, truth = signal_factory()
    srmd_kwargs = dict(srmd_kwargs or {})
    rows: list[BenchmarkRow] = []
    n_fail = 0
    for li, level in enumerate(input_snrs_db):
        for trial in range(n_trials):
            seed = trial_seed(base_seed, li, trial)
            xn, _ = add_white_noise(x, level, seed)
            for method in methods:
                t0 = time.perf_counter()
                try:
                    if method == "srmd3d":
                        res = decompose_3d(xn, replace(cfg, seed=seed))
                        modes, converged = res.modes, res.converged
                    elif method == "srmd":
                        res = srmd_decompose(
                            xn, cfg.k_modes * cfg.n_features_per_mode, alpha=cfg.alpha,
                            seed=seed, max_iter=cfg.max_solver_iter,
                            sigma_override=cfg.sigma_override, **srmd_kwargs)
                        modes, converged = res.modes, res.solution.converged
                    else:
                        raise ValueError(f"unknown method {method!r}")
                    _, snr = match_modes(truth, modes)
                except Exception as exc:  # recorded, not fatal
                    log.warning("%s trial %d at %s dB failed: %s", method, trial, level, exc)
                    n_fail += 1
                    snr, converged = np.full(len(truth), np.nan), False
                runtime = time.perf_counter() - t0
                for k, s in enumerate(snr):
                    rows.append(BenchmarkRow(float(level), method, trial, k, float(s),
                                             runtime, bool(converged)))
    total = len(input_snrs_db) * n_trials * len(methods)
    if n_fail:
        log.warning("%d of %d runs failed", n_fail, total)
    return rows


def write_benchmark_csv(path, rows: Sequence[BenchmarkRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(BENCHMARK_COLUMNS)
        for r in rows:
            w.writerow([repr(r.input_snr_db), r.method, r.trial, r.mode,
                        repr(r.output_snr_db), repr(r.runtime_s), int(r.converged)])


def read_benchmark_csv(path) -> list[BenchmarkRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [BenchmarkRow(float(d["input_snr_db"]), d["method"], int(d["trial"]),
                             int(d["mode"]), float(d["output_snr_db"]), float(d["runtime_s"]),
                             bool(int(d["converged"])))
                for d in csv.DictReader(fh)]


def summarize_benchmark(rows: Sequence[BenchmarkRow]) -> list[dict]:
    """Mean and std of the per-trial average output SNR, per (level, method)."""
    by: dict[tuple, dict[int, list]] = {}
    for r in rows:
        by.setdefault((r.input_snr_db, r.method), {}).setdefault(r.trial, []).append(r.output_snr_db)
    out = []
    for (level, method), trials in sorted(by.items()):
        vals = np.array([np.mean(v) for v in trials.values()])
        ok = vals[np.isfinite(vals)]
        out.append({
            "input_snr_db": level, "method": method, "n_trials": len(vals),
            "n_failed": int(np.sum(~np.isfinite(vals))),
            "mean": float(ok.mean()) if ok.size else float("nan"),
            "std": float(ok.std(ddof=1)) if ok.size > 1 else 0.0,
        })
    return out


@dataclass(frozen=True)
class ComplexityRow:
    m: int
    kn: int
    iterations: int
    seconds_per_iter: float
    matvecs_per_iter: float


def complexity_probe(m_values: Sequence[int], kn_values: Sequence[int], n_iter: int = 30,
                     repeats: int = 5, seed: int = 0) -> tuple[list[ComplexityRow], dict]:
    """Per-iteration BPDN solver time over a grid of ``(m, KN)``.

    Each cell runs ``solve_bpdn`` for exactly ``n_iter`` iterations on a
    random Gaussian dictionary (a tiny target bound keeps it from converging
    early) and keeps the fastest of ``repeats`` runs. Repeats cycle over the
    whole grid rather than finishing one cell at a time.

    Returns
    -------
    rows : list of ComplexityRow
    fit : dict
        ``slope_kn`` and ``slope_m``: least-squares slopes of log time
        against log KN and log m (1.0 is linear); NaN when a dimension has
        a single value.
    """
    rng = np.random.default_rng(seed)
    cells = []
    for m in m_values:
        b = rng.standard_normal(m)
        for kn in kn_values:
            a = rng.standard_normal((m, kn)) / np.sqrt(m)
            cells.append((int(m), int(kn), BpdnProblem(a, b, 1e-9 * np.linalg.norm(b))))
    best = [np.inf] * len(cells)
    sols: list = [None] * len(cells)
    # repeats sweep the whole grid so every cell samples the same background load
    for _ in range(repeats):
        for i, (_, _, prob) in enumerate(cells):
            t0 = time.perf_counter()
            s = solve_bpdn(prob, max_iter=n_iter)
            dt = (time.perf_counter() - t0) / max(s.iterations, 1)
            if dt < best[i]:
                best[i], sols[i] = dt, s
    rows = [ComplexityRow(m, kn, s.iterations, t, s.matvec_count / max(s.iterations, 1))
            for (m, kn, _), t, s in zip(cells, best, sols)]
    fit = {}
    for key, attr in (("slope_kn", "kn"), ("slope_m", "m")):
        vals = {getattr(r, attr) for r in rows}
        if len(vals) < 2:
            fit[key] = float("nan")
            continue
        other = "m" if attr == "kn" else "kn"
        xs, ys = [], []
        # slope within each fixed value of the other dimension, pooled
        for o in {getattr(r, other) for r in rows}:
            sub = [r for r in rows if getattr(r, other) == o]
            if len(sub) < 2:
                continue
            lx = np.log([getattr(r, attr) for r in sub])
            ly = np.log([r.seconds_per_iter for r in sub])
            xs.append(lx - lx.mean())
            ys.append(ly - ly.mean())
        x_all, y_all = np.concatenate(xs), np.concatenate(ys)
        fit[key] = float(x_all @ y_all / (x_all @ x_all))
    return rows, fit
