"""Original 2D sparse random mode decomposition.

Uniform ``(tau, xi)`` features with zero chirp rate, a BPDN fit, and DBSCAN
over the surviving atoms: each cluster becomes one mode.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from sklearn.cluster import DBSCAN

from .features import AtomBatch, FeatureDictionary, build_dictionary, sample_uniform_2d
from .noise import bpdn_sigma, estimate_noise_variance
from .signal import ModeSet, Signal, snr_db
from .solver import BpdnProblem, SparseSolution, solve_bpdn
from .tfa import STFTGrid


@dataclass(frozen=True)
class ClusterLabeling:
    labels: np.ndarray
    n_clusters: int

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=int)
        if lab.size and (lab.min() < -1 or lab.max() >= self.n_clusters):
            raise ValueError("labels out of range")
        object.__setattr__(self, "labels", lab)

    @property
    def n_noise(self) -> int:
        return int(np.sum(self.labels == -1))


def dbscan(points, eps: float, min_pts: int) -> ClusterLabeling:
    """DBSCAN with Euclidean distance; ``min_pts`` counts the point itself.

    Clusters are numbered in order of their first core point, so the output
    depends on input order only through border points reachable from two
    clusters.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return ClusterLabeling(np.zeros(0, dtype=int), 0)
    pts = pts.reshape(len(pts), -1)
    labels = DBSCAN(eps=eps, min_samples=min_pts).fit(pts).labels_
    return ClusterLabeling(labels, int(labels.max()) + 1 if labels.size else 0)


@dataclass
class SrmdResult:
    """Cluster modes (largest energy first) and the pieces they came from.

    ``discarded`` holds the contribution of atoms dropped by the weight
    floor or labelled noise, so ``sum(modes) + discarded = Psi c``.
    """

    modes: ModeSet
    labeling: ClusterLabeling
    atoms: FeatureDictionary
    solution: SparseSolution
    sigma2: float
    kept: np.ndarray
    discarded: Signal
    timings: dict = field(default_factory=dict)


def srmd_decompose(x: Signal, n_features: int, alpha: float | None = None, eps: float = 0.03,
                   min_pts: int = 4, seed=None, f_max: float | None = None,
                   weight_floor: float = 1e-3, max_iter: int = 1000,
                   sigma_override: float | None = None) -> SrmdResult:
    """Decompose ``x`` with uniform 2D features and DBSCAN grouping.

    Parameters
    ----------
    n_features : int
        Total number of atoms.
    alpha : float, optional
        Gaussian envelope variance in s^2; defaults to ``(L / 80)^2``.
    eps, min_pts
        DBSCAN settings on ``(tau / L, xi / f_max)``.
    f_max : float, optional
        Upper frequency of the sampling box; defaults to ``fs / 2``.
    weight_floor : float
        Atoms with ``|c| < weight_floor * max|c|`` are not clustered.
    sigma_override : float, optional
        Noise standard deviation; estimated from ``x`` when omitted.
    """
    if n_features < 1:
        raise ValueError("n_features must be >= 1")
    timings = {}
    L = x.duration
    fs = x.sample_rate
    alpha = (L / 80.0) ** 2 if alpha is None else alpha
    f_max = fs / 2 if f_max is None else f_max
    t_grid = np.arange(x.m) / fs

    t0 = time.perf_counter()
    atoms = sample_uniform_2d(n_features, L, f_max, seed)
    dictionary, psi = build_dictionary([atoms], t_grid, alpha)
    timings["features"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    if sigma_override is not None:
        sigma2 = float(sigma_override) ** 2
    elif x.energy == 0:
        sigma2 = 0.0
    else:
        sigma2 = estimate_noise_variance(x, STFTGrid.from_alpha(alpha, fs)).sigma2
    bound = bpdn_sigma(sigma2, x) if x.energy > 0 else 0.0
    timings["noise"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    sol = solve_bpdn(BpdnProblem(psi, x.samples, bound), max_iter=max_iter)
    timings["solver"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    c = sol.coefficients
    cmax = np.abs(c).max() if c.size else 0.0
    kept = np.flatnonzero(np.abs(c) >= weight_floor * cmax) if cmax > 0 else np.zeros(0, int)
    pts = np.column_stack([atoms.tau[kept] / L, atoms.xi[kept] / f_max])
    lab = dbscan(pts, eps, min_pts)
    parts = []
    for j in range(lab.n_clusters):
        idx = kept[lab.labels == j]
        parts.append(psi[:, idx] @ c[idx])
    order = sorted(range(len(parts)), key=lambda j: -float(parts[j] @ parts[j]))
    modes = ModeSet(tuple(x.with_samples(parts[j]) for j in order),
                    tuple(f"cluster{j}" for j in order))
    total = psi @ c
    clustered = np.sum(parts, axis=0) if parts else np.zeros(x.m)
    timings["clustering"] = time.perf_counter() - t0
    return SrmdResult(modes, lab, dictionary, sol, sigma2, kept,
                      x.with_samples(total - clustered), timings)


def match_modes(truth: ModeSet, estimate: ModeSet) -> tuple[np.ndarray, np.ndarray]:
    """Assign estimated modes to true modes maximizing total SNR.

    Returns
    -------
    assignment : ndarray of int
        ``assignment[k]`` is the estimate matched to true mode ``k``, or -1
        when there are fewer estimates than true modes.
    snr : ndarray
        Output SNR per true mode; an unmatched mode scores against zero
        (0 dB).
    """
    k = len(truth)
    table = np.zeros((k, len(estimate)))
    for i, ref in enumerate(truth):
        for j, est in enumerate(estimate):
            table[i, j] = snr_db(ref, est)
    assign = np.full(k, -1)
    snr = np.zeros(k)
    if len(estimate):
        # cap infinities so the assignment stays well defined
        rows, cols = linear_sum_assignment(-np.minimum(table, 1e6))
        assign[rows] = cols
        snr[rows] = table[rows, cols]
    return assign, snr
