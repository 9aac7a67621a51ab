"""Noise variance from the noise-only cells of a spectrogram.

For white Gaussian noise of variance ``s2`` the interior STFT bins are
circular complex Gaussian, so ``|Y|^2`` is exponential with mean
``s2 * sum(g^2)``. Cells are split into signal and noise by thresholding
``|Y|^2`` at a chi-square(2) quantile of the current noise level; the level
is re-estimated from the noise cells, and the noise set shrunk, until the
split stops changing.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .signal import Signal
from .tfa import STFTGrid, stft


@dataclass(frozen=True)
class NoiseEstimate:
    sigma2: float
    n_noise_bins: int
    n_iterations: int
    n_bins: int = 0
    reliable: bool = True
    history: tuple[int, ...] = ()


def estimate_noise_variance(x: Signal, grid: STFTGrid, quantile: float = 0.7,
                            max_iter: int = 20, stable_tol: float = 1e-3,
                            min_noise_fraction: float = 0.1,
                            init_quantile: float = 0.25) -> NoiseEstimate:
    """Iterative chi-square segmentation of ``|STFT|^2``.

    Parameters
    ----------
    quantile : float
        A cell is signal when ``|Y|^2`` exceeds this quantile of the noise
        distribution at the current level. A fairly low quantile keeps out
        the cells where a fast chirp's smeared energy is comparable to the
        noise; the truncated-exponential correction keeps the estimate
        unbiased for pure noise.
    stable_tol : float
        Stop once the noise-cell count changes by at most this fraction.
    min_noise_fraction : float
        Below this share of noise cells the estimate is flagged unreliable.
    init_quantile : float
        Quantile of ``|Y|^2`` used for the starting level. The median
        (0.5) overshoots when fast chirps smear the signal over half the
        plane; a lower quantile starts inside the noise.

    Returns
    -------
    NoiseEstimate
        ``sigma2`` is the per-sample time-domain variance.
    """
    if x.m < 4 * grid.window_len:
        raise ValueError(
            f"signal of {x.m} samples is shorter than 4 windows ({4 * grid.window_len})"
        )
    spec = stft(x, grid)
    # DC and Nyquist bins are real-valued, not exponential; leave them out
    hi = grid.freq_bins - 1 if grid.window_len % 2 == 0 else grid.freq_bins
    # frames whose window hangs over the zero padding see less noise
    half = grid.window_len // 2
    c = grid.frame_centers(x.m)
    inner = (c >= half) & (c <= x.m - 1 - half)
    p = spec.power[inner][:, 1:hi].ravel()
    n_bins = p.size
    # chi2(2)/2 is Exp(1): thresholds in units of the mean
    gamma = chi2.ppf(quantile, 2) / 2.0
    # a low quantile of Exp(mu) is -mu ln(1 - q); the median rule is q = 0.5
    level = float(np.quantile(p, init_quantile)) / -np.log1p(-init_quantile)
    noise = p <= gamma * level
    history = [int(noise.sum())]
    # mean of Exp(1) truncated at gamma
    trunc = 1.0 - gamma * np.exp(-gamma) / (1.0 - np.exp(-gamma))
    it = 0
    for it in range(1, max_iter + 1):
        if not noise.any():
            break
        level = float(p[noise].mean()) / trunc
        # the noise set only shrinks, so the refinement is monotone
        noise = noise & (p <= gamma * level)
        history.append(int(noise.sum()))
        if abs(history[-2] - history[-1]) <= stable_tol * max(history[-2], 1):
            break
    n_noise = int(noise.sum())
    g = grid.window(x.sample_rate)
    sigma2 = max(level, 0.0) / float(g @ g)
    return NoiseEstimate(sigma2, n_noise, it, n_bins, n_noise >= min_noise_fraction * n_bins,
                         tuple(history))


def bpdn_sigma(estimate_sigma2: float, x: Signal, floor_rel: float = 1e-10) -> float:
    """``sqrt(m) * sigma``, with ``sigma^2`` floored at ``floor_rel`` times the mean power."""
    power = x.energy / x.m
    s2 = max(estimate_sigma2, floor_rel * power)
    return float(np.sqrt(x.m * s2))
