"""Gaussian-window STFT, its least-squares inverse, and the chirplet transform.

All transforms reference phase to absolute time: frame ``f`` centred at
``tau_f`` holds ``sum_t x(t) g(t - tau_f) exp(-2j pi xi t)``. The chirplet
transform multiplies in an extra ``exp(-j pi beta (t - tau_f)^2)`` so the
``beta = 0`` slice is the STFT.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .signal import Signal

# window support in standard deviations
WINDOW_SUPPORT = 3.0


class COLAError(ValueError):
    pass


@dataclass(frozen=True)
class STFTGrid:
    """Frame layout for a Gaussian window ``g(t) = exp(-t^2 / (2 alpha))``.

    ``alpha`` is the window variance in s^2. ``freq_bins`` is either
    ``window_len`` (full spectrum) or ``window_len // 2 + 1`` (real spectrum).
    """

    hop: int
    window_len: int
    window_param_alpha: float
    freq_bins: int

    def __post_init__(self):
        if self.hop < 1:
            raise ValueError("hop must be >= 1")
        if self.window_len < 1 or self.window_len % 2 == 0:
            raise ValueError(f"window_len must be odd and positive, got {self.window_len}")
        if not self.window_param_alpha > 0:
            raise ValueError("alpha must be positive")
        if self.freq_bins not in (self.window_len, self.window_len // 2 + 1):
            raise ValueError("freq_bins must be window_len or window_len // 2 + 1")

    @property
    def onesided(self) -> bool:
        return self.freq_bins != self.window_len or self.window_len == 1

    @classmethod
    def from_alpha(cls, alpha: float, fs: float, hop: int | None = None,
                   onesided: bool = True) -> "STFTGrid":
        """Truncate the Gaussian at 3 standard deviations, odd length, hop = len / 8."""
        half = int(round(WINDOW_SUPPORT * np.sqrt(alpha) * fs))
        n = 2 * half + 1
        hop = max(1, n // 8) if hop is None else hop
        return cls(hop, n, alpha, n // 2 + 1 if onesided else n)

    def window(self, fs: float) -> np.ndarray:
        """Window samples normalized to unit sum."""
        half = self.window_len // 2
        t = np.arange(-half, half + 1) / fs
        g = np.exp(-t**2 / (2.0 * self.window_param_alpha))
        return g / g.sum()

    def frame_centers(self, m: int) -> np.ndarray:
        """Sample indices of the frame centres; frames span ``[0, m - 1]``."""
        return np.arange(0, m, self.hop)

    def freq_axis(self, fs: float) -> np.ndarray:
        return np.arange(self.freq_bins) * fs / self.window_len


@dataclass(frozen=True)
class Spectrogram:
    """Complex STFT coefficients with their axes (frames x frequency bins)."""

    values: np.ndarray
    time_axis: np.ndarray
    freq_axis: np.ndarray
    grid: STFTGrid
    sample_rate: float
    n_samples: int

    @property
    def power(self) -> np.ndarray:
        return np.abs(self.values) ** 2


@dataclass(frozen=True)
class TFCRepresentation:
    """Chirplet coefficients indexed ``(time_frame, freq_bin, cr_bin)``."""

    values: np.ndarray
    time_axis: np.ndarray
    freq_axis: np.ndarray
    cr_axis: np.ndarray
    grid: STFTGrid | None = None
    sample_rate: float | None = None
    n_samples: int | None = None

    def __post_init__(self):
        shape = (self.time_axis.size, self.freq_axis.size, self.cr_axis.size)
        if self.values.shape != shape:
            raise ValueError(f"tensor shape {self.values.shape} does not match axes {shape}")
        for name in ("time_axis", "freq_axis", "cr_axis"):
            ax = getattr(self, name)
            if ax.size > 1:
                d = np.diff(ax)
                if np.any(d <= 0) or not np.allclose(d, d[0], rtol=1e-9, atol=0):
                    raise ValueError(f"{name} must be strictly increasing and uniform")

    @property
    def magnitude(self) -> np.ndarray:
        return np.abs(self.values)

    def scaled(self, a: float) -> "TFCRepresentation":
        return TFCRepresentation(a * self.values, self.time_axis, self.freq_axis,
                                 self.cr_axis, self.grid, self.sample_rate, self.n_samples)


def _segments(x: np.ndarray, grid: STFTGrid) -> tuple[np.ndarray, np.ndarray]:
    """Zero-padded signal segments under each frame, shape (frames, window_len)."""
    m = x.size
    half = grid.window_len // 2
    centers = grid.frame_centers(m)
    padded = np.concatenate([np.zeros(half), x, np.zeros(half)])
    idx = centers[:, None] + np.arange(grid.window_len)[None, :]
    return padded[idx], centers


def _kernel_fft(seg: np.ndarray, centers: np.ndarray, grid: STFTGrid) -> np.ndarray:
    """FFT of windowed segments, phase-shifted to absolute time."""
    n = grid.window_len
    half = n // 2
    spec = np.fft.fft(seg, axis=-1)[..., : grid.freq_bins]
    k = np.arange(grid.freq_bins)
    start = centers - half
    shift = np.exp(-2j * np.pi * np.outer(start, k) / n)
    if spec.ndim == 3:
        shift = shift[:, None, :]
    return spec * shift


def stft(x: Signal, grid: STFTGrid) -> Spectrogram:
    """Short-time Fourier transform with a unit-sum Gaussian window."""
    if grid.window_len > x.m:
        raise ValueError(
            f"window of {grid.window_len} samples is longer than the signal ({x.m})"
        )
    g = grid.window(x.sample_rate)
    seg, centers = _segments(x.samples, grid)
    vals = _kernel_fft(seg * g, centers, grid)
    return Spectrogram(vals, x.start_time + centers / x.sample_rate,
                       grid.freq_axis(x.sample_rate), grid, x.sample_rate, x.m)


def check_cola(grid: STFTGrid, fs: float, m: int | None = None) -> None:
    """Raise :class:`COLAError` if squared windows leave gaps between frames."""
    g = grid.window(fs)
    n = grid.window_len
    if grid.hop > n:
        raise COLAError(f"hop {grid.hop} exceeds window length {n}: frames leave gaps")
    acc = np.zeros(grid.hop)
    for start in range(0, n, grid.hop):
        chunk = g[start : start + grid.hop] ** 2
        acc[: chunk.size] += chunk
    if acc.min() <= 1e-12 * acc.max():
        raise COLAError(
            f"squared-window overlap vanishes for hop {grid.hop}, window {n}"
        )


def istft(spec: Spectrogram) -> Signal:
    """Weighted overlap-add with least-squares synthesis.

    ``x(t) = sum_f g(t - tau_f) y_f(t) / sum_f g(t - tau_f)^2`` where ``y_f`` is
    the inverse DFT of frame ``f``. Exact wherever frames overlap.
    """
    grid = spec.grid
    fs = spec.sample_rate
    check_cola(grid, fs)
    n = grid.window_len
    half = n // 2
    m = spec.n_samples
    g = grid.window(fs)
    centers = grid.frame_centers(m)
    k = np.arange(grid.freq_bins)
    unshift = np.exp(2j * np.pi * np.outer(centers - half, k) / n)
    vals = spec.values * unshift
    if grid.onesided:
        frames = np.fft.irfft(vals, n=n, axis=-1)
    else:
        frames = np.fft.ifft(vals, axis=-1).real
    num = np.zeros(m + 2 * half)
    den = np.zeros(m + 2 * half)
    for c, fr in zip(centers, frames):
        num[c : c + n] += g * fr
        den[c : c + n] += g**2
    num = num[half : half + m]
    den = den[half : half + m]
    out = np.zeros(m)
    ok = den > 1e-300
    out[ok] = num[ok] / den[ok]
    return Signal(out, fs, spec.time_axis[0] if spec.time_axis.size else 0.0)


def default_cr_axis(fs: float, duration: float, max_cr_hint: float | None = None,
                    n_bins: int = 41) -> np.ndarray:
    """Symmetric chirp-rate axis: +/-1.5 * hint, or +/-4 fs/L without a hint."""
    span = 1.5 * abs(max_cr_hint) if max_cr_hint else 4.0 * fs / duration
    return np.linspace(-span, span, n_bins)


def chirplet_transform(x: Signal, grid: STFTGrid, cr_axis) -> TFCRepresentation:
    """Time-frequency-chirprate coefficients.

    ``values[f, k, b] = sum_t x(t) g(t - tau_f) exp(-2j pi xi_k t)
    exp(-j pi beta_b (t - tau_f)^2)``. Frequencies cover the non-negative
    half of the spectrum.
    """
    cr_axis = np.asarray(cr_axis, dtype=float).ravel()
    if cr_axis.size == 0:
        raise ValueError("cr_axis must not be empty")
    if grid.window_len > x.m:
        raise ValueError(
            f"window of {grid.window_len} samples is longer than the signal ({x.m})"
        )
    fs = x.sample_rate
    g = grid.window(fs)
    half = grid.window_len // 2
    u = np.arange(-half, half + 1) / fs
    seg, centers = _segments(x.samples, grid)
    seg = seg * g
    chirps = np.exp(-1j * np.pi * np.outer(cr_axis, u**2))
    chirps[cr_axis == 0.0] = 1.0
    # (frames, cr, window) -> FFT over the window axis
    vals = _kernel_fft(seg[:, None, :] * chirps[None, :, :], centers, grid)
    vals = np.ascontiguousarray(np.transpose(vals, (0, 2, 1)))
    return TFCRepresentation(vals, x.start_time + centers / fs, grid.freq_axis(fs),
                             cr_axis, grid, fs, x.m)
