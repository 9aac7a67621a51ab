"""Signal containers, synthetic AM-FM test signals and SNR helpers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np


class NyquistError(ValueError):
    pass


@dataclass(frozen=True)
class Signal:
    """Uniformly sampled real time series.

    Parameters
    ----------
    samples : array_like
        Real samples, non-empty and finite.
    sample_rate : float
        Sampling frequency in Hz.
    start_time : float
        Time of the first sample in seconds.
    """

    samples: np.ndarray
    sample_rate: float
    start_time: float = 0.0

    def __post_init__(self):
        x = np.array(self.samples, dtype=float, copy=True).ravel()
        if x.size == 0:
            raise ValueError("signal must have at least one sample")
        if not np.all(np.isfinite(x)):
            raise ValueError("signal samples must be finite")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size

    @property
    def m(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def time(self) -> np.ndarray:
        return self.start_time + np.arange(self.samples.size) / self.sample_rate

    @property
    def energy(self) -> float:
        return float(self.samples @ self.samples)

    def with_samples(self, samples) -> "Signal":
        return Signal(samples, self.sample_rate, self.start_time)

    def __add__(self, other: "Signal") -> "Signal":
        _check_compatible(self, other)
        return self.with_samples(self.samples + other.samples)

    def __sub__(self, other: "Signal") -> "Signal":
        _check_compatible(self, other)
        return self.with_samples(self.samples - other.samples)

    def scaled(self, a: float) -> "Signal":
        return self.with_samples(a * self.samples)


def _check_compatible(a: Signal, b: Signal):
    if a.m != b.m:
        raise ValueError(f"length mismatch: {a.m} vs {b.m}")
    if a.sample_rate != b.sample_rate:
        raise ValueError(f"sample rate mismatch: {a.sample_rate} vs {b.sample_rate}")


@dataclass(frozen=True)
class ModeSpec:
    """Closed-form description of one AM-FM mode.

    ``phase_fn`` is the full phase in radians, ``if_fn`` its derivative over
    2*pi (Hz) and ``cr_fn`` the derivative of ``if_fn`` (Hz/s).
    """

    phase_fn: Callable[[np.ndarray], np.ndarray]
    if_fn: Callable[[np.ndarray], np.ndarray]
    cr_fn: Callable[[np.ndarray], np.ndarray]
    amplitude_fn: Callable[[np.ndarray], np.ndarray] = field(
        default=lambda t: np.ones_like(np.asarray(t, dtype=float))
    )
    label: str = ""


@dataclass(frozen=True)
class ModeSet:
    modes: tuple[Signal, ...]
    labels: tuple[str, ...] = ()
    specs: tuple[ModeSpec, ...] = ()

    def __post_init__(self):
        modes = tuple(self.modes)
        object.__setattr__(self, "modes", modes)
        labels = tuple(self.labels) or tuple(f"mode{k}" for k in range(len(modes)))
        if len(labels) != len(modes):
            raise ValueError("one label per mode required")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "specs", tuple(self.specs))
        for md in modes[1:]:
            _check_compatible(modes[0], md)

    def __len__(self) -> int:
        return len(self.modes)

    def __iter__(self):
        return iter(self.modes)

    def __getitem__(self, k) -> Signal:
        return self.modes[k]

    def total(self) -> Signal:
        if not self.modes:
            raise ValueError("empty mode set")
        return self.modes[0].with_samples(np.sum([md.samples for md in self.modes], axis=0))


def synth_mode(spec: ModeSpec, m: int, fs: float) -> Signal:
    """Sample ``amplitude(t) * cos(phase(t))`` at ``t_i = i / fs``."""
    t = np.arange(m) / fs
    f_max = float(np.max(np.abs(spec.if_fn(t))))
    if not fs > 2.0 * f_max:
        raise NyquistError(
            f"sample rate {fs} Hz does not exceed twice the maximum IF {f_max:.6g} Hz"
        )
    return Signal(spec.amplitude_fn(t) * np.cos(spec.phase_fn(t)), fs)


def paper_mode_specs() -> tuple[ModeSpec, ModeSpec]:
    """Two oscillating-IF modes, IFs 250 -/+ 200 cos(7 pi t), crossing repeatedly."""
    c = 200.0 / (7.0 * np.pi)

    def spec(sign, label):
        return ModeSpec(
            phase_fn=lambda t: 2 * np.pi * (250.0 * t + sign * c * np.sin(7 * np.pi * t)),
            if_fn=lambda t: 250.0 + sign * 200.0 * np.cos(7 * np.pi * np.asarray(t)),
            cr_fn=lambda t: -sign * 1400.0 * np.pi * np.sin(7 * np.pi * np.asarray(t)),
            label=label,
        )

    return spec(-1.0, "m1"), spec(+1.0, "m2")


def crossover_mode_specs() -> tuple[ModeSpec, ModeSpec]:
    """Linear chirps with IFs 400 - 200 t and 200 + 200 t (CR -200 and +200 Hz/s)."""
    s1 = ModeSpec(
        phase_fn=lambda t: 2 * np.pi * (400.0 * t - 100.0 * np.asarray(t) ** 2),
        if_fn=lambda t: 400.0 - 200.0 * np.asarray(t),
        cr_fn=lambda t: np.full_like(np.asarray(t, dtype=float), -200.0),
        label="s1",
    )
    s2 = ModeSpec(
        phase_fn=lambda t: 2 * np.pi * (200.0 * t + 100.0 * np.asarray(t) ** 2),
        if_fn=lambda t: 200.0 + 200.0 * np.asarray(t),
        cr_fn=lambda t: np.full_like(np.asarray(t, dtype=float), 200.0),
        label="s2",
    )
    return s1, s2


def tone_spec(freq: float, phase: float = 0.0, label: str = "") -> ModeSpec:
    return ModeSpec(
        phase_fn=lambda t: 2 * np.pi * freq * np.asarray(t) + phase,
        if_fn=lambda t: np.full_like(np.asarray(t, dtype=float), freq),
        cr_fn=lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        label=label or f"tone{freq:g}",
    )


def _compose(specs: Sequence[ModeSpec], fs: float, duration: float):
    m = int(round(fs * duration))
    if m < 1:
        raise ValueError("duration too short for the sample rate")
    modes = tuple(synth_mode(sp, m, fs) for sp in specs)
    ms = ModeSet(modes, tuple(sp.label for sp in specs), tuple(specs))
    return ms.total(), ms


def paper_simulated_signal(fs: float = 1024.0, duration: float = 1.0):
    """Sum of the two oscillating-IF modes and the ground-truth :class:`ModeSet`."""
    return _compose(paper_mode_specs(), fs, duration)


def crossover_chirp_pair(fs: float = 1024.0, duration: float = 1.0):
    """Sum of two crossing linear chirps (crossing at t = 0.5 s) and the truth."""
    return _compose(crossover_mode_specs(), fs, duration)


def tones(freqs: Sequence[float] = (100.0, 300.0), fs: float = 1024.0, duration: float = 1.0):
    return _compose([tone_spec(f) for f in freqs], fs, duration)


def add_white_noise(x: Signal, snr_db: float, seed: int | None = None):
    """Add real white Gaussian noise at the requested SNR.

    The noise realization is rescaled so that the sample SNR
    ``10 log10(||x||^2 / ||e||^2)`` equals ``snr_db`` exactly.

    Returns
    -------
    noisy : Signal
    noise_variance : float
        Per-sample variance of the added noise (``||e||^2 / m``).
    """
    energy = x.energy
    if energy <= 0:
        raise ValueError("cannot set an SNR relative to a zero-energy signal")
    if np.isposinf(snr_db):
        return x, 0.0
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(x.m)
    e *= np.sqrt(energy / 10.0 ** (snr_db / 10.0) / float(e @ e))
    return x.with_samples(x.samples + e), float(e @ e) / x.m


def snr_db(reference: Signal | np.ndarray, estimate: Signal | np.ndarray) -> float:
    """``20 log10(||reference|| / ||reference - estimate||)``; +inf on exact match."""
    if isinstance(reference, Signal) and isinstance(estimate, Signal):
        _check_compatible(reference, estimate)
    r = np.asarray(getattr(reference, "samples", reference), dtype=float)
    e = np.asarray(getattr(estimate, "samples", estimate), dtype=float)
    if r.shape != e.shape:
        raise ValueError(f"length mismatch: {r.shape} vs {e.shape}")
    err = np.linalg.norm(r - e)
    if err == 0:
        return float("inf")
    ref = np.linalg.norm(r)
    if ref == 0:
        return float("-inf")
    return float(20.0 * np.log10(ref / err))
