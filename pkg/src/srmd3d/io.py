"""Signal and tensor file formats.

* signal CSV: header ``time,value``, one sample per row
* WAV: PCM16, PCM32 or IEEE float32 (read); float32 or PCM16 (write)
* tensor CSV: ``frame,freq,cr,magnitude`` in long format
* tensor binary: three little-endian u64 dims ``(frames, freqs, crs)``
  followed by row-major little-endian f64 magnitudes

Floats are written with ``repr`` so every CSV round-trips exactly.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .signal import Signal
from .tfa import Spectrogram, TFCRepresentation


class UnsupportedWavError(ValueError):
    pass


def write_signal_csv(path, x: Signal) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "value"])
        for t, v in zip(x.time, x.samples):
            w.writerow([repr(float(t)), repr(float(v))])


def read_signal_csv(path, sample_rate: float | None = None) -> Signal:
    """Read ``time,value``; the sample rate comes from the time step unless given."""
    t, v = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"time", "value"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns time,value")
        for row in reader:
            t.append(float(row["time"]))
            v.append(float(row["value"]))
    if not v:
        raise ValueError(f"{path}: no samples")
    if sample_rate is None:
        if len(t) < 2:
            raise ValueError(f"{path}: one sample, pass the sample rate explicitly")
        dt = np.diff(t)
        if not np.allclose(dt, dt[0], rtol=1e-6):
            raise ValueError(f"{path}: time column is not uniformly sampled")
        sample_rate = 1.0 / float(np.mean(dt))
    return Signal(np.array(v), sample_rate, t[0])


def read_wav(path, channel: int | None = None) -> Signal:
    """Mono signal from a WAV file, scaled to [-1, 1] for integer formats.

    Parameters
    ----------
    channel : int, optional
        Channel to keep for multi-channel files; required when there is
        more than one.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(64)
    if head[:4] != b"RIFF" or head[8:12] != b"WAVE":
        raise UnsupportedWavError(f"{path}: not a RIFF/WAVE file")
    fs, data = wavfile.read(path)
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        samples = data.astype(float) / 2147483648.0
    elif data.dtype == np.float32:
        samples = data.astype(float)
    else:
        raise UnsupportedWavError(
            f"{path}: unsupported WAV encoding {data.dtype} "
            "(supported: PCM16, PCM32, float32)"
        )
    if samples.ndim == 2:
        if channel is None:
            if samples.shape[1] != 1:
                raise UnsupportedWavError(
                    f"{path}: {samples.shape[1]} channels, choose one with the channel option"
                )
            channel = 0
        if not 0 <= channel < samples.shape[1]:
            raise ValueError(f"{path}: channel {channel} out of range")
        samples = samples[:, channel]
    elif channel not in (None, 0):
        raise ValueError(f"{path}: mono file has no channel {channel}")
    return Signal(samples, float(fs))


def write_wav(path, x: Signal, encoding: str = "float32") -> None:
    if encoding == "float32":
        data = x.samples.astype(np.float32)
    elif encoding == "pcm16":
        peak = np.abs(x.samples).max()
        scale = 1.0 / peak if peak > 1 else 1.0
        data = np.round(x.samples * scale * 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    fs = int(round(x.sample_rate))
    if fs != x.sample_rate:
        raise ValueError("WAV needs an integer sample rate")
    wavfile.write(path, fs, data)


def read_signal(path, channel: int | None = None, sample_rate: float | None = None) -> Signal:
    """Dispatch on the extension: ``.wav`` or CSV."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix.lower() == ".wav":
        return read_wav(path, channel)
    return read_signal_csv(path, sample_rate)


def _as_cube(obj) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Magnitudes shaped (frames, freqs, crs) plus the freq and cr axes."""
    if isinstance(obj, TFCRepresentation):
        return np.abs(obj.values), obj.freq_axis, obj.cr_axis
    if isinstance(obj, Spectrogram):
        return np.abs(obj.values)[:, :, None], obj.freq_axis, np.zeros(1)
    raise TypeError(f"cannot export {type(obj).__name__}")


def write_tensor_csv(path, obj) -> None:
    """Long format ``frame,freq,cr,magnitude`` with ``freq`` in Hz and ``cr`` in Hz/s."""
    mag, freq, cr = _as_cube(obj)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["frame", "freq", "cr", "magnitude"])
        for f in range(mag.shape[0]):
            for i in range(mag.shape[1]):
                for j in range(mag.shape[2]):
                    w.writerow([f, repr(float(freq[i])), repr(float(cr[j])),
                                repr(float(mag[f, i, j]))])


def read_tensor_csv(path) -> np.ndarray:
    rows = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    frames = int(rows[:, 0].max()) + 1
    nf = np.unique(rows[:, 1]).size
    nc = np.unique(rows[:, 2]).size
    return rows[:, 3].reshape(frames, nf, nc)


def write_tensor_binary(path, obj) -> None:
    mag, _, _ = _as_cube(obj)
    with open(path, "wb") as fh:
        fh.write(struct.pack("<3Q", *mag.shape))
        fh.write(np.ascontiguousarray(mag, dtype="<f8").tobytes())


def read_tensor_binary(path) -> np.ndarray:
    with open(path, "rb") as fh:
        dims = struct.unpack("<3Q", fh.read(24))
        data = np.frombuffer(fh.read(), dtype="<f8")
    if data.size != dims[0] * dims[1] * dims[2]:
        raise ValueError(f"{path}: header says {dims}, found {data.size} values")
    return data.reshape(dims)
