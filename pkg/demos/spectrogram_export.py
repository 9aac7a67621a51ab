"""
Look at a signal through the two transforms and export them.

The STFT magnitude shows where the energy sits in time and frequency. The
chirplet cube adds a chirp-rate axis; at each time-frequency point its
argmax over chirp rate is a local slope estimate, which is what the ridge
tracker relies on. Both are written with the same writers the CLI uses.
"""

import tempfile
from pathlib import Path

import numpy as np

from srmd3d import STFTGrid, chirplet_transform, default_cr_axis, paper_simulated_signal, stft
from srmd3d.io import write_tensor_binary, write_tensor_csv


def main():
    x, truth = paper_simulated_signal()
    g = STFTGrid.from_alpha((1 / 80) ** 2, x.sample_rate)
    spec = stft(x, g)
    cube = chirplet_transform(x, g, default_cr_axis(x.sample_rate, x.duration))

    mag = np.abs(spec.values)
    print(f"STFT: {mag.shape[0]} frames x {mag.shape[1]} bins, window {g.window_len} samples")
    # a quarter in, where both modes sweep slower than the cube's chirp-rate range
    frame = mag.shape[0] // 4
    top = np.argsort(mag[frame])[-2:]
    print(f"strongest bins at t = {spec.time_axis[frame]:.2f} s: " + ", ".join(f"{spec.freq_axis[b]:.0f} Hz" for b in sorted(top)))

    # chirp-rate read-out at each mode's frequency
    t = cube.time_axis[frame]
    for k, sp in enumerate(truth.specs):
        b = np.argmin(np.abs(cube.freq_axis - sp.if_fn(t)))
        j = np.argmax(np.abs(cube.values[frame, b]))
        print(f"mode {k}: true chirp rate {sp.cr_fn(t):+.0f} Hz/s, cube argmax {cube.cr_axis[j]:+.0f} Hz/s")

    out = Path(tempfile.mkdtemp())
    write_tensor_csv(out / "stft.csv", spec)
    write_tensor_binary(out / "chirplet.bin", cube)
    print(f"tensors written to {out}")


if __name__ == "__main__":
    main()
