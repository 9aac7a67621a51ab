"""
Separate two linear chirps that cross at mid-signal.

Their instantaneous frequencies meet at t = 0.5 s, so a spectrogram alone
cannot tell which branch continues where. The chirp-rate axis can: one mode
rises at +200 Hz/s and the other falls at -200 Hz/s. We track both ridges in
the time-frequency-chirprate cube, draw random Gaussian-chirplet atoms around
each ridge, and let a sparse solver pick the few that explain the signal.
"""

import numpy as np

from srmd3d import (DecompositionConfig, add_white_noise, crossover_chirp_pair, decompose_3d,
                    match_modes, srmd_decompose)


def main():
    x, truth = crossover_chirp_pair()
    noisy, _ = add_white_noise(x, 10.0, seed=0)

    for label, sig in (("clean", x), ("10 dB input", noisy)):
        res = decompose_3d(sig, DecompositionConfig(n_features_per_mode=2000))
        order, snr = match_modes(truth, res.modes)
        print(f"{label}: output SNR per mode " + ", ".join(f"{s:.1f} dB" for s in snr))

        # the ridge each mode was built around
        for k, c in enumerate(res.ridges):
            mid = len(c) // 2
            print(f"  ridge {k}: IF {c.if_hz[mid]:.1f} Hz, chirp rate {c.cr_hzps[mid]:+.0f} Hz/s "
                  f"at t = {c.time_s[mid]:.2f} s")
        print(f"  {np.count_nonzero(res.solution.coefficients)} active atoms "
              f"out of {res.solution.coefficients.size}, "
              f"solver {'converged' if res.solution.converged else 'hit its budget'}")

    # without the chirp-rate axis, atoms near the crossing cannot be told apart
    base = srmd_decompose(x, 4000, seed=0)
    _, snr = match_modes(truth, base.modes)
    print(f"2D baseline on the clean signal: " + ", ".join(f"{s:.1f} dB" for s in snr))


if __name__ == "__main__":
    main()
