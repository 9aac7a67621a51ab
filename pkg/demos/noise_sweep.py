"""
A small input-SNR sweep on the two-mode benchmark signal.

Both methods see the same noisy realizations. This is a reduced version of
the acceptance sweep (fewer trials and features) that finishes in a few
minutes; the table it prints has the same shape.
"""

import sys
import tempfile
from pathlib import Path

from srmd3d import DecompositionConfig, benchmark_snr_sweep, paper_simulated_signal
from srmd3d.pipeline import summarize_benchmark, write_benchmark_csv


def main(n_trials=2):
    cfg = DecompositionConfig(alpha=(1 / 80) ** 2, n_features_per_mode=1000)
    rows = benchmark_snr_sweep(paper_simulated_signal, [0.0, 10.0, 20.0], n_trials, cfg)

    print(f"{'input dB':>9} {'method':>7} {'mean dB':>8} {'std':>6}")
    for s in summarize_benchmark(rows):
        print(f"{s['input_snr_db']:9.1f} {s['method']:>7} {s['mean']:8.2f} {s['std']:6.2f}")

    out = Path(tempfile.mkdtemp()) / "benchmark.csv"
    write_benchmark_csv(out, rows)
    print(f"per-trial rows written to {out}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 2)
