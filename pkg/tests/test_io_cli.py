import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays
from scipy.io import wavfile

from srmd3d.cli import build_parser, load_benchmark_config, main, CliError
from srmd3d.io import (UnsupportedWavError, read_signal, read_signal_csv, read_tensor_binary,
                       read_tensor_csv, read_wav, write_signal_csv, write_tensor_binary,
                       write_tensor_csv, write_wav)
from srmd3d.signal import Signal, crossover_chirp_pair, tones
from srmd3d.tfa import STFTGrid, chirplet_transform, default_cr_axis, stft

FS = 1024.0
FAST = ["--n-features", "100", "--max-iter", "20"]


# -- signal files

@given(arrays(float, st.integers(2, 50), elements=st.floats(-1e6, 1e6, allow_nan=False)))
@settings(max_examples=30)
def test_signal_csv_round_trip(tmp_path_factory, v):
    p = tmp_path_factory.mktemp("csv") / "x.csv"
    x = Signal(v, 1000.0, 0.25)
    write_signal_csv(p, x)
    y = read_signal_csv(p)
    np.testing.assert_array_equal(x.samples, y.samples)
    assert y.start_time == 0.25
    assert y.sample_rate == pytest.approx(1000.0, rel=1e-9)


def test_csv_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="time,value"):
        read_signal_csv(p)
    p.write_text("time,value\n0,1\n0.1,2\n0.3,3\n")
    with pytest.raises(ValueError, match="uniformly"):
        read_signal_csv(p)
    p.write_text("time,value\n0,1\n")
    with pytest.raises(ValueError, match="sample rate"):
        read_signal_csv(p)
    assert read_signal_csv(p, sample_rate=8.0).m == 1


def test_wav_float32_round_trip(tmp_path):
    x, _ = tones()
    p = tmp_path / "x.wav"
    write_wav(p, x)
    y = read_wav(p)
    assert y.sample_rate == FS
    np.testing.assert_array_equal(y.samples, x.samples.astype(np.float32))


def test_wav_pcm16(tmp_path):
    x, _ = tones()
    p = tmp_path / "x.wav"
    write_wav(p, x.scaled(0.25), "pcm16")
    y = read_wav(p)
    np.testing.assert_allclose(y.samples, 0.25 * x.samples, atol=1 / 32768)


def test_wav_pcm32(tmp_path):
    p = tmp_path / "x.wav"
    wavfile.write(p, 48000, np.array([0, 2**30, -(2**31)], dtype=np.int32))
    y = read_wav(p)
    np.testing.assert_array_equal(y.samples, [0.0, 0.5, -1.0])
    assert y.sample_rate == 48000


def test_wav_channels(tmp_path):
    p = tmp_path / "st.wav"
    wavfile.write(p, 8000, np.array([[0.5, -0.5], [0.25, -0.25]], dtype=np.float32))
    with pytest.raises(UnsupportedWavError, match="2 channels"):
        read_wav(p)
    np.testing.assert_array_equal(read_wav(p, channel=1).samples, [-0.5, -0.25])
    with pytest.raises(ValueError):
        read_wav(p, channel=2)


@pytest.mark.parametrize("dtype", [np.uint8, np.float64])
def test_wav_unsupported_encoding_named(tmp_path, dtype):
    p = tmp_path / "x.wav"
    wavfile.write(p, 8000, np.zeros(16, dtype=dtype))
    with pytest.raises(UnsupportedWavError, match=np.dtype(dtype).name):
        read_wav(p)


def test_not_a_wav(tmp_path):
    p = tmp_path / "x.wav"
    p.write_bytes(b"hello world, definitely not RIFF")
    with pytest.raises(UnsupportedWavError, match="RIFF"):
        read_wav(p)


def test_read_signal_missing(tmp_path):
    with pytest.raises(FileNotFoundError):
        read_signal(tmp_path / "nope.csv")


# -- tensors

@pytest.fixture(scope="module")
def small_tfc():
    x, _ = crossover_chirp_pair(duration=0.25)
    g = STFTGrid.from_alpha(0.01 ** 2, FS, hop=32)
    return chirplet_transform(x, g, default_cr_axis(FS, 0.25, n_bins=5))


def test_tensor_binary_round_trip(tmp_path, small_tfc):
    p = tmp_path / "t.bin"
    write_tensor_binary(p, small_tfc)
    np.testing.assert_array_equal(read_tensor_binary(p), np.abs(small_tfc.values))
    raw = p.read_bytes()
    assert np.frombuffer(raw[:24], "<u8").tolist() == list(small_tfc.values.shape)


def test_tensor_csv_round_trip(tmp_path, small_tfc):
    p = tmp_path / "t.csv"
    write_tensor_csv(p, small_tfc)
    assert p.read_text().splitlines()[0] == "frame,freq,cr,magnitude"
    np.testing.assert_array_equal(read_tensor_csv(p), np.abs(small_tfc.values))


def test_spectrogram_tensor_has_one_cr(tmp_path):
    x, _ = tones(duration=0.25)
    s = stft(x, STFTGrid.from_alpha(0.01 ** 2, FS, hop=32))
    p = tmp_path / "s.bin"
    write_tensor_binary(p, s)
    assert read_tensor_binary(p).shape[2] == 1


def test_truncated_binary(tmp_path, small_tfc):
    p = tmp_path / "t.bin"
    write_tensor_binary(p, small_tfc)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(ValueError, match="header"):
        read_tensor_binary(p)


# -- cli

def test_synth_paper_sim(tmp_path):
    out = tmp_path / "sim"
    assert main(["synth", "paper-sim", "--fs", "1024", "--duration", "1", "--out", str(out)]) == 0
    x = read_signal(out / "signal.csv")
    assert x.m == 1024
    assert sorted(p.name for p in out.iterdir()) == [
        "manifest.json", "signal.csv", "truth_mode0.csv", "truth_mode1.csv"]


def test_synth_crossover_modes(tmp_path):
    out = tmp_path / "xo"
    assert main(["synth", "crossover-pair", "--out", str(out)]) == 0
    _, modes = crossover_chirp_pair()
    for k in range(2):
        np.testing.assert_array_equal(read_signal(out / f"truth_mode{k}.csv").samples,
                                      modes[k].samples)
    assert sorted(sp.cr_fn(0.3) for sp in modes.specs) == [-200.0, 200.0]


def test_synth_tones_inf_snr(tmp_path):
    out = tmp_path / "t"
    assert main(["synth", "tones", "--snr-db", "inf", "--out", str(out)]) == 0
    m = json.loads((out / "manifest.json").read_text())
    assert m["args"]["snr_db"] == "inf"
    assert m["noise_variance"] == 0.0
    np.testing.assert_array_equal(read_signal(out / "signal.csv").samples, tones()[0].samples)


def test_synth_wav(tmp_path):
    out = tmp_path / "w"
    assert main(["synth", "tones", "--format", "wav", "--out", str(out)]) == 0
    assert read_signal(out / "signal.wav").m == 1024


def test_synth_bad_kind():
    with pytest.raises(SystemExit):
        build_parser().parse_args(["synth", "whale", "--out", "x"])


@pytest.fixture(scope="module")
def crossover_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("in")
    assert main(["synth", "crossover-pair", "--out", str(d / "xo")]) == 0
    return d / "xo"


def test_decompose_non_converged_exit_2(tmp_path, crossover_file, capsys):
    out = tmp_path / "run"
    code = main(["decompose", str(crossover_file / "signal.csv"), *FAST, "--out", str(out),
                 "--truth", str(crossover_file / "truth_mode0.csv"),
                 str(crossover_file / "truth_mode1.csv")])
    assert code == 2
    names = {p.name for p in out.iterdir()}
    assert {"mode0.csv", "mode1.csv", "ridges.csv", "atoms.csv", "solver_trace.csv",
            "report.json", "manifest.json"} <= names
    assert "output SNR" in capsys.readouterr().out
    assert len(json.loads((out / "report.json").read_text())["snr_db"]) == 2


def test_decompose_converged_exit_0(tmp_path, crossover_file):
    # a bound above ||x|| is met by c = 0 at once
    out = tmp_path / "run"
    assert main(["decompose", str(crossover_file / "signal.csv"), *FAST, "--sigma", "10",
                 "--out", str(out)]) == 0


def test_decompose_baseline(tmp_path, crossover_file):
    out = tmp_path / "run"
    assert main(["decompose", str(crossover_file / "signal.csv"), "--method", "srmd", *FAST,
                 "--out", str(out)]) in (0, 2)
    header = (out / "atoms.csv").read_text().splitlines()[0]
    assert header.endswith(",cluster")


def test_decompose_missing_input(tmp_path, capsys):
    out = tmp_path / "run"
    assert main(["decompose", str(tmp_path / "nope.csv"), "--out", str(out)]) == 1
    assert not out.exists()
    assert list(tmp_path.iterdir()) == []
    assert "input not found" in capsys.readouterr().err


def test_decompose_too_many_modes(tmp_path, capsys):
    src = tmp_path / "t"
    main(["synth", "tones", "--freqs", "100", "--out", str(src)])
    out = tmp_path / "run"
    assert main(["decompose", str(src / "signal.csv"), "--k", "2", *FAST, "--out", str(out)]) == 1
    assert "only 1" in capsys.readouterr().err
    assert not out.exists()


def test_env_overrides(tmp_path, crossover_file, monkeypatch):
    monkeypatch.setenv("SRMD3D_N_FEATURES", "60")
    monkeypatch.setenv("SRMD3D_MAX_ITER", "7")
    out = tmp_path / "run"
    main(["decompose", str(crossover_file / "signal.csv"), "--out", str(out)])
    args = json.loads((out / "manifest.json").read_text())["args"]
    assert args["n_features"] == 60 and args["max_iter"] == 7
    # the flag wins
    out2 = tmp_path / "run2"
    main(["decompose", str(crossover_file / "signal.csv"), "--max-iter", "5", "--out", str(out2)])
    assert json.loads((out2 / "manifest.json").read_text())["args"]["max_iter"] == 5


def test_bad_env_value(tmp_path, crossover_file, monkeypatch, capsys):
    monkeypatch.setenv("SRMD3D_K", "two")
    assert main(["decompose", str(crossover_file / "signal.csv"), "--out", str(tmp_path / "r")]) == 1
    assert "SRMD3D_K" in capsys.readouterr().err


def test_rerun_is_byte_identical(tmp_path, crossover_file):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["decompose", str(crossover_file / "signal.csv"), *FAST, "--out", str(a)])
    main(["rerun", str(a / "manifest.json"), "--out", str(b)])
    for k in range(2):
        assert (a / f"mode{k}.csv").read_bytes() == (b / f"mode{k}.csv").read_bytes()
    ma = json.loads((a / "manifest.json").read_text())
    mb = json.loads((b / "manifest.json").read_text())
    assert ma["output_checksums"] == mb["output_checksums"]


def test_rerun_synth(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["synth", "tones", "--snr-db", "10", "--seed", "4", "--out", str(a)])
    assert main(["rerun", str(a / "manifest.json"), "--out", str(b)]) == 0
    assert (a / "signal.csv").read_bytes() == (b / "signal.csv").read_bytes()


def test_spectrogram_outputs(tmp_path):
    src = tmp_path / "s"
    main(["synth", "tones", "--duration", "0.25", "--out", str(src)])
    out = tmp_path / "spec.bin"
    assert main(["spectrogram", str(src / "signal.csv"), "--format", "bin", "--hop", "32",
                 "--out", str(out)]) == 0
    mag = read_tensor_binary(out)
    freqs = np.fft.rfftfreq(STFTGrid.from_alpha((0.25 / 80) ** 2, FS).window_len, 1 / FS)
    peak = freqs[np.argmax(mag[mag.shape[0] // 2, :, 0])]
    assert min(abs(peak - 100), abs(peak - 300)) <= freqs[1]
    out = tmp_path / "tfc.csv"
    assert main(["spectrogram", str(src / "signal.csv"), "--chirplet", "--n-cr", "3",
                 "--hop", "64", "--out", str(out)]) == 0
    assert read_tensor_csv(out).shape[2] == 3


def test_spectrogram_empty_input(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("time,value\n")
    assert main(["spectrogram", str(p), "--out", str(tmp_path / "o.csv")]) == 1


def test_benchmark_config_diagnostics(tmp_path):
    p = tmp_path / "c.json"
    p.write_text('{\n  "n_trials": 2,\n  "seed": 1,\n}\n')
    with pytest.raises(CliError, match="line 4"):
        load_benchmark_config(p)
    p.write_text('{"n_trials": "many"}')
    with pytest.raises(CliError, match="'n_trials'"):
        load_benchmark_config(p)
    p.write_text('{"colour": 1}')
    with pytest.raises(CliError, match="unknown field"):
        load_benchmark_config(p)
    p.write_text('{"methods": ["emd"]}')
    with pytest.raises(CliError, match="methods"):
        load_benchmark_config(p)


def test_benchmark_command(tmp_path):
    cfg = {"signal": "crossover-pair", "snr_levels": [5, 10, 20], "n_trials": 5,
           "n_features": 40, "max_iter": 10}
    p = tmp_path / "c.json"
    p.write_text(json.dumps(cfg))
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["benchmark", str(p), "--out", str(a)]) == 0
    lines = (a / "benchmark.csv").read_text().splitlines()
    # 2 methods x 2 modes x 15 (level, trial) pairs
    assert len(lines) - 1 == 2 * 2 * 15
    assert (a / "summary.txt").exists()
    main(["rerun", str(a / "manifest.json"), "--out", str(b)])

    def strip(path):
        rows = [ln.split(",") for ln in path.read_text().splitlines()]
        return [r[:5] + r[6:] for r in rows]  # runtime_s differs run to run
    assert strip(a / "benchmark.csv") == strip(b / "benchmark.csv")


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as e:
        main(["--version"])
    assert e.value.code == 0
    assert capsys.readouterr().out.strip()


def test_synth_manifest_snr_finite(tmp_path):
    out = tmp_path / "n"
    main(["synth", "tones", "--snr-db", "5", "--out", str(out)])
    m = json.loads((out / "manifest.json").read_text())
    assert m["args"]["snr_db"] == 5.0 and m["noise_variance"] > 0
    assert not math.isinf(m["noise_variance"])
