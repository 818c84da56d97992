import subprocess
import sys

import numpy as np
import pytest
import yaml

from dastft import export
from dastft.cli import ExperimentConfig, load_config_dict, main
from dastft.signal_model import SynthSpec, gen_illustrative, load_csv
from dastft.stft_core import FrameGrid, reference_stft

SMALL = {
    "name": "small",
    "signal": {"synth": {
        "duration": 0.512, "sample_rate": 1000.0, "seed": 4, "noise_snr_db": 10.0,
        "components": [
            {"kind": "chirp", "amplitude": 1.0, "law": [[0.0, 100.0], [0.512, 200.0]]},
            {"kind": "burst", "amplitude": 3.0, "frequency": 300.0, "start": 0.25, "end": 0.26},
        ],
    }},
    "grid": {"support": 32, "hop": 8},
    "mode": "tf",
    "criterion": {"lambda": 1e-4, "regularizer": "tv"},
    "optimizer": {"step_size": 1.0, "max_iters": 5},
    "theta_grid": [8, 16, 32],
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return str(path)


def run(*argv):
    return main([str(a) for a in argv])


def test_synth_matches_library(config, tmp_path):
    assert run("synth", "--config", config, "--out", tmp_path / "a") == 0
    sig = load_csv(tmp_path / "a" / "signal.csv")
    expected = gen_illustrative(SynthSpec.from_dict(SMALL["signal"]["synth"]))
    np.testing.assert_array_equal(sig.samples, expected.samples)
    assert sig.sample_rate == 1000.0


def test_synth_zero_spec(tmp_path):
    cfg = {"signal": {"synth": {"duration": 0.1, "sample_rate": 100.0, "components": []}},
           "grid": {"support": 8, "hop": 2}}
    (tmp_path / "z.yaml").write_text(yaml.safe_dump(cfg))
    assert run("synth", "--config", tmp_path / "z.yaml", "--out", tmp_path / "z") == 0
    assert not load_csv(tmp_path / "z" / "signal.csv").samples.any()


def test_synth_seed_changes_only_noise(config, tmp_path):
    run("synth", "--config", config, "--out", tmp_path / "a")
    run("synth", "--config", config, "--out", tmp_path / "b", "--seed", 99)
    a = load_csv(tmp_path / "a" / "signal.csv").samples
    b = load_csv(tmp_path / "b" / "signal.csv").samples
    ca = load_csv(tmp_path / "a" / "clean.csv").samples
    cb = load_csv(tmp_path / "b" / "clean.csv").samples
    np.testing.assert_array_equal(ca, cb)
    assert not np.array_equal(a, b)


def test_spectrogram_full_window_matches_reference(config, tmp_path):
    assert run("spectrogram", "--config", config, "--out", tmp_path, "--theta", 32) == 0
    spec = export.read_spectrogram_csv(tmp_path / "spectrogram_theta32.csv", first_index=-16)
    sig = gen_illustrative(SynthSpec.from_dict(SMALL["signal"]["synth"]))
    ref = reference_stft(sig, FrameGrid.centered(len(sig), 32, 8))
    assert np.max(np.abs(spec.values - ref.values)) < 1e-10 * np.abs(ref.values).max()
    assert export.read_pgm(tmp_path / "spectrogram_theta32.pgm").shape == (17, 64)


def test_spectrogram_theta_out_of_range(config, tmp_path, capsys):
    assert run("spectrogram", "--config", config, "--out", tmp_path, "--theta", 33) == 1
    assert "theta" in capsys.readouterr().err


def test_optimize_outputs_and_exit_code(config, tmp_path):
    code = run("optimize", "--config", config, "--out", tmp_path)
    assert code == 2    # five iterations do not converge
    for name in ("trace.csv", "theta.csv", "theta.pgm", "spectrogram.csv", "spectrogram.pgm", "config.yaml"):
        assert (tmp_path / name).is_file()
    theta = export.read_matrix_csv(tmp_path / "theta.csv")
    assert theta.shape == (64, 17)
    assert theta.min() >= 4 and theta.max() <= 32
    assert len((tmp_path / "trace.csv").read_text().splitlines()) == 6


def test_optimize_converged_exit_zero(config, tmp_path):
    assert run("optimize", "--config", config, "--out", tmp_path, "--mode", "constant", "--max-iters", 400,
               "--step-size", 0.5) == 0


def test_optimize_is_reproducible(config, tmp_path):
    run("optimize", "--config", config, "--out", tmp_path / "a")
    run("optimize", "--config", config, "--out", tmp_path / "b")
    for name in ("trace.csv", "theta.csv", "spectrogram.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_optimize_nonlocal(config, tmp_path):
    assert run("optimize", "--config", config, "--out", tmp_path, "--reg", "nonlocal", "--mode", "time") in (0, 2)


def test_compare_schema(config, tmp_path):
    assert run("compare", "--config", config, "--out", tmp_path) == 0
    lines = (tmp_path / "compare.csv").read_text().splitlines()
    assert lines[0] == "method,mode,theta,loss,wall_time_s,evaluations"
    rows = [line.split(",") for line in lines[1:]]
    assert [r[0] for r in rows] == ["grid_search", "gradient_descent"]
    assert all(float(r[4]) > 0 for r in rows)
    assert rows[0][5] == "3"
    table = export.read_matrix_csv(tmp_path / "grid_table.csv")
    assert float(rows[0][3]) == table[:, 1].min()


def test_compare_empty_grid_is_error(config, tmp_path):
    cfg = dict(SMALL, theta_grid=[])
    (tmp_path / "e.yaml").write_text(yaml.safe_dump(cfg))
    assert run("compare", "--config", tmp_path / "e.yaml", "--out", tmp_path) == 1


def test_invalid_config_exit_one(tmp_path, capsys):
    bad = dict(SMALL, criterion={"lambda": -1.0})
    (tmp_path / "bad.yaml").write_text(yaml.safe_dump(bad))
    assert run("optimize", "--config", tmp_path / "bad.yaml", "--out", tmp_path) == 1
    assert "lambda" in capsys.readouterr().err


def test_nyquist_violation_exit_one(tmp_path, capsys):
    bad = yaml.safe_load(yaml.safe_dump(SMALL))
    bad["signal"]["synth"]["components"][0]["law"] = [[0.0, 100.0], [0.512, 600.0]]
    (tmp_path / "bad.yaml").write_text(yaml.safe_dump(bad))
    assert run("synth", "--config", tmp_path / "bad.yaml", "--out", tmp_path) == 1
    assert "t=" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert run("synth", "--config", tmp_path / "nope.yaml", "--out", tmp_path) == 1


def test_csv_input(config, tmp_path):
    run("synth", "--config", config, "--out", tmp_path / "s")
    assert run("spectrogram", "--config", config, "--csv", tmp_path / "s" / "signal.csv",
               "--out", tmp_path / "c", "--theta", 16) == 0


def test_config_round_trip(config):
    cfg = ExperimentConfig.from_dict(load_config_dict(config))
    again = ExperimentConfig.from_dict(yaml.safe_load(yaml.safe_dump(cfg.to_dict())))
    assert again.to_dict() == cfg.to_dict()


@pytest.mark.parametrize("name", ["fig1", "fig3", "fig4", "fig5", "illustrative", "illustrative_desk",
                                  "multiharmonic"])
def test_shipped_configs_validate(name):
    cfg = ExperimentConfig.from_dict(load_config_dict(name))
    cfg.validate()


def test_extends_overrides(tmp_path):
    (tmp_path / "child.yaml").write_text("extends: fig4\nmode: constant\ncriterion: {lambda: 0.5}\n")
    d = load_config_dict(str(tmp_path / "child.yaml"))
    assert d["mode"] == "constant"
    assert d["criterion"] == {"lambda": 0.5, "regularizer": "tv"}


def test_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "dastft.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "optimize" in out.stdout
