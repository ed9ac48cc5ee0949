import csv
import subprocess
import sys

import numpy as np
import pytest

from ivehalf import cli, evaluation, sim
from ivehalf.stft import read_wav

SMALL = {"d": "2", "n_samples": "6000", "seed": "3", "filter_len": "8"}


def write_config(path, scenario=None, **sections):
    lines = ["[scenario]"]
    lines += [f"{k} = {v}" for k, v in (scenario or SMALL).items()]
    for name, items in sections.items():
        lines.append(f"[{name}]")
        lines += [f"{k} = {v}" for k, v in items.items()]
    path.write_text("\n".join(lines) + "\n")
    return path


def test_synth_byte_identical(tmp_path):
    args = ["synth", "--out", None, "--d", "2", "--n-samples", "40000", "--seed", "4"]
    for name in ("a", "b"):
        args[2] = str(tmp_path / name)
        assert cli.main(args) == 0
    for f in ("observations.wav", "image_0.wav", "image_1.wav", "scenario.ini"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    obs = read_wav(tmp_path / "a" / "observations.wav")
    assert obs.samples.shape == (2, 40000)


def test_synth_descriptor_roundtrip(tmp_path):
    cfg = write_config(tmp_path / "c.ini")
    assert cli.main(["synth", "--config", str(cfg), "--out", str(tmp_path / "s")]) == 0
    desc = sim.ScenarioDescriptor.read(tmp_path / "s" / "scenario.ini")
    assert desc == sim.ScenarioDescriptor.from_mapping(SMALL)


def test_extract_max_iter_zero(tmp_path):
    cfg = write_config(tmp_path / "c.ini", stft={"fft_len": "64"},
                       algorithm={"name": "hive", "max_iter": "0"},
                       outputs={"trace": str(tmp_path / "t.csv")})
    assert cli.main(["extract", "--config", str(cfg)]) == 0
    tr = evaluation.read_trace(tmp_path / "t.csv")
    assert tr.iteration == [0]


def test_ogive_variants_share_initial_row(tmp_path):
    cfg = write_config(tmp_path / "c.ini", stft={"fft_len": "64"},
                       algorithm={"max_iter": "5"})
    traces = {}
    for alg in ("ogive", "ogive_whitened"):
        out = tmp_path / f"{alg}.csv"
        assert cli.main(["extract", "--config", str(cfg), "--algorithm", alg,
                         "--trace", str(out)]) == 0
        traces[alg] = evaluation.read_trace(out)
    a, b = traces["ogive"], traces["ogive_whitened"]
    assert a.sir_db[0] == b.sir_db[0] and a.contrast[0] == b.contrast[0]
    assert a.sir_db[1:] != b.sir_db[1:]


def test_extract_deterministic_and_audio(tmp_path):
    assert cli.main(["synth", "--out", str(tmp_path / "s"), "--n-samples", "6000",
                     "--filter-len", "8"]) == 0
    outs = []
    for name in ("a", "b"):
        trace, audio = tmp_path / f"{name}.csv", tmp_path / f"{name}.wav"
        rc = cli.main(["extract", "--scenario", str(tmp_path / "s"), "--fft-len", "64",
                       "--max-iter", "10", "--no-timing", "--trace", str(trace),
                       "--audio", str(audio), "--plot", str(tmp_path / f"{name}.svg")])
        assert rc == 0
        outs.append((trace.read_bytes(), audio.read_bytes()))
    assert outs[0] == outs[1]
    y = read_wav(tmp_path / "a.wav")
    assert y.samples.shape == (1, 6000)
    assert np.all(np.isfinite(y.samples))


def test_outdir_environment(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTDIR_ENV, str(tmp_path / "out"))
    assert cli.main(["synth", "--out", "scen", "--n-samples", "2000"]) == 0
    assert (tmp_path / "out" / "scen" / "observations.wav").exists()


def test_sweep_layout(tmp_path):
    cfg = write_config(tmp_path / "c.ini", algorithm={"max_iter": "2"})
    out = tmp_path / "sweep.csv"
    lens = "32,64,128,256,512,1024"
    assert cli.main(["sweep", "--config", str(cfg), "--fft-lens", lens, "--out", str(out)]) == 0
    rows = list(csv.reader(out.open()))
    assert rows[0] == ["fft_len", "hive", "ogive_whitened", "ogive"]
    assert [int(r[0]) for r in rows[1:]] == [32, 64, 128, 256, 512, 1024]


def test_sweep_single_length_and_accepts_48(tmp_path):
    cfg = cli.ExperimentConfig(scenario=dict(SMALL), max_iter=1).validate()
    rows = cli.cmd_sweep(cfg, [48], str(tmp_path / "s.csv"))
    assert len(rows) == 1 and rows[0]["fft_len"] == 48


def test_sweep_rejects_50_before_work(tmp_path):
    cfg = write_config(tmp_path / "c.ini")
    out = tmp_path / "sweep.csv"
    assert cli.main(["sweep", "--config", str(cfg), "--fft-lens", "64,50", "--out", str(out)]) == 2
    assert not out.exists()


def test_sweep_records_cell_failures(tmp_path, monkeypatch):
    real = cli.extract

    def flaky(cfg, obs, images):
        if cfg.algorithm == "ogive":
            raise FloatingPointError("boom")
        return real(cfg, obs, images)

    monkeypatch.setattr(cli, "extract", flaky)
    cfg = cli.ExperimentConfig(scenario=dict(SMALL), max_iter=1).validate()
    rows = cli.cmd_sweep(cfg, [32, 64], str(tmp_path / "s.csv"))
    assert all(r["ogive"].startswith("error") for r in rows)
    assert all(not r["hive"].startswith("error") for r in rows)


def test_plot_command(tmp_path):
    paths = []
    for n, name in ((5, "a"), (9, "b")):
        p = tmp_path / f"{name}.csv"
        p.write_text("iter,contrast,sir_db,grad_norm,wallclock_ms\n"
                     + "".join(f"{i},0.0,{i}.0,1.0,0.0\n" for i in range(n)))
        paths.append(str(p))
    out = tmp_path / "p.svg"
    assert cli.main(["plot", *paths, "--out", str(out)]) == 0
    assert out.read_text().count("<polyline") == 2
    assert cli.main(["plot", "--out", str(tmp_path / "none.svg")]) == 2
    assert not (tmp_path / "none.svg").exists()


@pytest.mark.parametrize("section,key,value", [
    ("stft", "fft_len", "50"),
    ("stft", "hop", "0"),
    ("algorithm", "name", "fastica"),
    ("algorithm", "mu", "-1"),
    ("algorithm", "max_iter", "ten"),
    ("algorithm", "normalization", "max"),
    ("outputs", "colour", "red"),
])
def test_config_errors_exit_2(tmp_path, section, key, value):
    cfg = write_config(tmp_path / "c.ini", **{section: {key: value}})
    assert cli.main(["extract", "--config", str(cfg)]) == 2


def test_config_missing_files_exit_2(tmp_path):
    assert cli.main(["extract", "--config", str(tmp_path / "nope.ini")]) == 2
    assert cli.main(["extract", "--scenario", str(tmp_path / "nowhere")]) == 2
    cfg = write_config(tmp_path / "c.ini", scenario={"kind": "speech"})
    assert cli.main(["extract", "--config", str(cfg)]) == 2


def test_runtime_error_exit_3(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise RuntimeError("iteration 3: non-finite gradient")

    monkeypatch.setattr(cli.ive, "run", broken)
    cfg = write_config(tmp_path / "c.ini", stft={"fft_len": "64"})
    assert cli.main(["extract", "--config", str(cfg)]) == 3


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "ivehalf", "synth", "--out",
                           str(tmp_path / "s"), "--n-samples", "1000"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "s" / "scenario.ini").exists()
