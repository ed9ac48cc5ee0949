"""
Command-line front-end: ``synth``, ``extract``, ``sweep`` and ``plot``.

Experiments are described by an INI file::

    [scenario]
    d = 2
    n_samples = 40000
    seed = 0
    kind = laplacian_am
    filter_len = 64

    [stft]
    fft_len = 512
    ; hop defaults to fft_len / 4, window to hann

    [algorithm]
    name = hive
    max_iter = 200
    ; mu defaults to 0.05

    [outputs]
    trace = trace.csv

``[scenario]`` may instead hold a single ``path`` key pointing at a scenario
directory written by ``synth``.  Command-line flags override file values.
Exit codes: 0 success, 2 configuration error, 3 runtime or numerical error.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import evaluation, ive, sim
from .stft import TimeSignal, istft, read_wav, stft, write_wav

log = logging.getLogger("ivehalf")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3
OUTDIR_ENV = "IVEHALF_OUTDIR"
SWEEP_COLUMNS = ("fft_len", "hive", "ogive_whitened", "ogive")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    scenario: Dict[str, str] = field(default_factory=dict)
    fft_len: int = 512
    hop: Optional[int] = None
    window: str = "hann"
    algorithm: str = "hive"
    mu: float = 0.05
    max_iter: int = 200
    seed: int = 0
    normalization: str = "unit_variance"
    trace: Optional[str] = None
    audio: Optional[str] = None
    plot: Optional[str] = None
    timing: bool = True

    def validate(self):
        if self.fft_len <= 0 or self.fft_len % 4:
            raise ConfigError(f"fft_len must be a positive multiple of 4, got {self.fft_len}")
        if self.hop is None:
            self.hop = self.fft_len // 4
        if not 0 < self.hop <= self.fft_len:
            raise ConfigError(f"hop must be in (0, fft_len], got {self.hop}")
        if self.algorithm not in ive.ALGORITHMS:
            raise ConfigError(f"algorithm must be one of {ive.ALGORITHMS}")
        if not self.mu > 0:
            raise ConfigError("mu must be positive")
        if self.max_iter < 0:
            raise ConfigError("max_iter must be non-negative")
        if self.normalization not in ("unit_norm", "unit_variance"):
            raise ConfigError("normalization must be unit_norm or unit_variance")
        if "path" in self.scenario:
            if not Path(self.scenario["path"]).is_dir():
                raise ConfigError(f"scenario directory {self.scenario['path']} not found")
        else:
            try:
                sim.ScenarioDescriptor.from_mapping(self.scenario)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid scenario: {exc}") from exc
        return self

    def algo_config(self) -> ive.AlgoConfig:
        return ive.AlgoConfig(algorithm=self.algorithm, mu=self.mu, max_iter=self.max_iter,
                              seed=self.seed, normalization=self.normalization)


_SECTION_KEYS = {
    "stft": {"fft_len": int, "hop": int, "window": str},
    "algorithm": {"name": str, "mu": float, "max_iter": int, "seed": int, "normalization": str},
    "outputs": {"trace": str, "audio": str, "plot": str},
}


def load_config(path: Optional[str]) -> ExperimentConfig:
    cfg = ExperimentConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    try:
        if not parser.read(path):
            raise ConfigError(f"cannot read config {path}")
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    base = Path(path).parent
    for section in parser.sections():
        items = dict(parser[section])
        if section == "scenario":
            if "path" in items:
                items["path"] = str(base / items["path"])
            cfg.scenario = items
            continue
        if section not in _SECTION_KEYS:
            raise ConfigError(f"unknown section [{section}]")
        for key, value in items.items():
            conv = _SECTION_KEYS[section].get(key)
            if conv is None:
                raise ConfigError(f"unknown key {section}.{key}")
            try:
                value = conv(value)
            except ValueError as exc:
                raise ConfigError(f"bad value for {section}.{key}: {value!r}") from exc
            setattr(cfg, "algorithm" if key == "name" else key, value)
    return cfg


def _apply_flags(cfg: ExperimentConfig, args) -> ExperimentConfig:
    for name in ("fft_len", "hop", "window", "algorithm", "mu", "max_iter", "seed",
                 "normalization", "trace", "audio", "plot"):
        value = getattr(args, name, None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "scenario", None):
        cfg.scenario = {"path": args.scenario}
    if getattr(args, "no_timing", False):
        cfg.timing = False
    return cfg


def _out_path(name: Optional[str]) -> Optional[Path]:
    if name is None:
        return None
    path = Path(name)
    if not path.is_absolute() and os.environ.get(OUTDIR_ENV):
        path = Path(os.environ[OUTDIR_ENV]) / path
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


# -- scenario files ---------------------------------------------------------

def write_scenario(scenario: sim.Scenario, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    write_wav(out_dir / "observations.wav", scenario.observations)
    for j, img in enumerate(scenario.images):
        write_wav(out_dir / f"image_{j}.wav", img)
    scenario.descriptor.write(out_dir / "scenario.ini")


def read_scenario(path: Path):
    """Observations and list of images from a directory written by ``synth``."""
    obs = read_wav(path / "observations.wav")
    images = []
    j = 0
    while (path / f"image_{j}.wav").exists():
        images.append(read_wav(path / f"image_{j}.wav"))
        j += 1
    return obs, images


def _scenario_signals(cfg: ExperimentConfig):
    if "path" in cfg.scenario:
        return read_scenario(Path(cfg.scenario["path"]))
    scenario = sim.simulate(sim.ScenarioDescriptor.from_mapping(cfg.scenario))
    return scenario.observations, scenario.images


def extract(cfg: ExperimentConfig, observations: TimeSignal, images: List[TimeSignal]):
    """Run the configured algorithm; returns ``(trace, obs_spectrum)``."""
    X = stft(observations, cfg.fft_len, cfg.hop, cfg.window)
    img = np.stack([stft(im, cfg.fft_len, cfg.hop, cfg.window).values for im in images]) \
        if images else None
    trace = ive.run(X, cfg.algo_config(), images=img)
    return trace, X


def _extracted_audio(trace, X) -> TimeSignal:
    W = trace.final_W
    s = np.einsum("ik,kin->kn", W.conj(), X.values)
    # rescale every bin to its image at the first microphone
    ref = X.values[:, 0, :]
    gain = np.sum(ref * s.conj(), axis=1) / np.maximum(np.sum(np.abs(s) ** 2, axis=1), 1e-30)
    return istft(X.with_values((gain[:, None] * s)[:, None, :]))


# -- commands ---------------------------------------------------------------

def cmd_synth(cfg: ExperimentConfig, out_dir: str) -> Path:
    desc = sim.ScenarioDescriptor.from_mapping(cfg.scenario)
    path = _out_path(out_dir)
    write_scenario(sim.simulate(desc), path)
    return path


def cmd_extract(cfg: ExperimentConfig):
    obs, images = _scenario_signals(cfg)
    trace, X = extract(cfg, obs, images)
    if cfg.trace:
        evaluation.write_trace(trace, _out_path(cfg.trace), timing=cfg.timing)
    if cfg.audio:
        write_wav(_out_path(cfg.audio), _extracted_audio(trace, X))
    if cfg.plot:
        evaluation.write_svg_plot([trace], [cfg.algorithm], _out_path(cfg.plot))
    return trace


def cmd_sweep(cfg: ExperimentConfig, fft_lens: List[int], out: str,
              algorithms=("hive", "ogive_whitened", "ogive")) -> List[dict]:
    """Final SIR per DFT length and algorithm; the hop is always a quarter of the length."""
    for K in fft_lens:
        if K <= 0 or K % 4:
            raise ConfigError(f"fft_len {K} is not a positive multiple of 4")
    obs, images = _scenario_signals(cfg)
    if not images:
        raise ConfigError("sweep needs source images to compute SIR")
    rows = []
    for K in fft_lens:
        row = {"fft_len": K}
        for alg in algorithms:
            cell = ExperimentConfig(**{**cfg.__dict__, "fft_len": K, "hop": K // 4,
                                       "algorithm": alg})
            try:
                trace, _ = extract(cell, obs, images)
                row[alg] = repr(float(trace.sir_db[-1]))
            except Exception as exc:  # per-cell failures are recorded, not fatal
                log.warning("sweep cell K=%d %s failed: %s", K, alg, exc)
                row[alg] = f"error: {type(exc).__name__}"
        rows.append(row)
    with open(_out_path(out), "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=("fft_len",) + tuple(algorithms),
                                lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    return rows


def cmd_plot(paths: List[str], out: str):
    if not paths:
        raise ConfigError("no trace files given")
    traces = [evaluation.read_trace(p) for p in paths]
    evaluation.write_svg_plot(traces, [Path(p).stem for p in paths], _out_path(out))


# -- argument parsing -------------------------------------------------------

def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", help="INI experiment file")
    p.add_argument("--scenario", help="scenario directory written by 'synth'")
    p.add_argument("--fft-len", dest="fft_len", type=int)
    p.add_argument("--hop", type=int)
    p.add_argument("--window")
    p.add_argument("--algorithm", choices=ive.ALGORITHMS)
    p.add_argument("--mu", type=float)
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--normalization", choices=("unit_norm", "unit_variance"))
    p.add_argument("--trace")
    p.add_argument("--audio")
    p.add_argument("--plot")
    p.add_argument("--no-timing", action="store_true",
                   help="write zeros in the wallclock_ms column (byte-identical traces)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ivehalf", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic scenario")
    p.add_argument("--config")
    p.add_argument("--out", required=True, help="output directory")
    for key, typ in (("d", int), ("n-samples", int), ("seed", int), ("kind", str),
                     ("filter-len", int), ("rir-path", str), ("input-sir-db", float)):
        p.add_argument(f"--{key}", dest=key.replace("-", "_"), type=typ)

    p = sub.add_parser("extract", help="run one extraction")
    _common(p)

    p = sub.add_parser("sweep", help="final SIR over several DFT lengths")
    _common(p)
    p.add_argument("--fft-lens", dest="fft_lens", required=True,
                   help="comma-separated DFT lengths, e.g. 32,64,128")
    p.add_argument("--out", required=True, help="summary CSV")

    p = sub.add_parser("plot", help="SVG plot of trace files")
    p.add_argument("traces", nargs="*")
    p.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "plot":
            cmd_plot(args.traces, args.out)
            return EXIT_OK
        cfg = load_config(args.config)
        if args.command == "synth":
            for key in ("d", "n_samples", "seed", "kind", "filter_len", "rir_path",
                        "input_sir_db"):
                value = getattr(args, key)
                if value is not None:
                    cfg.scenario[key] = str(value)
            try:
                sim.ScenarioDescriptor.from_mapping(cfg.scenario)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"invalid scenario: {exc}") from exc
            cmd_synth(cfg, args.out)
            return EXIT_OK
        cfg = _apply_flags(cfg, args).validate()
        if args.command == "extract":
            cmd_extract(cfg)
        else:
            try:
                lens = [int(v) for v in args.fft_lens.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"bad --fft-lens: {args.fft_lens}") from exc
            cmd_sweep(cfg, lens, args.out)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
