"""
Synthetic convolutive mixtures with known source images.
"""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
from scipy.signal import fftconvolve

from .stft import TimeSignal, read_wav, write_wav

__all__ = [
    "SOURCE_KINDS",
    "SourceBank",
    "MixingSystem",
    "Scenario",
    "ScenarioDescriptor",
    "gen_sources",
    "gen_mixing",
    "mix",
    "balance_sources",
    "load_rir",
    "save_rir",
    "simulate",
]

SOURCE_KINDS = ("laplacian_am", "laplacian_iid")


@dataclass
class SourceBank:
    """Independent unit-power sources, ``signals`` has shape ``(n_src, n_samples)``."""

    signals: np.ndarray
    kind: str
    seed: int
    block: int
    sample_rate: int = 16000

    @property
    def count(self) -> int:
        return self.signals.shape[0]

    def as_signal(self) -> TimeSignal:
        return TimeSignal(self.signals, self.sample_rate)


@dataclass
class MixingSystem:
    """Real FIR mixing filters ``taps[mic, source, tap]``."""

    taps: np.ndarray
    max_len: Optional[int] = None

    def __post_init__(self):
        self.taps = np.asarray(self.taps, dtype=float)
        if self.taps.ndim != 3:
            raise ValueError("taps must have shape (mics, sources, length)")
        if self.max_len is None:
            self.max_len = self.taps.shape[2]
        if self.taps.shape[2] > self.max_len:
            raise ValueError("tap length exceeds declared maximum")

    @property
    def n_mics(self) -> int:
        return self.taps.shape[0]

    @property
    def n_sources(self) -> int:
        return self.taps.shape[1]

    def transfer(self, n_fft: int) -> np.ndarray:
        """Transfer matrices ``(bins, mics, sources)`` at ``n_fft // 2 + 1`` bins."""
        n_fft = max(n_fft, self.taps.shape[2])
        return np.fft.rfft(self.taps, n=n_fft, axis=2).transpose(2, 0, 1)

    def condition_numbers(self, n_fft: int = 512) -> np.ndarray:
        return np.linalg.cond(self.transfer(n_fft))


def _envelope(rng, n: int, block: int) -> np.ndarray:
    """Positive, piecewise-linear envelope with one random level per block."""
    n_knots = n // block + 2
    levels = np.exp(rng.standard_normal(n_knots))
    knots = np.arange(n_knots) * block
    return np.interp(np.arange(n), knots, levels)


def gen_sources(count: int, length: int, seed: int = 0, kind: str = "laplacian_am",
                block: int = 512, sample_rate: int = 16000) -> SourceBank:
    """Independent super-Gaussian sources.

    ``laplacian_am`` multiplies i.i.d. Laplacian samples by a slowly varying
    envelope (one random level per ``block`` samples), which couples the
    magnitudes of all frequency components of a source.  ``laplacian_iid``
    omits the envelope.
    """
    if kind not in SOURCE_KINDS:
        raise ValueError(f"unknown source kind {kind!r}, expected one of {SOURCE_KINDS}")
    if length <= 0 or count <= 0:
        raise ValueError("count and length must be positive")
    rng = np.random.default_rng(seed)
    sig = rng.laplace(size=(count, length))
    if kind == "laplacian_am":
        sig *= np.stack([_envelope(rng, length, block) for _ in range(count)])
    sig -= sig.mean(axis=1, keepdims=True)
    sig /= np.sqrt(np.mean(sig ** 2, axis=1, keepdims=True))
    return SourceBank(sig, kind, seed, block, sample_rate)


def gen_mixing(d: int, filter_len: int, seed: int = 0, n_sources: Optional[int] = None,
               n_fft: int = 512, max_cond: float = 100.0, max_attempts: int = 100,
               tail_ratio: float = 0.25) -> MixingSystem:
    """Random decaying FIR mixing system.

    The leading tap has unit variance; tap ``t >= 1`` has standard deviation
    proportional to ``exp(-t / tau)`` with ``tau = T / 3``, scaled so that the
    expected tail energy is ``tail_ratio`` times that of the leading tap.
    Draws whose transfer matrix condition number exceeds ``max_cond`` at any bin
    are rejected.
    """
    if filter_len < 1:
        raise ValueError("filter_len must be >= 1")
    n_sources = d if n_sources is None else n_sources
    rng = np.random.default_rng(seed)
    tau = filter_len / 3.0
    profile = np.exp(-np.arange(filter_len) / tau)
    if filter_len > 1:
        profile[1:] *= np.sqrt(tail_ratio / np.sum(profile[1:] ** 2))
    profile[0] = 1.0
    for _ in range(max_attempts):
        taps = rng.standard_normal((d, n_sources, filter_len)) * profile
        system = MixingSystem(taps, filter_len)
        if n_sources != d or np.max(system.condition_numbers(n_fft)) <= max_cond:
            return system
    raise RuntimeError(f"no mixing system with condition number <= {max_cond} "
                       f"in {max_attempts} attempts")


def mix(sources: Union[SourceBank, np.ndarray], system: MixingSystem, sample_rate: int = None):
    """Convolve sources with the mixing system.

    Returns ``(observations, images)`` where ``images[j]`` is the
    ``d``-channel contribution of source ``j`` and ``observations`` their sum.
    Outputs are truncated to the source length.
    """
    if isinstance(sources, SourceBank):
        sample_rate = sample_rate or sources.sample_rate
        sources = sources.signals
    sample_rate = sample_rate or 16000
    sources = np.atleast_2d(sources)
    if sources.shape[0] != system.n_sources:
        raise ValueError(f"{sources.shape[0]} sources for a {system.n_sources}-source system")
    n = sources.shape[1]
    images = np.empty((system.n_sources, system.n_mics, n))
    for j in range(system.n_sources):
        for i in range(system.n_mics):
            images[j, i] = fftconvolve(sources[j], system.taps[i, j])[:n]
    obs = images.sum(axis=0)
    return TimeSignal(obs, sample_rate), [TimeSignal(im, sample_rate) for im in images]


def balance_sources(sources: SourceBank, system: MixingSystem, ref_mic: int = 0,
                    input_sir_db: float = 0.0, target: int = 0) -> SourceBank:
    """Rescale sources so every image has equal power at ``ref_mic``.

    The ``target`` source is then scaled so that its image is ``input_sir_db``
    above the sum of the others.
    """
    _, images = mix(sources, system)
    powers = np.array([np.mean(im.samples[ref_mic] ** 2) for im in images])
    gains = 1.0 / np.sqrt(powers)
    if len(gains) > 1:
        gains[target] *= np.sqrt((len(gains) - 1) * 10 ** (input_sir_db / 10))
    return SourceBank(sources.signals * gains[:, None], sources.kind, sources.seed,
                      sources.block, sources.sample_rate)


def _layout(layout):
    if isinstance(layout, str):
        layout = tuple(int(v) for v in layout.lower().replace("x", ",").split(","))
    if len(layout) != 2 or min(layout) < 1:
        raise ValueError(f"layout must be (mics, sources), got {layout}")
    return tuple(layout)


def load_rir(path: Union[str, Path], layout, max_len: Optional[int] = None):
    """Load mixing filters from CSV or multichannel WAV.

    Row (CSV) or channel (WAV) ``i * n_sources + j`` holds the filter from
    source ``j`` to microphone ``i``.  Filters longer than ``max_len`` are
    truncated.

    Returns
    -------
    system : MixingSystem
    tail_energy : float
        Fraction of the total energy removed by truncation.
    """
    mics, srcs = _layout(layout)
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    if path.suffix.lower() == ".wav":
        data = read_wav(path).samples
    else:
        try:
            data = np.loadtxt(path, delimiter=",", ndmin=2)
        except ValueError as exc:
            raise ValueError(f"{path}: malformed RIR CSV ({exc})") from exc
    if data.shape[0] != mics * srcs:
        raise ValueError(f"{path}: {data.shape[0]} filters for layout {mics}x{srcs}")
    taps = data.reshape(mics, srcs, -1)
    total = np.sum(taps ** 2)
    tail = 0.0
    if max_len is not None and taps.shape[2] > max_len:
        tail = float(np.sum(taps[:, :, max_len:] ** 2) / total) if total > 0 else 0.0
        taps = taps[:, :, :max_len]
    return MixingSystem(taps, max_len or taps.shape[2]), tail


def save_rir(path: Union[str, Path], system: MixingSystem, sample_rate: int = 16000):
    """Inverse of :func:`load_rir` (CSV for ``.csv``, float32 WAV for ``.wav``)."""
    path = Path(path)
    flat = system.taps.reshape(-1, system.taps.shape[2])
    if path.suffix.lower() == ".wav":
        write_wav(path, TimeSignal(flat, sample_rate))
    else:
        np.savetxt(path, flat, delimiter=",", fmt="%.17g")


@dataclass
class ScenarioDescriptor:
    """Parameters of a synthetic scenario, stored as an INI ``[scenario]`` section."""

    d: int = 2
    n_samples: int = 40000
    seed: int = 0
    kind: str = "laplacian_am"
    filter_len: Optional[int] = 1
    rir_path: Optional[str] = None
    sample_rate: int = 16000
    block: int = 512
    input_sir_db: float = 0.0

    def __post_init__(self):
        if self.d < 1 or self.n_samples < 1:
            raise ValueError("d and n_samples must be positive")
        if self.kind not in SOURCE_KINDS:
            raise ValueError(f"unknown source kind {self.kind!r}")
        if self.rir_path is None and (self.filter_len is None or self.filter_len < 1):
            raise ValueError("either filter_len >= 1 or rir_path is required")

    _INT = ("d", "n_samples", "seed", "filter_len", "sample_rate", "block")

    @classmethod
    def from_mapping(cls, section) -> "ScenarioDescriptor":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(section) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        kwargs = {}
        for key, value in section.items():
            if key in cls._INT:
                kwargs[key] = int(value)
            elif key == "input_sir_db":
                kwargs[key] = float(value)
            else:
                kwargs[key] = str(value)
        if "rir_path" in kwargs and "filter_len" not in kwargs:
            kwargs["filter_len"] = None
        return cls(**kwargs)

    @classmethod
    def read(cls, path: Union[str, Path]) -> "ScenarioDescriptor":
        parser = configparser.ConfigParser()
        if not parser.read(path):
            raise FileNotFoundError(path)
        if "scenario" not in parser:
            raise ValueError(f"{path}: missing [scenario] section")
        return cls.from_mapping(dict(parser["scenario"]))

    def to_dict(self) -> dict:
        out = {}
        for key in self.__dataclass_fields__:
            value = getattr(self, key)
            if value is not None:
                out[key] = str(value)
        return out

    def write(self, path: Union[str, Path]):
        parser = configparser.ConfigParser()
        parser["scenario"] = self.to_dict()
        with open(path, "w") as fh:
            parser.write(fh)


@dataclass
class Scenario:
    descriptor: ScenarioDescriptor
    sources: SourceBank
    system: MixingSystem
    observations: TimeSignal
    images: List[TimeSignal] = field(default_factory=list)


def simulate(desc: ScenarioDescriptor, base_dir: Union[str, Path, None] = None) -> Scenario:
    """Build the scenario described by ``desc``; sources are balanced to ``input_sir_db``.

    Source 0 is the nominal target for the input-SIR balancing.
    """
    if desc.rir_path:
        rir = Path(desc.rir_path)
        if base_dir is not None and not rir.is_absolute():
            rir = Path(base_dir) / rir
        system, _ = load_rir(rir, (desc.d, desc.d), desc.filter_len)
    else:
        system = gen_mixing(desc.d, desc.filter_len, seed=desc.seed + 1)
    sources = gen_sources(desc.d, desc.n_samples, desc.seed, desc.kind, desc.block,
                          desc.sample_rate)
    sources = balance_sources(sources, system, input_sir_db=desc.input_sir_db)
    obs, images = mix(sources, system)
    return Scenario(desc, sources, system, obs, images)
