"""
Framing, windowing and (inverse) short-time Fourier transform.

Spectra are always stored truncated to the ``fft_len // 2 + 1`` non-negative
frequency bins, with layout ``(bins, channels, frames)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

__all__ = [
    "TimeSignal",
    "SpectralTensor",
    "dft_forward",
    "make_window",
    "is_cola",
    "stft",
    "istft",
    "read_wav",
    "write_wav",
    "write_spectrum_csv",
]

_WINDOW_ALIASES = {"rect": "boxcar", "rectangular": "boxcar", "boxcar": "boxcar", "hann": "hann"}


@dataclass
class TimeSignal:
    """Multichannel real signal, ``samples`` has shape ``(channels, n_samples)``."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise ValueError("samples must be 1-D or (channels, n_samples)")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = samples
        self.sample_rate = int(self.sample_rate)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.samples.shape[1]


@dataclass
class SpectralTensor:
    """STFT coefficients of shape ``(fft_len // 2 + 1, channels, frames)``.

    ``length`` is the number of time samples of the analysed signal, kept so that
    :func:`istft` returns a signal of the original length.
    """

    values: np.ndarray
    fft_len: int
    hop: int
    window: str = "hann"
    length: int = 0
    sample_rate: int = 16000

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.ndim != 3:
            raise ValueError("values must have shape (bins, channels, frames)")
        if self.fft_len % 4 != 0:
            raise ValueError(f"fft_len must be divisible by 4, got {self.fft_len}")
        if self.values.shape[0] != self.fft_len // 2 + 1:
            raise ValueError(
                f"bin count {self.values.shape[0]} != fft_len/2 + 1 = {self.fft_len // 2 + 1}"
            )

    @property
    def n_bins(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]

    @property
    def n_frames(self) -> int:
        return self.values.shape[2]

    def with_values(self, values: np.ndarray) -> "SpectralTensor":
        """Same geometry, different coefficients (channel count may change)."""
        return SpectralTensor(
            values, self.fft_len, self.hop, self.window, self.length, self.sample_rate
        )


def dft_forward(seq) -> np.ndarray:
    """Unnormalized DFT with negative exponent, ``X[k] = sum_n x[n] exp(-2j pi k n / N)``."""
    seq = np.asarray(seq, dtype=complex)
    return np.fft.fft(seq)


def make_window(window: Union[str, np.ndarray], fft_len: int) -> np.ndarray:
    """Periodic analysis window of length ``fft_len``."""
    if isinstance(window, str):
        name = _WINDOW_ALIASES.get(window.lower())
        if name is None:
            raise ValueError(f"unknown window {window!r}")
        return get_window(name, fft_len, fftbins=True)
    win = np.asarray(window, dtype=float)
    if win.shape != (fft_len,):
        raise ValueError("window length must equal fft_len")
    return win


def _window_name(window) -> str:
    return window if isinstance(window, str) else "custom"


def is_cola(window: np.ndarray, hop: int, rtol: float = 1e-10) -> bool:
    """True if the squared window overlap-adds to a constant at this hop.

    Weighted overlap-add uses the window for analysis and synthesis, so the
    relevant sum is that of ``window ** 2``.
    """
    fft_len = len(window)
    if hop <= 0 or hop > fft_len:
        return False
    acc = np.zeros(hop)
    w2 = np.asarray(window, dtype=float) ** 2
    for start in range(0, fft_len, hop):
        seg = w2[start:start + hop]
        acc[: len(seg)] += seg
    ref = acc.mean()
    return bool(ref > 0 and np.max(np.abs(acc - ref)) <= rtol * ref)


def _check_geometry(fft_len: int, hop: int):
    if fft_len % 4 != 0:
        raise ValueError(f"fft_len must be divisible by 4, got {fft_len}")
    if not 0 < hop <= fft_len:
        raise ValueError(f"hop must satisfy 0 < hop <= fft_len, got {hop}")


def stft(sig: TimeSignal, fft_len: int = 512, hop: int = None, window="hann") -> SpectralTensor:
    """Short-time Fourier transform.

    Frames start at multiples of ``hop``; the tail of the last frames is
    zero-padded so that the number of frames is ``ceil(n_samples / hop)``.
    """
    if not isinstance(sig, TimeSignal):
        sig = TimeSignal(sig)
    if hop is None:
        hop = fft_len // 4
    _check_geometry(fft_len, hop)
    n = len(sig)
    if n == 0:
        raise ValueError("cannot transform an empty signal")
    win = make_window(window, fft_len)

    n_frames = math.ceil(n / hop)
    padded = np.zeros((sig.channels, (n_frames - 1) * hop + fft_len))
    padded[:, :n] = sig.samples
    idx = np.arange(n_frames)[:, None] * hop + np.arange(fft_len)[None, :]
    frames = padded[:, idx] * win  # (channels, frames, fft_len)
    spec = np.fft.rfft(frames, axis=-1)  # (channels, frames, bins)
    return SpectralTensor(
        spec.transpose(2, 0, 1), fft_len, hop, _window_name(window), n, sig.sample_rate
    )


def istft(spec: SpectralTensor, window=None) -> TimeSignal:
    """Weighted overlap-add inverse of :func:`stft`.

    Raises ``ValueError`` when the window/hop pair does not overlap-add to a
    constant.
    """
    fft_len, hop = spec.fft_len, spec.hop
    _check_geometry(fft_len, hop)
    win = make_window(spec.window if window is None else window, fft_len)
    if not is_cola(win, hop):
        raise ValueError(f"window/hop pair (fft_len={fft_len}, hop={hop}) is not COLA")

    frames = np.fft.irfft(spec.values.transpose(1, 2, 0), n=fft_len, axis=-1) * win
    n_frames = spec.n_frames
    total = (n_frames - 1) * hop + fft_len
    out = np.zeros((spec.channels, total))
    norm = np.zeros(total)
    w2 = win ** 2
    for m in range(n_frames):
        out[:, m * hop:m * hop + fft_len] += frames[:, m]
        norm[m * hop:m * hop + fft_len] += w2
    nz = norm > 1e-10 * norm.max()
    out[:, nz] /= norm[nz]
    out[:, ~nz] = 0.0
    length = spec.length if spec.length else (n_frames - 1) * hop + fft_len
    return TimeSignal(out[:, :length], spec.sample_rate)


def read_wav(path: Union[str, Path]) -> TimeSignal:
    """Read PCM16 or float32 WAV; integer PCM is scaled to [-1, 1)."""
    rate, data = wavfile.read(str(path))
    if data.dtype == np.int16:
        data = data.astype(float) / 32768.0
    elif data.dtype == np.int32:
        data = data.astype(float) / 2147483648.0
    elif np.issubdtype(data.dtype, np.floating):
        data = data.astype(float)
    else:
        raise ValueError(f"unsupported WAV sample type {data.dtype}")
    if data.ndim == 1:
        data = data[:, None]
    return TimeSignal(data.T, rate)


def write_wav(path: Union[str, Path], sig: TimeSignal, fmt: str = "float32"):
    """Write ``sig`` as little-endian ``float32`` or ``pcm16`` WAV."""
    data = sig.samples.T
    if fmt == "float32":
        data = data.astype("<f4")
    elif fmt == "pcm16":
        data = np.clip(np.round(data * 32768.0), -32768, 32767).astype("<i2")
    else:
        raise ValueError(f"unknown WAV format {fmt!r}")
    wavfile.write(str(path), sig.sample_rate, data)


def write_spectrum_csv(path: Union[str, Path], spec: SpectralTensor, channel: int = 0):
    """Dump one channel as CSV: one row per frame, Re/Im interleaved per bin."""
    vals = spec.values[:, channel, :].T
    out = np.empty((vals.shape[0], 2 * vals.shape[1]))
    out[:, 0::2] = vals.real
    out[:, 1::2] = vals.imag
    header = ",".join(f"re{k},im{k}" for k in range(vals.shape[1]))
    np.savetxt(str(path), out, delimiter=",", header=header, comments="", fmt="%.17g")
