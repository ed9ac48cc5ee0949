"""Blind extraction of one source from frequency-domain mixtures by independent
vector extraction, with separating filters optionally constrained to half the
DFT length."""

from .ive import AlgoConfig, ConvergenceTrace, ObservationSet, make_observations, run
from .manifold import ManifoldMapping, build_mapping, expand, project_to_manifold, pullback_gradient
from .stft import SpectralTensor, TimeSignal, istft, stft

__version__ = "0.1.0"
