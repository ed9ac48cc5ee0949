"""
Independent vector extraction by gradient ascent.

Two algorithms share the statistical machinery below:

* ``ogive`` - per-bin separating vectors updated by ``w <- w + mu * grad``
  followed by rescaling to unit output variance (optionally on whitened data,
  ``ogive_whitened``);
* ``hive`` - separating vectors constrained to half-length real filters,
  updated through the manifold parameters ``V_t`` of :mod:`ivehalf.manifold`.

Array layout: observations ``x`` are ``(bins, d, frames)``, separating stacks
``W`` are ``(d, bins)`` (one separating vector per column), extracted sources
``s`` are ``(bins, frames)``.

Conjugation convention: the source model is the spherical Laplacian
``f(s) ~ exp(-||s||)`` with score ``phi = s / ||s||``.  The gradient with
respect to ``w*`` is ``a - E[conj(phi) x] / (sigma * nu)`` with
``nu = E[conj(phi) s]``, which is real and positive and makes the gradient
vanish (in expectation) at the true separating vector.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import manifold as mf
from .stft import SpectralTensor

__all__ = [
    "ALGORITHMS",
    "IllConditionedError",
    "ObservationSet",
    "SourceEstimate",
    "ScoreBlock",
    "AlgoConfig",
    "ConvergenceTrace",
    "make_observations",
    "sample_covariance",
    "whiten",
    "extract_source",
    "score_spherical",
    "orthogonal_mixing",
    "bin_gradient",
    "gradients",
    "background_extract",
    "contrast_value",
    "ogive_iteration",
    "hive_iteration",
    "initial_stack",
    "run",
]

ALGORITHMS = ("hive", "ogive", "ogive_whitened")
NORMALIZATIONS = ("unit_variance", "unit_norm")
EPS = 1e-12


class IllConditionedError(ValueError):
    """Raised when a per-bin covariance cannot be whitened."""

    def __init__(self, bins):
        self.bins = list(bins)
        super().__init__(f"ill-conditioned covariance in bins {self.bins}")


@dataclass
class ObservationSet:
    """Observed STFT data together with its per-bin statistics.

    ``whitener``/``dewhitener`` are set only for whitened data; a separating
    vector ``u`` found on whitened data corresponds to ``whitener[k] @ u`` in the
    original coordinates (the whitener is Hermitian).
    """

    x: np.ndarray
    cov: np.ndarray
    whitener: Optional[np.ndarray] = None
    dewhitener: Optional[np.ndarray] = None
    scale: float = 1.0

    @property
    def n_bins(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @property
    def n_frames(self) -> int:
        return self.x.shape[2]

    def to_original(self, W: np.ndarray) -> np.ndarray:
        """Separating stack expressed in the coordinates of the unwhitened data."""
        if self.whitener is None:
            return W
        return np.einsum("kij,jk->ik", self.whitener, W)

    def from_original(self, W: np.ndarray) -> np.ndarray:
        if self.dewhitener is None:
            return W
        return np.einsum("kij,jk->ik", self.dewhitener, W)


@dataclass
class SourceEstimate:
    s: np.ndarray
    sigma2: np.ndarray
    s_norm: np.ndarray


@dataclass
class ScoreBlock:
    phi: np.ndarray
    nu: np.ndarray


@dataclass
class AlgoConfig:
    """Settings of :func:`run`.

    ``ridge`` is relative: bin ``k`` gets ``ridge * tr(C_k) / d`` added to its
    covariance diagonal.  ``normalize`` rescales the observations by a single
    global factor so that the average per-channel bin power is one; this keeps
    the fixed step size meaningful independently of the input level.
    """

    algorithm: str = "hive"
    mu: float = 0.05
    max_iter: int = 200
    variance_floor: float = EPS
    ridge: float = 1e-6
    seed: int = 0
    init: str = "e1"
    normalize: bool = True
    keep_states: bool = False
    normalization: str = "unit_variance"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.variance_floor > 0:
            raise ValueError("variance_floor must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")
        if int(self.max_iter) < 0:
            raise ValueError("max_iter must be non-negative")
        if self.init not in ("e1", "random"):
            raise ValueError("init must be 'e1' or 'random'")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"normalization must be one of {NORMALIZATIONS}")


@dataclass
class ConvergenceTrace:
    """Per-iteration monitoring record; row 0 is the initial state."""

    algorithm: str = ""
    iteration: List[int] = field(default_factory=list)
    contrast: List[float] = field(default_factory=list)
    sir_db: List[float] = field(default_factory=list)
    grad_norm: List[float] = field(default_factory=list)
    wallclock_ms: List[float] = field(default_factory=list)
    sir_by_source: Optional[np.ndarray] = None
    target: Optional[int] = None
    final_state: Optional[np.ndarray] = None
    final_W: Optional[np.ndarray] = None
    states: List[np.ndarray] = field(default_factory=list)
    degenerate_bins: int = 0

    def __len__(self) -> int:
        return len(self.iteration)


def sample_covariance(x, ridge: float = 0.0) -> np.ndarray:
    """Per-bin sample covariance ``E[x x^H] + lambda I``.

    ``x`` is ``(bins, d, frames)`` or ``(d, frames)``; ``ridge`` is relative to
    ``tr(C) / d`` per bin.
    """
    x = np.asarray(x)
    single = x.ndim == 2
    if single:
        x = x[None]
    d, n = x.shape[1], x.shape[2]
    if n < d:
        raise ValueError(f"need at least d={d} frames, got {n}")
    C = np.einsum("kin,kjn->kij", x, x.conj()) / n
    C = 0.5 * (C + C.conj().transpose(0, 2, 1))
    if ridge:
        lam = ridge * np.real(np.trace(C, axis1=1, axis2=2)) / d
        C = C + lam[:, None, None] * np.eye(d)
    return C[0] if single else C


def make_observations(data, ridge: float = 0.0, normalize: bool = False) -> ObservationSet:
    """Wrap STFT data (``SpectralTensor`` or ``(bins, d, frames)`` array)."""
    x = data.values if isinstance(data, SpectralTensor) else np.asarray(data, dtype=complex)
    if x.ndim != 3:
        raise ValueError("observations must have shape (bins, d, frames)")
    scale = 1.0
    if normalize:
        power = np.mean(np.abs(x) ** 2)
        if power > 0:
            scale = 1.0 / np.sqrt(power)
            x = x * scale
    return ObservationSet(x, sample_covariance(x, ridge), scale=scale)


def whiten(obs: ObservationSet, tol: float = 1e-12) -> ObservationSet:
    """Per-bin whitening with ``C^{-1/2}`` from a Hermitian eigendecomposition.

    The unregularized sample covariance is used so that the whitened data has
    exactly identity covariance.
    """
    C = sample_covariance(obs.x)
    evals, evecs = np.linalg.eigh(C)
    trace = np.sum(evals, axis=1)
    bad = np.nonzero(evals[:, 0] < tol * trace)[0]
    if len(bad):
        raise IllConditionedError(bad)
    vh = evecs.conj().transpose(0, 2, 1)
    P = (evecs / np.sqrt(evals)[:, None, :]) @ vh
    Pinv = (evecs * np.sqrt(evals)[:, None, :]) @ vh
    xw = P @ obs.x
    return ObservationSet(xw, sample_covariance(xw), P, Pinv, obs.scale)


def _data(obs_or_x) -> np.ndarray:
    return obs_or_x.x if isinstance(obs_or_x, ObservationSet) else np.asarray(obs_or_x)


def extract_source(W, obs, eps: float = EPS) -> SourceEstimate:
    """``s[k] = W[:, k]^H x[k]`` with variances floored at ``eps``."""
    x = _data(obs)
    W = np.asarray(W, dtype=complex)
    if W.shape != x.shape[1::-1]:
        raise ValueError(f"W shape {W.shape} does not match data (d, bins) = {x.shape[1::-1]}")
    s = np.einsum("ik,kin->kn", W.conj(), x)
    sigma2 = np.maximum(np.mean(np.abs(s) ** 2, axis=1), eps)
    return SourceEstimate(s, sigma2, s / np.sqrt(sigma2)[:, None])


def score_spherical(s_norm, eps: float = EPS) -> ScoreBlock:
    """Score of the spherical Laplacian model, ``phi_k = s_k / ||s||`` per frame."""
    s_norm = np.asarray(s_norm)
    norms = np.maximum(np.sqrt(np.sum(np.abs(s_norm) ** 2, axis=0)), eps)
    phi = s_norm / norms
    nu = np.mean(phi.conj() * s_norm, axis=1)
    return ScoreBlock(phi, nu)


def orthogonal_mixing(w, C, sigma2) -> np.ndarray:
    """Mixing vector(s) ``a = C w / sigma2`` implied by the orthogonal constraint.

    Accepts a single bin (``w`` (d,), ``C`` (d, d)) or a stack (``W`` (d, bins),
    ``C`` (bins, d, d), ``sigma2`` (bins,)).
    """
    w = np.asarray(w)
    C = np.asarray(C)
    if w.ndim == 1:
        return C @ w / sigma2
    return np.einsum("kij,jk->ik", C, w) / np.asarray(sigma2)[None, :]


def bin_gradient(a, phi_k, xbar_k, nu_k, eps: float = EPS) -> np.ndarray:
    """Gradient for one bin: ``a - E[conj(phi_k) xbar_k] / nu_k``.

    ``xbar_k`` is ``(d, frames)``; returns zeros when ``|nu_k| < eps``.
    """
    if abs(nu_k) < eps:
        return np.zeros_like(np.asarray(a, dtype=complex))
    return a - np.mean(np.conj(phi_k)[None, :] * xbar_k, axis=1) / nu_k


def gradients(W, obs: ObservationSet, eps: float = EPS, score: Optional[ScoreBlock] = None):
    """Gradients for all bins.

    Returns ``(omega, est, score, degenerate)`` where ``omega`` is ``(d, bins)``
    and ``degenerate`` a boolean mask of bins whose gradient was zeroed.
    A precomputed ``score`` may be passed, in which case bin ``k`` of the
    result depends only on ``W[:, k]``, the score and the data of bin ``k``.
    """
    est = extract_source(W, obs, eps)
    if score is None:
        score = score_spherical(est.s_norm, eps)
    a = orthogonal_mixing(W, obs.cov, est.sigma2)
    # E[conj(phi) x] / sigma, computed without materializing x / sigma
    corr = np.einsum("kn,kin->ik", score.phi.conj(), obs.x) / obs.n_frames
    corr /= np.sqrt(est.sigma2)[None, :]
    degenerate = np.abs(score.nu) < eps
    nu = np.where(degenerate, 1.0, score.nu)
    omega = a - corr / nu[None, :]
    omega[:, degenerate] = 0.0
    if not np.all(np.isfinite(omega)):
        raise FloatingPointError("non-finite gradient")
    return omega, est, score, degenerate


def background_extract(a, x_k) -> np.ndarray:
    """Background signals ``z = B x`` with ``B = [g, -gamma I]`` for ``a = [gamma; g]``."""
    a = np.asarray(a)
    d = a.shape[0]
    B = np.concatenate([a[1:, None], -a[0] * np.eye(d - 1)], axis=1)
    return B @ np.asarray(x_k)


def contrast_value(W, obs: ObservationSet, eps: float = EPS, return_flagged: bool = False,
                   raw_cov=None):
    """Contrast (quasi log-likelihood) of ``W`` with the additive constant set to zero.

    Bins where ``|gamma| < eps`` or the background covariance is singular are
    excluded; their count is returned with ``return_flagged=True``.
    ``raw_cov`` optionally supplies the precomputed unregularized covariance.
    """
    W = np.asarray(W, dtype=complex)
    est = extract_source(W, obs, eps)
    d = obs.d
    norms = np.sqrt(np.sum(np.abs(est.s_norm) ** 2, axis=0))
    value = -np.mean(norms) - np.sum(np.log(est.sigma2))
    flagged = 0
    if d > 1:
        a = orthogonal_mixing(W, obs.cov, est.sigma2)
        gamma = a[0]
        B = np.zeros((obs.n_bins, d - 1, d), dtype=complex)
        B[:, :, 0] = a[1:].T
        B[:, :, 1:] = -gamma[:, None, None] * np.eye(d - 1)
        # sample covariance of z = B x, from the unregularized data covariance
        C0 = sample_covariance(obs.x) if raw_cov is None else raw_cov
        Cz = B @ C0 @ B.conj().transpose(0, 2, 1)
        evals = np.linalg.eigvalsh(Cz)
        bad = (np.abs(gamma) < eps) | (evals[:, 0] <= eps * np.maximum(evals[:, -1], eps))
        flagged = int(np.sum(bad))
        good = ~bad
        # E[z^H Cz^{-1} z] = tr(Cz^{-1} E[z z^H])
        quad = np.real(np.trace(np.linalg.solve(Cz[good], Cz[good]), axis1=1, axis2=2))
        value += np.sum(-quad + (d - 2) * np.log(np.abs(gamma[good]) ** 2))
    if return_flagged:
        return float(value), flagged
    return float(value)


def _rescale_unit_variance(W, cov, eps):
    var = np.real(np.einsum("ik,kij,jk->k", W.conj(), cov, W))
    return W / np.sqrt(np.maximum(var, eps))[None, :]


def _ogive_step(W, obs, mu, eps):
    omega, _, _, degenerate = gradients(W, obs, eps)
    W = _rescale_unit_variance(W + mu * omega, obs.cov, eps)
    return W, omega, degenerate


def ogive_iteration(W, obs: ObservationSet, mu: float, eps: float = EPS) -> np.ndarray:
    """One OGIVE pass: gradient step on every bin, then unit output variance."""
    if not mu >= 0:
        raise ValueError("mu must be non-negative")
    return _ogive_step(np.asarray(W, dtype=complex), obs, mu, eps)[0]


def _normalize_columns(V_t, obs, normalization, eps):
    if normalization == "unit_norm":
        return V_t / np.maximum(np.linalg.norm(V_t, axis=0), eps)[None, :]
    # bin 2l is carried by v_l alone
    return _rescale_unit_variance(V_t, obs.cov[0::2], eps)


def _hive_step(V_t, obs, mapping, mu, eps, normalization="unit_variance"):
    W = mf.expand(V_t, mapping)
    omega, _, _, degenerate = gradients(W, obs, eps)
    grad_v = mf.pullback_gradient(omega, mapping)
    V_t = mf.enforce_real_edges(V_t + mu * grad_v)
    V_t = _normalize_columns(V_t, obs, normalization, eps)
    return V_t, grad_v, degenerate


def hive_iteration(V_t, obs: ObservationSet, mapping: mf.ManifoldMapping, mu: float,
                   eps: float = EPS, normalization: str = "unit_variance") -> np.ndarray:
    """One pass of the half-length-constrained algorithm.

    The manifold gradient step is followed by zeroing the imaginary parts of the
    first and last parameter columns and rescaling every column.

    Parameters
    ----------
    normalization : {"unit_variance", "unit_norm"}
        ``"unit_variance"`` scales column ``l`` so that the output at bin
        ``2l``, which it determines alone, has unit variance; ``"unit_norm"``
        scales every column to unit Euclidean norm.  Both are real positive
        column scalings, so the iterate stays on the half-length manifold.
    """
    if not mu >= 0:
        raise ValueError("mu must be non-negative")
    if normalization not in NORMALIZATIONS:
        raise ValueError(f"normalization must be one of {NORMALIZATIONS}")
    return _hive_step(np.asarray(V_t, dtype=complex), obs, mapping, mu, eps, normalization)[0]


def initial_stack(d: int, n_cols: int, init: str = "e1", seed: int = 0) -> np.ndarray:
    """Initial separating (or manifold) stack: first microphone, or a seeded random draw."""
    if init == "e1":
        W = np.zeros((d, n_cols), dtype=complex)
        W[0] = 1.0
        return W
    rng = np.random.default_rng(seed)
    W = np.zeros((d, n_cols), dtype=complex)
    W[0] = 1.0
    W += 0.1 * (rng.standard_normal((d, n_cols)) + 1j * rng.standard_normal((d, n_cols)))
    return W


def _fft_len(n_bins: int) -> int:
    K = 2 * (n_bins - 1)
    if K % 4:
        raise ValueError(f"bin count {n_bins} does not correspond to a DFT length divisible by 4")
    return K


def run(data, config: AlgoConfig = None, images=None, target: Optional[int] = None,
        callback=None) -> ConvergenceTrace:
    """Run one extraction algorithm and record a convergence trace.

    Parameters
    ----------
    data : SpectralTensor, ndarray or ObservationSet
        Observations ``(bins, d, frames)``.
    config : AlgoConfig
    images : ndarray, optional
        Source images ``(n_src, bins, d, frames)`` used to compute SIR.
    target : int, optional
        Source index whose SIR is reported.  ``None`` picks the source with the
        highest SIR at the last iteration, i.e. the source that got extracted.
    callback : callable, optional
        Called as ``callback(iteration, W)`` after every iteration.
    """
    from .evaluation import image_covariances, sir_all_sources

    config = config or AlgoConfig()
    eps = config.variance_floor
    if isinstance(data, ObservationSet):
        obs = data
    else:
        obs = make_observations(data, config.ridge, config.normalize)
    d, n_bins = obs.d, obs.n_bins
    if config.algorithm == "hive":
        mapping = mf.build_mapping(_fft_len(n_bins))
        state = mf.enforce_real_edges(initial_stack(d, mapping.n_params, config.init, config.seed))
        W = mf.expand(state, mapping)
        work = obs
    else:
        state = initial_stack(d, n_bins, config.init, config.seed)
        W = state
        work = whiten(obs) if config.algorithm == "ogive_whitened" else obs
        state = work.from_original(state)

    trace = ConvergenceTrace(algorithm=config.algorithm)
    sirs = []
    raw_cov = sample_covariance(obs.x)
    img_cov = image_covariances(images) if images is not None else None

    def record(it, W_orig, gnorm, elapsed):
        trace.iteration.append(it)
        trace.contrast.append(contrast_value(W_orig, obs, eps, raw_cov=raw_cov))
        trace.grad_norm.append(gnorm)
        trace.wallclock_ms.append(elapsed)
        if images is not None:
            sirs.append(sir_all_sources(W_orig, covariances=img_cov))
        if config.keep_states:
            trace.states.append(state.copy())

    t0 = time.perf_counter()
    record(0, W, float("nan"), 0.0)
    for it in range(1, int(config.max_iter) + 1):
        try:
            if config.algorithm == "hive":
                state, grad, deg = _hive_step(state, work, mapping, config.mu, eps, config.normalization)
                W = mf.expand(state, mapping)
            else:
                state, grad, deg = _ogive_step(state, work, config.mu, eps)
                W = work.to_original(state)
        except (FloatingPointError, ValueError, np.linalg.LinAlgError) as exc:
            raise RuntimeError(f"iteration {it}: {exc}") from exc
        trace.degenerate_bins = max(trace.degenerate_bins, int(np.sum(deg)))
        record(it, W, float(np.linalg.norm(grad)), 1000.0 * (time.perf_counter() - t0))
        if callback is not None:
            callback(it, W)

    trace.final_state = state
    trace.final_W = W
    if images is not None:
        trace.sir_by_source = np.array(sirs)
        trace.target = int(np.argmax(trace.sir_by_source[-1])) if target is None else int(target)
        trace.sir_db = [float(v) for v in trace.sir_by_source[:, trace.target]]
    else:
        trace.sir_db = [float("nan")] * len(trace.iteration)
    return trace
