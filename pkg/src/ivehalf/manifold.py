"""
Linear parameterization of separating vectors by half-length filters.

A real FIR filter ``h`` of length at most ``K/2`` is fully described by its
``L = K/2``-point DFT.  Its ``K``-point DFT coincides with the ``L``-point one
at even bins and is a circular convolution of it with ``upsilon`` (the
``L``-point DFT of ``exp(-2j pi n / K)``) at odd bins.  Collecting this in an
``L x K`` matrix ``F`` gives ``W = V @ F.conj()`` where ``V`` stacks the
half-resolution parameters column-wise.

Separating vectors act on the data conjugated (``s = w^H x``), so a stack
``W`` (shape ``(d, K/2+1)``) holds the *conjugated* truncated spectra of the
time-domain filters ``h`` (shape ``(d, K)``)::

    W[:, k] = conj(fft(h, K))[:, k]

For real filters only ``L/2 + 1`` columns of ``V`` are free; the rest follow
from conjugate symmetry, which gives the truncated map
``W_t = V_t F1* + V_t* J F2*`` (see :func:`expand`).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

__all__ = [
    "ManifoldMapping",
    "build_mapping",
    "expand",
    "expand_full",
    "symmetric_extension",
    "pullback_gradient",
    "project_to_manifold",
    "implied_filters",
    "manifold_residual",
    "enforce_real_edges",
    "save_mapping",
]


@dataclass(frozen=True)
class ManifoldMapping:
    """Precomputed mapping matrices for DFT length ``K``.

    Attributes
    ----------
    K : int
        Full DFT length.
    L : int
        ``K // 2``, the half-length filter DFT size.
    upsilon : ndarray, shape (L,)
        ``L``-point DFT of ``exp(-2j pi n / K)``, ``n = 0..L-1``.
    F : ndarray, shape (L, K)
        Full mapping; ``F[:, 0::2]`` is the identity.
    F1, F2 : ndarray
        Rows ``0..L/2`` and ``L/2+1..L-1`` of ``F`` restricted to columns ``0..K/2``.
    J : ndarray, shape (L/2+1, L/2-1)
        Anti-diagonal selector (anti-identity with first and last column removed).
    """

    K: int
    L: int
    upsilon: np.ndarray = field(repr=False)
    F: np.ndarray = field(repr=False)
    F1: np.ndarray = field(repr=False)
    F2: np.ndarray = field(repr=False)
    J: np.ndarray = field(repr=False)

    @property
    def n_bins(self) -> int:
        return self.K // 2 + 1

    @property
    def n_params(self) -> int:
        return self.L // 2 + 1


def build_mapping(K: int) -> ManifoldMapping:
    """Build the half-length filter mapping for DFT length ``K`` (``K % 4 == 0``)."""
    K = int(K)
    if K <= 0 or K % 4 != 0:
        raise ValueError(f"K must be a positive multiple of 4, got {K}")
    L = K // 2
    n = np.arange(L)
    upsilon = np.fft.fft(np.exp(-2j * np.pi * n / K))

    F = np.zeros((L, K), dtype=complex)
    F[:, 0::2] = np.eye(L)
    # odd bins: circular convolution with upsilon; 1/L from the DFT product rule
    lag = (n[None, :] - n[:, None]) % L  # lag[m, l] = (l - m) mod L
    F[:, 1::2] = upsilon[lag] / L

    half = L // 2
    F1 = F[: half + 1, : L + 1].copy()
    F2 = F[half + 1:, : L + 1].copy()
    J = np.fliplr(np.eye(half + 1))[:, 1:-1].copy()
    for arr in (upsilon, F, F1, F2, J):
        arr.setflags(write=False)
    return ManifoldMapping(K, L, upsilon, F, F1, F2, J)


def _check_cols(arr: np.ndarray, expected: int, what: str):
    if arr.ndim != 2 or arr.shape[1] != expected:
        raise ValueError(f"{what} must have {expected} columns, got shape {arr.shape}")


def expand(V_t, mapping: ManifoldMapping) -> np.ndarray:
    """Map manifold parameters ``V_t`` (d, L/2+1) to separating vectors ``W_t`` (d, K/2+1)."""
    V_t = np.asarray(V_t, dtype=complex)
    _check_cols(V_t, mapping.n_params, "V_t")
    return V_t @ mapping.F1.conj() + V_t.conj() @ mapping.J @ mapping.F2.conj()


def symmetric_extension(V_t, mapping: ManifoldMapping) -> np.ndarray:
    """Full (d, L) parameter matrix implied by conjugate symmetry of ``V_t``."""
    V_t = np.asarray(V_t, dtype=complex)
    _check_cols(V_t, mapping.n_params, "V_t")
    return np.concatenate([V_t, V_t.conj() @ mapping.J], axis=1)


def expand_full(V, mapping: ManifoldMapping) -> np.ndarray:
    """Untruncated map ``W = V F*`` for a full (d, L) parameter matrix."""
    V = np.asarray(V, dtype=complex)
    _check_cols(V, mapping.L, "V")
    return V @ mapping.F.conj()


def pullback_gradient(omega, mapping: ManifoldMapping) -> np.ndarray:
    """Pull per-bin gradients back to the manifold parameters.

    Given ``omega = dC/dW_t*`` of a real function ``C``, returns ``dC/dV_t*``
    under ``W_t = expand(V_t)``.  This is the adjoint of :func:`expand` with
    respect to the real inner product ``Re tr(A^H B)``.
    """
    omega = np.asarray(omega, dtype=complex)
    _check_cols(omega, mapping.n_bins, "omega")
    return omega @ mapping.F1.T + omega.conj() @ mapping.F2.conj().T @ mapping.J.T


def project_to_manifold(filters, mapping: ManifoldMapping, rtol: float = 1e-6) -> np.ndarray:
    """Manifold parameters of half-length filters given as (d, K) or (d, K/2) taps."""
    filters = np.atleast_2d(np.asarray(filters))
    K, L = mapping.K, mapping.L
    if filters.shape[1] == K:
        tail = np.sum(np.abs(filters[:, L:]) ** 2)
        total = np.sum(np.abs(filters) ** 2)
        if total > 0 and tail > rtol * total:
            raise ValueError(
                f"filters have {tail / total:.3g} relative energy beyond tap {L}; truncate first"
            )
        filters = filters[:, :L]
    elif filters.shape[1] != L:
        raise ValueError(f"filters must have {K} or {L} taps, got {filters.shape[1]}")
    return np.fft.fft(filters, axis=1)[:, : mapping.n_params].conj()


def implied_filters(W_t, K: int, return_imag: bool = False):
    """Time-domain filters (d, K) whose conjugated spectra are the rows of ``W_t``.

    The spectrum is extended to all ``K`` bins by conjugate symmetry.  With
    ``return_imag=True`` the imaginary residual of the inverse DFT is returned as
    well; it is zero (to round-off) for a consistently real stack.
    """
    W_t = np.asarray(W_t, dtype=complex)
    _check_cols(W_t, K // 2 + 1, "W_t")
    spec = W_t.conj()
    full = np.concatenate([spec, spec[:, -2:0:-1].conj()], axis=1)
    taps = np.fft.ifft(full, axis=1)
    if return_imag:
        return taps.real, taps.imag
    return taps.real


def manifold_residual(W_t, K: int) -> float:
    """Energy ratio of taps ``K/2..K-1`` to total, for the filters implied by ``W_t``."""
    taps, imag = implied_filters(W_t, K, return_imag=True)
    total = np.sum(taps ** 2) + np.sum(imag ** 2)
    if total == 0:
        return 0.0
    return float(np.sqrt((np.sum(taps[:, K // 2:] ** 2) + np.sum(imag ** 2)) / total))


def enforce_real_edges(V_t: np.ndarray) -> np.ndarray:
    """Zero the imaginary part of the first and last parameter columns (in place)."""
    V_t[:, 0] = V_t[:, 0].real
    V_t[:, -1] = V_t[:, -1].real
    return V_t


def save_mapping(path: Union[str, Path], mapping: ManifoldMapping):
    """Write ``upsilon`` and ``F`` to an ``.npz`` archive for inspection."""
    np.savez(str(path), K=mapping.K, upsilon=mapping.upsilon, F=mapping.F)
