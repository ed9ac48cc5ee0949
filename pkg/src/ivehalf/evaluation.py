"""
Signal-to-interference ratio and convergence-trace serialization.

SIR is computed in the STFT domain.  Only bins ``0..K/2`` are stored, so the
interior bins are weighted by two to account for their mirrored counterparts.
"""
from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .ive import ConvergenceTrace

__all__ = [
    "TRACE_COLUMNS",
    "SIR_SENTINEL",
    "symmetry_weights",
    "output_power",
    "sir",
    "sir_per_bin",
    "sir_all_sources",
    "image_covariances",
    "write_trace",
    "read_trace",
    "write_svg_plot",
]

TRACE_COLUMNS = ("iter", "contrast", "sir_db", "grad_norm", "wallclock_ms")
SIR_SENTINEL = math.inf
EPS = 1e-300


def symmetry_weights(n_bins: int) -> np.ndarray:
    c = np.full(n_bins, 2.0)
    c[0] = c[-1] = 1.0
    return c


def output_power(W, spec) -> np.ndarray:
    """Per-bin output power ``sum_n |W[:, k]^H x[k, :, n]|^2``; ``spec`` is (bins, d, frames)."""
    y = np.einsum("ik,kin->kn", np.conj(W), spec)
    return np.sum(np.abs(y) ** 2, axis=1)


def sir(W, target_spec, interf_spec) -> float:
    """Weighted output SIR in dB.

    Returns ``inf`` when the interference output is exactly zero.
    """
    W = np.asarray(W)
    c = symmetry_weights(W.shape[1])
    pt = np.sum(c * output_power(W, target_spec))
    pi = np.sum(c * output_power(W, interf_spec))
    if pi <= 0:
        return SIR_SENTINEL
    if pt <= 0:
        return -SIR_SENTINEL
    return float(10 * np.log10(pt / pi))


def sir_per_bin(W, target_spec, interf_spec, eps: float = 1e-30) -> np.ndarray:
    """Per-bin SIR breakdown in dB, interference power floored at ``eps``."""
    pt = output_power(W, target_spec)
    pi = np.maximum(output_power(W, interf_spec), eps)
    return 10 * np.log10(np.maximum(pt, eps) / pi)


def image_covariances(images) -> np.ndarray:
    """Per-bin target and interference covariance sums for every source.

    ``images`` is (n_src, bins, d, frames); the result has shape
    (n_src, 2, bins, d, d) with index 0 the target and 1 the sum of the others.
    """
    images = np.asarray(images)
    total = images.sum(axis=0)
    out = np.empty((len(images), 2) + images.shape[1:3] + images.shape[2:3], dtype=complex)
    for j in range(len(images)):
        out[j, 0] = images[j] @ images[j].conj().transpose(0, 2, 1)
        rest = total - images[j]
        out[j, 1] = rest @ rest.conj().transpose(0, 2, 1)
    return out


def sir_all_sources(W, images=None, covariances=None) -> np.ndarray:
    """SIR for every source taken in turn as target.

    Pass either ``images`` (n_src, bins, d, frames) or the output of
    :func:`image_covariances`; output power is ``w^H R w`` per bin.
    """
    if covariances is None:
        covariances = image_covariances(images)
    W = np.asarray(W)
    c = symmetry_weights(W.shape[1])
    power = np.real(np.einsum("ik,jmkil,lk->jmk", W.conj(), covariances, W)) @ c
    out = np.empty(len(power))
    for j, (pt, pi) in enumerate(power):
        out[j] = SIR_SENTINEL if pi <= 0 else 10 * np.log10(max(pt, EPS) / pi)
    return out


def write_trace(trace: ConvergenceTrace, path: Union[str, Path], timing: bool = True):
    """Write a trace as CSV with header ``iter,contrast,sir_db,grad_norm,wallclock_ms``.

    ``timing=False`` writes zeros in the wall-clock column so that files from
    repeated runs are byte-identical.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for i in range(len(trace.iteration)):
            writer.writerow([
                int(trace.iteration[i]),
                repr(float(trace.contrast[i])),
                repr(float(trace.sir_db[i])),
                repr(float(trace.grad_norm[i])),
                repr(float(trace.wallclock_ms[i]) if timing else 0.0),
            ])


def read_trace(path: Union[str, Path]) -> ConvergenceTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected header") from None
        if tuple(h.strip() for h in header) != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        trace = ConvergenceTrace(algorithm=Path(path).stem)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRACE_COLUMNS):
                raise ValueError(f"{path}:{lineno}: expected {len(TRACE_COLUMNS)} fields")
            trace.iteration.append(int(row[0]))
            trace.contrast.append(float(row[1]))
            trace.sir_db.append(float(row[2]))
            trace.grad_norm.append(float(row[3]))
            trace.wallclock_ms.append(float(row[4]))
    return trace


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")


def write_svg_plot(traces: Sequence[ConvergenceTrace], labels: Sequence[str],
                   path: Union[str, Path], field: str = "sir_db",
                   width: int = 640, height: int = 400):
    """Line plot of ``field`` against iteration, one polyline per trace."""
    if not traces:
        raise ValueError("no traces to plot")
    series = []
    for tr in traces:
        pts = [(float(i), float(v)) for i, v in zip(tr.iteration, getattr(tr, field))
               if math.isfinite(v)]
        series.append(pts)
    xs = [p[0] for s in series for p in s] or [0.0]
    ys = [p[1] for s in series for p in s] or [0.0]
    x0, x1 = 0.0, max(max(xs), 1.0)
    y0, y1 = min(ys), max(ys)
    if y1 - y0 < 1e-9:
        y0, y1 = y0 - 1.0, y1 + 1.0
    ml, mr, mt, mb = 60, 20, 20, 50
    pw, ph = width - ml - mr, height - mt - mb

    def tx(x):
        return ml + pw * (x - x0) / (x1 - x0)

    def ty(y):
        return mt + ph * (1 - (y - y0) / (y1 - y0))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv, yv = x0 + frac * (x1 - x0), y0 + frac * (y1 - y0)
        out.append(f'<text x="{tx(xv):.1f}" y="{mt + ph + 16}" text-anchor="middle">{xv:g}</text>')
        out.append(f'<text x="{ml - 6}" y="{ty(yv) + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">iteration</text>')
    out.append(f'<text x="14" y="{mt + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 14 {mt + ph / 2})">{field}</text>')
    for idx, (pts, label) in enumerate(zip(series, labels)):
        color = _COLORS[idx % len(_COLORS)]
        coords = " ".join(f"{tx(x):.2f},{ty(y):.2f}" for x, y in pts)
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{coords}"/>')
        ly = mt + 16 + 16 * idx
        out.append(f'<line x1="{ml + pw - 150}" y1="{ly - 4}" x2="{ml + pw - 130}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw - 125}" y="{ly}">{_escape(label)}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n")


def _escape(text: str) -> str:
    return text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
