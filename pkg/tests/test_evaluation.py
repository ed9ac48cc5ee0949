import math
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ivehalf import evaluation as ev
from ivehalf import sim
from ivehalf.ive import ConvergenceTrace
from ivehalf.stft import stft


def crandn(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def naive_sir(W, tgt, itf):
    """Loop-based weighted SIR used as an independent oracle."""
    bins = W.shape[1]
    pt = pi = 0.0
    for k in range(bins):
        c = 1.0 if k in (0, bins - 1) else 2.0
        for n in range(tgt.shape[2]):
            pt += c * abs(np.vdot(W[:, k], tgt[k, :, n])) ** 2
            pi += c * abs(np.vdot(W[:, k], itf[k, :, n])) ** 2
    return 10 * math.log10(pt / pi)


def test_symmetry_weights():
    assert list(ev.symmetry_weights(5)) == [1, 2, 2, 2, 1]


def test_sir_matches_naive_loop():
    rng = np.random.default_rng(0)
    W = crandn(rng, 2, 9)
    tgt, itf = crandn(rng, 9, 2, 30), crandn(rng, 9, 2, 30)
    assert abs(ev.sir(W, tgt, itf) - naive_sir(W, tgt, itf)) < 1e-10


def test_sir_target_only_channel_is_sentinel():
    rng = np.random.default_rng(1)
    tgt = np.zeros((5, 2, 20), dtype=complex)
    itf = np.zeros((5, 2, 20), dtype=complex)
    tgt[:, 0] = crandn(rng, 5, 20)
    itf[:, 1] = crandn(rng, 5, 20)
    W = np.zeros((2, 5))
    W[0] = 1
    assert ev.sir(W, tgt, itf) == ev.SIR_SENTINEL == math.inf
    assert ev.sir(np.vstack([W[1], W[0]]), tgt, itf) == -math.inf


def test_sir_equal_power_is_zero_db():
    rng = np.random.default_rng(2)
    tgt = crandn(rng, 5, 2, 20)
    assert ev.sir(crandn(rng, 2, 5), tgt, 1j * tgt) == pytest.approx(0.0, abs=1e-12)


def test_exact_inverse_sir_above_120db():
    src = sim.gen_sources(2, 20000, seed=0)
    system = sim.gen_mixing(2, 1, seed=1)
    _, images = sim.mix(src, system)
    A = system.taps[:, :, 0]
    spec = [stft(im, 64, 16).values for im in images]
    w = np.linalg.inv(A)[0]
    W = np.repeat(w.conj()[:, None], 33, axis=1)  # s = W^H x selects source 0
    assert ev.sir(W, spec[0], spec[1]) > 120


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.complex_numbers(min_magnitude=1e-3, max_magnitude=1e3))
def test_sir_uniform_scale_invariance(seed, alpha):
    rng = np.random.default_rng(seed)
    W = crandn(rng, 2, 9)
    tgt, itf = crandn(rng, 9, 2, 16), crandn(rng, 9, 2, 16)
    assert abs(ev.sir(alpha * W, tgt, itf) - ev.sir(W, tgt, itf)) < 1e-9


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_per_bin_sir_invariant_to_bin_scaling(seed):
    rng = np.random.default_rng(seed)
    W = crandn(rng, 2, 9)
    tgt, itf = crandn(rng, 9, 2, 16), crandn(rng, 9, 2, 16)
    D = crandn(rng, 9)
    np.testing.assert_allclose(ev.sir_per_bin(W * D, tgt, itf), ev.sir_per_bin(W, tgt, itf),
                               atol=1e-9)


def test_additivity_on_orthogonal_fixture():
    # target and interference outputs orthogonal over frames at every bin
    rng = np.random.default_rng(3)
    bins, n = 9, 32
    Q = np.linalg.qr(crandn(rng, n, n))[0]
    tgt = np.stack([np.outer(crandn(rng, 2), Q[:, 0]) for _ in range(bins)])
    itf = np.stack([np.outer(crandn(rng, 2), Q[:, 1]) for _ in range(bins)])
    W = crandn(rng, 2, bins)
    c = ev.symmetry_weights(bins)
    total = c @ ev.output_power(W, tgt + itf)
    parts = c @ ev.output_power(W, tgt) + c @ ev.output_power(W, itf)
    assert abs(total - parts) < 1e-8 * total


def test_sir_all_sources_matches_pairwise():
    rng = np.random.default_rng(4)
    images = crandn(rng, 3, 9, 2, 25)
    W = crandn(rng, 2, 9)
    all_src = ev.sir_all_sources(W, images)
    for j in range(3):
        ref = ev.sir(W, images[j], images.sum(axis=0) - images[j])
        assert abs(all_src[j] - ref) < 1e-9
    cov = ev.image_covariances(images)
    np.testing.assert_allclose(ev.sir_all_sources(W, covariances=cov), all_src)


def make_trace(n):
    rng = np.random.default_rng(n)
    tr = ConvergenceTrace(algorithm="hive")
    tr.iteration = list(range(n))
    tr.contrast = list(rng.standard_normal(n))
    tr.sir_db = list(rng.standard_normal(n) * 10)
    tr.grad_norm = list(rng.random(n))
    tr.wallclock_ms = list(np.cumsum(rng.random(n)))
    return tr


def test_trace_empty_is_header_only(tmp_path):
    path = tmp_path / "t.csv"
    ev.write_trace(ConvergenceTrace(), path)
    assert path.read_text() == "iter,contrast,sir_db,grad_norm,wallclock_ms\n"
    assert ev.read_trace(path).iteration == []


def test_trace_roundtrip_lossless(tmp_path):
    tr = make_trace(200)
    tr.sir_db[5] = math.inf
    path = tmp_path / "t.csv"
    ev.write_trace(tr, path)
    assert len(path.read_text().splitlines()) == 201
    back = ev.read_trace(path)
    for name in ("iteration", "contrast", "sir_db", "grad_norm", "wallclock_ms"):
        assert getattr(back, name) == getattr(tr, name)


def test_trace_without_timing_is_deterministic(tmp_path):
    a, b = make_trace(10), make_trace(10)
    b.wallclock_ms = [v + 1 for v in b.wallclock_ms]
    ev.write_trace(a, tmp_path / "a.csv", timing=False)
    ev.write_trace(b, tmp_path / "b.csv", timing=False)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_read_trace_schema_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("iter,sir\n0,1\n")
    with pytest.raises(ValueError):
        ev.read_trace(p)
    p.write_text("iter,contrast,sir_db,grad_norm,wallclock_ms\n0,1,2\n")
    with pytest.raises(ValueError):
        ev.read_trace(p)
    p.write_text("")
    with pytest.raises(ValueError):
        ev.read_trace(p)


def polylines(path):
    root = ET.parse(path).getroot()
    return root.findall("{http://www.w3.org/2000/svg}polyline")


def test_svg_one_trace(tmp_path):
    ev.write_svg_plot([make_trace(20)], ["a"], tmp_path / "p.svg")
    assert len(polylines(tmp_path / "p.svg")) == 1


def test_svg_two_traces_extent(tmp_path):
    ev.write_svg_plot([make_trace(20), make_trace(50)], ["a", "b<c"], tmp_path / "p.svg")
    lines = polylines(tmp_path / "p.svg")
    assert len(lines) == 2
    xmax = [max(float(pt.split(",")[0]) for pt in ln.get("points").split()) for ln in lines]
    # the longer trace reaches the right edge of the plot, the shorter stops early
    assert xmax[1] > xmax[0]
    assert xmax[1] == pytest.approx(60 + 560)


def test_svg_empty_list_writes_nothing(tmp_path):
    with pytest.raises(ValueError):
        ev.write_svg_plot([], [], tmp_path / "p.svg")
    assert not (tmp_path / "p.svg").exists()
