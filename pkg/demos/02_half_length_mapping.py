"""
The half-length filter manifold
===============================

A separating filter of length ``K/2`` has a ``K``-point spectrum that is fully
determined by its ``K/2``-point spectrum: the even bins coincide, and the odd
bins are a circular convolution of the half-length spectrum with a fixed
sequence ``upsilon``.  ``ivehalf.manifold`` builds this linear map, so an
algorithm can optimise ``L/2 + 1`` parameter columns instead of ``K/2 + 1``
independent bins and still always describe a half-length filter.
"""

import numpy as np

from ivehalf import manifold as mf

K = 64
m = mf.build_mapping(K)
print(f"K = {K}: {m.n_params} parameter columns drive {m.n_bins} bins")

# even columns of F are identity columns; odd columns form a circulant
print("even columns are identity:", np.array_equal(m.F[:, 0::2], np.eye(m.L)))

# %%
# Random half-length filters for three channels
rng = np.random.default_rng(1)
taps = np.zeros((3, K))
taps[:, : K // 2] = rng.standard_normal((3, K // 2))

V = mf.project_to_manifold(taps, m)   # conjugated K/2-point spectra, bins 0..L/2
W = mf.expand(V, m)                   # conjugated K-point spectra, bins 0..K/2
direct = np.fft.fft(taps, axis=1)[:, : K // 2 + 1].conj()
print(f"expand(project(h)) vs direct DFT: {np.max(np.abs(W - direct)):.1e}")

# %%
# Any parameter matrix with real edge columns expands to a real filter that
# vanishes in its second half
V = mf.enforce_real_edges(rng.standard_normal((2, m.n_params)) + 1j * rng.standard_normal((2, m.n_params)))
h, imag = mf.implied_filters(mf.expand(V, m), K, return_imag=True)
print(f"imaginary part {np.max(np.abs(imag)):.1e}, second-half taps {np.max(np.abs(h[:, K // 2:])):.1e}")

# %%
# Gradients computed per bin are pulled back to the parameters with the
# adjoint of ``expand``; check the adjoint identity Re<Omega, E(D)> = Re<E*(Omega), D>
omega = rng.standard_normal((2, m.n_bins)) + 1j * rng.standard_normal((2, m.n_bins))
delta = rng.standard_normal((2, m.n_params)) + 1j * rng.standard_normal((2, m.n_params))
lhs = np.real(np.vdot(omega, mf.expand(delta, m)))
rhs = np.real(np.vdot(mf.pullback_gradient(omega, m), delta))
print(f"adjoint identity: {lhs:.6f} vs {rhs:.6f}")
