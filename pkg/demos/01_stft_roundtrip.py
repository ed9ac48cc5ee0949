"""
STFT analysis and overlap-add resynthesis
=========================================

All algorithms in ``ivehalf`` work on STFT coefficients laid out as
``(bins, channels, frames)`` with only the ``K/2 + 1`` non-redundant bins kept.
This script shows the layout and checks that resynthesis is exact.
"""

import numpy as np

from ivehalf.stft import TimeSignal, is_cola, istft, make_window, stft

rng = np.random.default_rng(0)
x = TimeSignal(rng.standard_normal((2, 16000)), sample_rate=16000)

# A 512-point DFT with a quarter-length shift, as used throughout
X = stft(x, fft_len=512, hop=128)
print("spectrum shape (bins, channels, frames):", X.values.shape)

# The periodic Hann window satisfies the constant-overlap-add condition for
# its squared values at hop K/4, so analysis followed by weighted overlap-add
# gives back the input away from the signal edges.
print("Hann / hop 128 is COLA:", is_cola(make_window("hann", 512), 128))
y = istft(X)
err = np.max(np.abs(y.samples[:, 512:-512] - x.samples[:, 512:-512]))
print(f"interior reconstruction error: {err:.2e}")

# Bins 0 and K/2 of a real signal are real
print("max |Im| at DC and Nyquist:", np.max(np.abs(X.values[[0, -1]].imag)))
