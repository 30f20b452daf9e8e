"""
Turning a window of gaps into three images
==========================================

A short walk through the encoder: scale a window, map it to polar
coordinates, then build the summation field, the difference field and the
recurrence plot. Writes PGM previews next to this script under ``out/``.
"""

from pathlib import Path

import numpy as np

from gapcast.imaging import encode, export_triple
from gapcast.series import WindowBlock, minmax_scale, to_polar

# twelve hourly gaps, one morning peak
raw = np.array([2, 3, 5, 9, 14, 12, 8, 6, 5, 4, 4, 3], dtype=float)

x = minmax_scale(raw)
print("scaled:", np.round(x, 3))

polar = to_polar(x)
print("angles (rad):", np.round(polar.angles, 3))
print("radii:", np.round(polar.radii, 3))

triple = encode(WindowBlock.from_raw(raw))

# the summation field is symmetric and its diagonal is 2x^2 - 1
np.set_printoptions(precision=2, suppress=True, linewidth=120)
print("GASF diagonal:", np.diag(triple.gasf))
print("2x^2 - 1     :", 2 * x ** 2 - 1)

# the difference field is antisymmetric
print("GADF + GADF.T is zero:", np.allclose(triple.gadf + triple.gadf.T, 0))

# recurrence plot: 1 where two scaled values differ by at least 0.5
print(triple.rec.astype(int))

out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)
for path in export_triple(triple, out, "demo", 0, ("pgm",)):
    print("wrote", path)
