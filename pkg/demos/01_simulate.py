"""
Synthetic GPR volumes
=====================

The simulator draws a smooth ground-bounce surface, stamps a reflection
wavelet at that depth in every A-scan and can add a snow layer above the
ground, interference streaks and buried mines.  The rounded surface is
returned as ground truth.
"""
import numpy as np

from gbtrack import SimConfig, simulate
from gbtrack.baseline import global_max_indices
from gbtrack.simulator import Interference, Mine, snow_over_fraction

# A clean volume: the brightest sample of every A-scan is the ground.
cfg = SimConfig(seed=1, surface_sigma=0.5, n_scans=300)
vol, truth, surf = simulate(cfg)
print("volume (depth, channels, scans):", vol.shape)
print("truth depth range:", truth.gb.min(), "to", truth.gb.max())
print("argmax == truth everywhere:", np.array_equal(global_max_indices(vol), truth.gb))

# Add a snow layer 15 samples above the ground over 30% of the lane, plus a
# mine and an interference streak.
cfg.noise_sigma = 0.05
cfg.snow = [snow_over_fraction(cfg.n_scans, 0.3, amplitude_ratio=1.5)]
cfg.mines = [Mine(ch=10, dt=150, amplitude=0.8)]
cfg.interference = [Interference((220, 223), 1.5)]
vol, truth, _ = simulate(cfg)

gm = global_max_indices(vol)
s0, s1 = cfg.snow[0].scan_range
print(f"snow covers scans {s0}..{s1 - 1}")
print("cells where the argmax sits on the snow, inside the patch:",
      np.mean(gm[:, s0:s1] == truth.gb[:, s0:s1] - 15).round(3))
print("... and outside it:", np.mean(gm[:, :s0] == truth.gb[:, :s0] - 15).round(3))

# A-scan at the mine: energy below the ground bounce
z = vol.raw[150, 10]
g = int(truth.gb[10, 150])
print("RMS 13..60 samples below GB at the mine:", np.sqrt(np.mean(z[g + 13:g + 61] ** 2)).round(4))
z = vol.raw[100, 10]
g = int(truth.gb[10, 100])
print("same window away from it:            ", np.sqrt(np.mean(z[g + 13:g + 61] ** 2)).round(4))
