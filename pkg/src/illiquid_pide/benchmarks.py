"""Published put prices for the benchmark parameter set.

sigma = 0.12, r = 0, K = 100, T = 1, Variance Gamma jumps with theta = -0.33,
sigma_vg = 0.12, kappa = 0.16.  Spots are 100 exp(0.08 k), k = -6..4.
"""

from __future__ import annotations

import numpy as np

SPOTS = np.array([61.8783, 67.032, 72.6149, 78.6628, 85.2144, 92.3116, 100.0, 108.329, 117.351, 127.125, 137.713])

# columns: linear BS, FS, BS with jumps, FS with jumps
TABLE1 = {
    "bs": [38.1217, 32.9691, 27.3972, 21.4275, 15.2547, 9.42895, 4.78444, 1.88555, 0.550422, 0.114716, 0.016615],
    "fs": [38.1258, 32.9763, 27.4207, 21.5118, 15.4835, 9.85754, 5.32697, 2.34727, 0.814477, 0.216426, 0.043112],
    "bs_pide": [38.2297, 33.4319, 28.4887, 23.5224, 18.6979, 14.2078, 10.243, 6.95353, 4.41257, 2.60009, 1.41444],
    "fs_pide": [38.8234, 34.1889, 29.4425, 24.6911, 20.0701, 15.7321, 11.8282, 8.48304, 5.77178, 3.70615, 2.2351],
}

# (column kind, rho) -> prices
TABLE2 = {
    ("fs", 0.1): [38.1257, 32.9759, 27.4191, 21.5061, 15.4688, 9.83127, 5.29421, 2.31882, 0.797286, 0.209195, 0.040995],
    ("fs_pide", 0.1): [38.4958, 33.7763, 28.9293, 24.0698, 19.3477, 14.9344, 10.9999, 7.68096, 5.05246, 3.11214, 1.78547],
    ("fs", 0.2): [38.1258, 32.9763, 27.4207, 21.5118, 15.4835, 9.85754, 5.32697, 2.34727, 0.814477, 0.216426, 0.043112],
    ("fs_pide", 0.2): [38.8234, 34.1889, 29.4425, 24.6911, 20.0701, 15.7321, 11.8282, 8.48304, 5.77178, 3.70615, 2.2351],
    ("fs", 0.3): [38.1373, 33.019, 27.5623, 21.8893, 16.2645, 11.0916, 6.8043, 3.68338, 1.72932, 0.693804, 0.234949],
    ("fs_pide", 0.3): [39.2259, 34.6865, 30.049, 25.4118, 20.896, 16.6367, 12.7672, 9.4005, 6.61053, 4.41995, 2.79821],
}

RHOS = (0.1, 0.2, 0.3)
