"""Markov parameters of the canonical plant, then back through Ho-Kalman."""
import numpy as np

from lqgopt.arx import system_markov_params
from lqgopt.experiment import canonical_plant
from lqgopt.sysid import sysid

plant = canonical_plant()
H = 2 * plant.n + 3
mp = system_markov_params(plant, H)
est = sysid(mp.M, plant.m, plant.p, H, plant.n)
F_hat, G_hat = est.markov_blocks(H)
gap = max(max(np.abs(F_hat[k] - mp.F_blocks[k]).max(), np.abs(G_hat[k] - mp.G_blocks[k]).max())
          for k in range(H))
print("true eigenvalues     ", np.sort(np.linalg.eigvals(plant.A)))
print("recovered eigenvalues", np.sort(np.linalg.eigvals(est.A).real))
print(f"largest Markov block error: {gap:.2e}")
