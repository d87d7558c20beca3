"""Scalar plant: DARE solutions, optimal gains, J* and the oracle's running cost."""
import numpy as np

from lqgopt.experiment import named_plant
from lqgopt.plant import oracle_controller, run_closed_loop

I1 = np.eye(1)
plant = named_plant("scalar")
ss = plant.steady_state(I1, I1)
print(f"control DARE P = {ss.P[0, 0]:.6f}, gain K = {ss.K[0, 0]:.6f}")
print(f"filter DARE Sigma = {ss.Sigma[0, 0]:.6f}, Kalman gain L = {ss.L[0, 0]:.6f}")
print(f"optimal average cost J* = {ss.J_star:.6f}")

trace = run_closed_loop(plant, oracle_controller(plant, I1, I1), 200_000, 0, I1, I1)
for T in (1_000, 10_000, 100_000, 200_000):
    print(f"oracle mean cost over {T:>7d} steps: {np.mean(trace.cost[:T]):.5f}")
