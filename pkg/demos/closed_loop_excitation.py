"""Why closed-loop data stop exciting the ARX regressor.

A fixed linear controller of order n ties u_t to the last n inputs and
outputs.  Once the window H exceeds n + 1 that relation sits inside every
regressor, so the Gram matrix loses rank.  Input dither breaks the relation.
"""
import numpy as np

from lqgopt.arx import gram_excitation, regressor_matrix
from lqgopt.experiment import canonical_plant
from lqgopt.plant import oracle_controller, run_closed_loop

I1 = np.eye(1)
plant = canonical_plant()
H, T = 10, 40_000

for dither in (0.0, 0.3):
    ctrl = oracle_controller(plant, I1, I1)

    def policy(t, y, rng, ctrl=ctrl, dither=dither):
        return ctrl(t, y, rng) + dither * rng.standard_normal(1)

    tr = run_closed_loop(plant, policy, T, 1, I1, I1)
    Phi, _ = regressor_matrix(tr.y, tr.u, H)
    ex = gram_excitation(Phi)
    print(f"dither {dither:.1f}: lambda_min/t = {ex['lambda_min_over_t']:.3g}, "
          f"relative variation {ex['relative_variation']:.3g}, persistent {ex['persistent']}")
