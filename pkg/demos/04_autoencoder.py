"""A small deep sigmoid autoencoder where Adam stalls.

The middle layers of a 64-32-16-8-16-32-64 sigmoid network receive tiny
gradients; a diagonal method scales them coordinate by coordinate, while
Simba whitens the dominant row directions of each weight block.
"""
import numpy as np

from simbaopt import MlpSpec, autoencoder_problem, synthetic_autoencoder_data
from simbaopt.bench import run_single

data = synthetic_autoencoder_data(n_samples=512, width=64, latent=4, seed=0)
prob = autoencoder_problem(MlpSpec((64, 32, 16, 8, 16, 32, 64)), data)

# %% Gradient norms per layer at initialization
g = prob.grad(prob.init_params(0))
for l in range(1, 7):
    print(f"layer {l}: |dW| = {np.linalg.norm(g[f'W{l}']):.2e}")

# %% Train both for 2000 iterations with batch 128
for opt in ({"name": "simba", "lr": 0.05, "coarse_fraction": 0.5, "rank": 20, "floor": 1e-8},
            {"name": "adam", "lr": 1e-3}):
    rows = run_single(prob, opt, seed=0, iters=2000, log_every=500)
    trace = ", ".join(f"{r.loss:.4f}" for r in rows)
    print(f"{opt['name']:6s} loss every 500 iterations: {trace}")
