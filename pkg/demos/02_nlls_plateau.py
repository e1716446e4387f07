"""Escaping the flat region of a sigmoid least-squares problem.

Labels are planted through ``g(w) = 1/(1 + e^w)``; near ``x = 0`` every
prediction sits at 1/2 and the gradient is small in most directions. We
compare Simba on 5% of the coordinates with Adam and with momentum SGD.
Saves ``nlls_plateau.png`` next to the script.
"""
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from simbaopt.bench import build_problem, run_single

problem = build_problem({"kind": "nlls",
                         "synthetic": {"m": 600, "n": 500, "sparsity": 0.2, "row_norm": 3.0, "seed": 0}})
x0 = problem.init_params(kind="zeros")
print("loss at the origin:", problem.loss(x0))

# %% Same budget and batches for every optimizer
optimizers = [
    {"name": "simba", "lr": 0.05, "coarse_fraction": 0.05, "rank": 20, "floor": 1e-12},
    {"name": "adam", "lr": 1e-3},
    {"name": "sgd", "lr": 1.0, "momentum": 0.9},
]
curves = {}
for init in ("zeros", "normal"):
    for opt in optimizers:
        rows = run_single(problem, opt, seed=0, iters=3000, init=init, log_every=50)
        curves[init, opt["name"]] = rows
        print(f"x0={init:6s} {opt['name']:6s} final loss {rows[-1].loss:.4g}  "
              f"({rows[-1].seconds:.1f} s)")

# %% Loss curves
fig, axes = plt.subplots(1, 2, figsize=(9, 3.5), sharey=True)
for ax, init in zip(axes, ("zeros", "normal")):
    for opt in optimizers:
        rows = curves[init, opt["name"]]
        ax.semilogy([r.iter for r in rows], [r.loss for r in rows], label=opt["name"])
    ax.set_title(f"x0 = {init}")
    ax.set_xlabel("iteration")
axes[0].set_ylabel("training loss")
axes[0].legend()
fig.tight_layout()
out = Path(__file__).with_name("nlls_plateau.png")
fig.savefig(out, dpi=120)
print("saved", out)
