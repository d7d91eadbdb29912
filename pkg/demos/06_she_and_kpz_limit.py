"""Particle heights against the stochastic heat equation reference.

Desk-scale surrogate for the scaling limit: the one-point variance of the
centered height field approaches the Cole-Hopf/SHE value as N grows.
Moderate replica counts here; the acceptance suite runs the full comparison.
"""

import math

import numpy as np

from kpzlab.dynamics import SimConfig, simulate_torus
from kpzlab.ensembles import compute_constants
from kpzlab.localfn import site_fn
from kpzlab.she import SheConfig, kpz_compare, martingale_diagnostic, solve_she_batch

d = site_fn(-1)
she = solve_she_batch(SheConfig(M=128, dt=2e-4, dbar=0.5, horizon=0.5, seed=3,
                                record_times=(0.25, 0.5)), 1500)
v_she = she.h[-1].var(axis=0, ddof=1).mean()
print(f"SHE reference (M=128, dbar=0.5): var h(0.5) = {v_she:.4f}")

diag = martingale_diagnostic(she.times, she.Z, 0.5)
print(f"martingale diagnostic: mean {diag['mean']:+.4f} (se {diag['se_mean']:.4f}), "
      f"var {diag['var']:.4f} vs bracket {diag['expected_var']:.4f}")

for N in (32, 64):
    consts = compute_constants(d, N)
    hs = []
    for rep in range(1500):
        cfg = SimConfig(N=N, d=d, horizon=0.5, seed=4, replica=rep, record_times=(0.5,))
        rec = simulate_torus(cfg)
        h = 2.0 * rec.flux[-1] / math.sqrt(N) + np.concatenate(
            [[0.0], np.cumsum(rec.snapshots[-1][1:]) / math.sqrt(N)]
        )
        hs.append(h - consts.R_N * 0.5)
    out = kpz_compare(np.array(hs), she.h[-1])
    print(f"N={N:3d}: var = {out['var_particle']:.4f}, relative gap = "
          f"{out['relative_var_gap']:.3f}, KS distance = {out['ks_distance']:.3f}")
