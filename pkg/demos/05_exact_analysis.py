"""Exact finite-state analysis of the localized process.

Small rings admit full linear algebra: forward equations, Dirichlet forms,
H^-1 norms, resolvent bounds, and the exact variance of time averages that
the Kipnis-Varadhan machinery estimates.
"""

import numpy as np

from kpzlab.exact import (
    StateSpace,
    build_generator,
    forward_evolve,
    h_minus1_norm,
    kv_exact_oracle,
    local_function_vector,
    resolvent_checks,
    structure_checks,
)
from kpzlab.localfn import site_fn

space = StateSpace.hyperplane(7, 3)
N = 64.0
d = site_fn(-1)
print(f"state space: ring of 7 sites, 3 particles, {space.size} states")

checks = structure_checks(space, N, d)
print("\nstructural identities:")
for k, v in checks.items():
    print(f"  {k:20s} {v:.3e}")

gen_full = build_generator(space, N, d=d, variant="full")
p = np.ones(space.size)
t_step = N ** (-4.0 / 3.0) / 4
for i in range(4):
    p = forward_evolve(gen_full, p, t_step)
print(f"\ndensity after the KV time-scale: E|p|^8 = {np.mean(p**8):.6f} (stays near 1)")

gen_free = build_generator(space, N, variant="free")
rng = np.random.default_rng(0)
f = rng.standard_normal(space.size)
f -= f.mean()
print(f"\nH^-1 norm squared of a random centered f: {h_minus1_norm(f, gen_free):.6e}")
rep = resolvent_checks(N ** (4.0 / 3.0), f, gen_free)
print(f"resolvent ratios at lambda = N^(4/3): l2 {rep['ratio_l2']:.3f}, "
      f"dirichlet {rep['ratio_dirichlet']:.3f}")

fvec = local_function_vector(space, (0.5 * (site_fn(0) - site_fn(1))).trimmed())
t = N ** (-4.0 / 3.0)
oracle = kv_exact_oracle(fvec, gen_free, t)
print(f"\nexact E|int_0^t f|^2 at t = N^(-4/3): {oracle['value']:.3e}")
print(f"Kipnis-Varadhan bound ratio (<= 4):   {oracle['bound_ratio']:.3f}")
