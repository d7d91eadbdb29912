"""Canonical ensembles, block conditioning, and the multiscale decomposition.

Conditioning a product measure on the particle count of an interval gives the
canonical ensemble (uniform on the fixed-count hyperplane).  The centered
flux, averaged against block canonical ensembles of growing length, decays
like length^{-3/2} near density zero; the multiscale telescoping splits the
flux into these block increments exactly.
"""

import numpy as np

from kpzlab.ensembles import (
    EnsembleSpec,
    SpinConfig,
    block_conditional_expectation,
    build_flux_terms,
    canonical_expectation,
    multiscale_scales,
    multiscale_terms,
)
from kpzlab.localfn import site_fn

pair = (site_fn(0) * site_fn(1)).trimmed()
print("canonical pair correlation vs the exchangeability formula:")
for ell, k in ((4, 2), (8, 3), (10, 5)):
    s = (2 * k - ell) / ell
    v = canonical_expectation(pair, EnsembleSpec.canonical(ell, k))
    print(f"  ell={ell:2d} k={k}:  E[eta_x eta_y] = {v:+.6f}   formula {s*s - (1-s*s)/(ell-1):+.6f}")

fs = build_flux_terms(site_fn(-1))
print("\nblock-canonical decay of the centered flux (near density zero):")
for ell in (8, 16, 32, 64):
    best = max(
        abs(block_conditional_expectation(fs.q_bar, ell, k))
        for k in range(ell + 1)
        if abs((2 * k - ell) / ell) <= ell**-0.5 + 1e-12
    )
    print(f"  ell={ell:3d}:  max |E_can[q_bar]| = {best:.6f}   * ell^1.5 = {best * ell**1.5:.3f}")

print("\nmultiscale telescoping on a random ring configuration:")
rng = np.random.default_rng(1)
spins = np.where(rng.random(64) < 0.5, -1, 1).astype(np.int8)
eta = SpinConfig.from_spins(spins)
scales = multiscale_scales(64, 0.25, 4)
terms = multiscale_terms(eta, 10, fs.q_bar, 0.25, 4)
k_tail = sum(1 for y in range(scales[-1]) if spins[(10 - y) % 64] > 0)
tail = block_conditional_expectation(fs.q_bar, scales[-1], k_tail)
print(f"  scales {scales}")
print(f"  q_bar at site 10      = {fs.q_bar(spins, 10):+.8f}")
print(f"  sum of terms + tail   = {sum(terms) + tail:+.8f}")
