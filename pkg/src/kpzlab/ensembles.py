"""Product and canonical ensembles, flux terms, and renormalization constants.

Everything in this module is exact (enumeration plus hypergeometric counting),
up to floating-point rounding.  Canonical expectations enumerate only the
support of the observable and weight each support configuration by the count
of completions of the remaining sites, which keeps interval lengths up to
10**6 feasible for small supports.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .localfn import (
    LocalFunction,
    constant_fn,
    product_expectation_poly,
    site_fn,
)

__all__ = [
    "SpinConfig",
    "EnsembleSpec",
    "FluxSet",
    "Constants",
    "compute_dbar",
    "check_flatness",
    "adjust_driving",
    "build_flux_terms",
    "compute_constants",
    "canonical_expectation",
    "canonical_block_expectation",
    "block_conditional_expectation",
    "multiscale_terms",
    "multiscale_scales",
]



# -- configurations ---------------------------------------------------------

@dataclass(frozen=True)
class SpinConfig:
    """Bit-packed +-1 configuration on a ring with particle-count bookkeeping."""

    ring_size: int
    words: np.ndarray
    plus_count: int

    @classmethod
    def from_spins(cls, spins) -> "SpinConfig":
        spins = np.asarray(spins)
        n = spins.shape[0]
        bits = (spins > 0).astype(np.uint8)
        words = np.packbits(bits, bitorder="little")
        padded = np.zeros(-(-n // 64) * 8, dtype=np.uint8)
        padded[: words.shape[0]] = words
        return cls(n, padded.view(np.uint64), int(bits.sum()))

    @classmethod
    def balanced_alternating(cls, n: int) -> "SpinConfig":
        if n % 2:
            raise ValueError("ring size must be even for the balanced profile")
        spins = np.where(np.arange(n) % 2 == 0, -1, 1).astype(np.int8)
        return cls.from_spins(spins)

    def spins(self) -> np.ndarray:
        bits = np.unpackbits(self.words.view(np.uint8), bitorder="little")[: self.ring_size]
        return (2 * bits.astype(np.int8) - 1)

    def density(self) -> float:
        return (2 * self.plus_count - self.ring_size) / self.ring_size

    def __post_init__(self):
        spins_sum = int(np.unpackbits(self.words.view(np.uint8), bitorder="little")[: self.ring_size].sum())
        if spins_sum != self.plus_count:
            raise ValueError("plus_count does not match packed spins")


@dataclass(frozen=True)
class EnsembleSpec:
    """Either product(sigma) or canonical(interval_length, plus_count)."""

    kind: str
    sigma: float | None = None
    interval_length: int | None = None
    plus_count: int | None = None

    @classmethod
    def product(cls, sigma: float) -> "EnsembleSpec":
        if not -1.0 <= sigma <= 1.0:
            raise ValueError("sigma must lie in [-1, 1]")
        return cls("product", sigma=float(sigma))

    @classmethod
    def canonical(cls, interval_length: int, plus_count: int) -> "EnsembleSpec":
        if not 0 <= plus_count <= interval_length:
            raise ValueError("plus_count out of range")
        return cls("canonical", interval_length=int(interval_length), plus_count=int(plus_count))

    def density(self) -> float:
        if self.kind == "product":
            return self.sigma
        return (2 * self.plus_count - self.interval_length) / self.interval_length


# -- driving-function derived quantities -------------------------------------

def _flux_of(d: LocalFunction) -> LocalFunction:
    """The microscopic flux d[eta](1 - eta_0 eta_1)."""
    pair = site_fn(0) * site_fn(1)
    return (d * (constant_fn(1.0, 0, 1) - pair)).trimmed()


def compute_dbar(d: LocalFunction) -> float:
    """(1/2) d/dsigma E^sigma{d (1 - eta0 eta1)} at sigma = 0."""
    poly = product_expectation_poly(_flux_of(d))
    return 0.5 * poly.derivative_at_zero(1)


def check_flatness(d: LocalFunction) -> float:
    """Second sigma-derivative of the flux expectation at sigma = 0."""
    poly = product_expectation_poly(_flux_of(d))
    return poly.derivative_at_zero(2)


def adjust_driving(d: LocalFunction) -> tuple[LocalFunction, float]:
    """Subtract the constant that zeroes the quadratic flux defect.

    Constants contribute -2c to the defect, so c = -defect/2.
    """
    c = -0.5 * check_flatness(d)
    return (d - c).trimmed(), c


@dataclass(frozen=True)
class FluxSet:
    """The six local functions entering the height-field evolution."""

    q: LocalFunction
    q_tilde: LocalFunction
    q_bar: LocalFunction
    s_tilde: LocalFunction
    s: LocalFunction
    g: LocalFunction
    dbar: float
    E0_qtilde: float
    E0_stilde: float


def build_flux_terms(d: LocalFunction) -> FluxSet:
    """Assemble q, shifted q, centered q, shift-cost terms and g for ``d``."""
    ld = d.ell()
    dbar = compute_dbar(d)
    q = (0.5 * _flux_of(d)).trimmed()
    q_tilde = q.shift(-2 * ld)
    e0_qtilde = q_tilde.mean0()
    q_bar = (q_tilde - e0_qtilde - dbar * site_fn(0)).trimmed()
    window_sum = sum((site_fn(-y) for y in range(1, 2 * ld)), site_fn(0))
    s_tilde = (-1.0 * (q_tilde * window_sum)).trimmed()
    e0_stilde = s_tilde.mean0()
    s = (s_tilde - e0_stilde).trimmed()
    g_raw = (0.5 * (d * (site_fn(1) - site_fn(0)))).trimmed()
    g = (g_raw - g_raw.mean0()).trimmed()
    return FluxSet(q, q_tilde, q_bar, s_tilde, s, g, dbar, e0_qtilde, e0_stilde)


@dataclass(frozen=True)
class Constants:
    """Renormalization constants for ring size N and driving function d."""

    N: int
    R_N: float
    R_21: float
    R_22: float
    R_23: float
    dbar: float
    flatness_defect: float


def compute_constants(d: LocalFunction, N: int) -> Constants:
    if N < 4 or N % 2:
        raise ValueError("N must be even and at least 4")
    dbar = compute_dbar(d)
    flux = _flux_of(d)
    r21 = -0.5 * flux.mean0()
    r22 = 0.5 * dbar
    ld = d.ell()
    shifted_flux = flux.shift(-2 * ld)
    grad_term = (d * (site_fn(1) - site_fn(0))).trimmed()
    r23 = -0.5 * shifted_flux.mean0() - 0.5 * grad_term.mean0()
    r_n = 0.5 * N - 1.0 / 24.0 + math.sqrt(N) * r21 + r22 + r23
    return Constants(N, r_n, r21, r22, r23, dbar, check_flatness(d))


# -- canonical ensembles ------------------------------------------------------

def _falling(a: int, b: int) -> float:
    out = 1.0
    for i in range(b):
        out *= a - i
    return out


def _completion_weight(total: int, k: int, m: int, j: int) -> float:
    """P(support config has j pluses) = C(total-m, k-j) / C(total, k).

    Written as (k falling j)((total-k) falling (m-j)) / (total falling m):
    three short products, so interval lengths up to 10**6 stay accurate.
    """
    if not 0 <= k - j <= total - m:
        return 0.0
    return _falling(k, j) * _falling(total - k, m - j) / _falling(total, m)


def canonical_expectation(f: LocalFunction, ensemble: EnsembleSpec) -> float:
    """Exact E^{sigma,I}[f] for a canonical ensemble the support fits inside."""
    if ensemble.kind != "canonical":
        raise ValueError("canonical ensemble expected")
    ell, k = ensemble.interval_length, ensemble.plus_count
    m = f.width
    if m > ell:
        raise ValueError("support larger than the interval")
    total = 0.0
    table = f.table
    for idx in range(1 << m):
        j = int(bin(idx).count("1"))
        w = _completion_weight(ell, k, m, j)
        if w:
            total += table[idx] * w
    return total


def block_conditional_expectation(f: LocalFunction, ell: int, k: int) -> float:
    """E^0[ f | plus-count of the block {-ell+1..0} equals k ].

    Support sites inside the block see the canonical (hypergeometric) weights;
    sites outside the block stay independent symmetric Bernoulli.
    """
    if not 0 <= k <= ell:
        raise ValueError("unreachable block density")
    lo, hi, width = f.support_lo, f.support_hi, f.width
    in_block = [s for s in range(lo, hi + 1) if -ell + 1 <= s <= 0]
    m = len(in_block)
    n_out = width - m
    total = 0.0
    table = f.table
    for idx in range(1 << width):
        j = 0
        for pos, s in enumerate(range(lo, hi + 1)):
            if -ell + 1 <= s <= 0 and (idx >> (width - 1 - pos)) & 1:
                j += 1
        w = _completion_weight(ell, k, m, j)
        if w:
            total += table[idx] * w
    return total / (1 << n_out)


def canonical_block_expectation(eta: SpinConfig, site: int, ell: int, f: LocalFunction) -> float:
    """E^{can,ell}[tau_site eta; f] with the density read off the block of
    length ``ell`` ending at ``site`` (inclusive)."""
    if f.support_lo < -ell + 1 or f.support_hi > 0:
        raise ValueError("support does not fit in the block {-ell+1..0}")
    if ell > eta.ring_size:
        raise ValueError("block exceeds the ring")
    spins = eta.spins()
    n = eta.ring_size
    k = sum(1 for y in range(ell) if spins[(site - y) % n] > 0)
    return block_conditional_expectation(f, ell, k)


# -- multiscale decomposition -------------------------------------------------

def multiscale_scales(N: int, eps_step: float, K_step: int) -> list[int]:
    """Block lengths round(N^{k eps}) for k = 1..K_step, ties rounded up."""
    scales = [max(1, int(math.floor(N ** (k * eps_step) + 0.5))) for k in range(1, K_step + 1)]
    for a, b in zip(scales, scales[1:]):
        if b <= a:
            raise ValueError("scales must be strictly increasing")
    return scales


def multiscale_terms(
    eta: SpinConfig, site: int, f: LocalFunction, eps_step: float, K_step: int
) -> list[float]:
    """Telescoping terms R~_k, k = 0..K_step-1, of the block-averaging scheme.

    R~_0 = f - E^{can,l_1};  R~_k = E^{can,l_k} - E^{can,l_{k+1}}.
    The sum plus E^{can,l_K} reproduces f[tau_site eta] exactly.
    """
    N = eta.ring_size
    scales = multiscale_scales(N, eps_step, K_step)
    if scales[-1] > N:
        raise ValueError("largest scale exceeds the ring")
    spins = eta.spins()

    def cond(ell: int) -> float:
        k = sum(1 for y in range(ell) if spins[(site - y) % N] > 0)
        return block_conditional_expectation(f, ell, k)

    values = [cond(ell) for ell in scales]
    terms = [f(spins, site) - values[0]]
    for k in range(1, K_step):
        terms.append(values[k - 1] - values[k])
    return terms
