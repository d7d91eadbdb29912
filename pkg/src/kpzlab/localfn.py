"""Local functions of spin configurations and their product-measure moments.

A local function is stored as a dense lookup table over the ``2**w``
configurations of a window of ``w`` consecutive sites.  Window indexing is
fixed once and for all: bit 1 means spin +1 and the most-significant bit is
the leftmost site of the window.  This is also the on-disk JSON convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LocalFunction",
    "SigmaPolynomial",
    "product_expectation_poly",
    "load_driving_json",
    "dump_driving_json",
    "constant_fn",
    "site_fn",
]

ENUMERATION_CAP = 24


class CapacityError(ValueError):
    """Window too large to enumerate."""


def _check_width(width: int) -> None:
    if width > ENUMERATION_CAP:
        raise CapacityError(f"window of {width} sites exceeds enumeration cap {ENUMERATION_CAP}")


def window_spins(index: int, width: int) -> np.ndarray:
    """Spins (+-1, leftmost first) of window configuration ``index``."""
    bits = (index >> np.arange(width - 1, -1, -1)) & 1
    return 2 * bits.astype(np.int8) - 1


@dataclass(frozen=True)
class LocalFunction:
    """Function of spins on the window ``support_lo .. support_hi`` (inclusive)."""

    support_lo: int
    support_hi: int
    table: np.ndarray

    def __post_init__(self):
        width = self.width
        _check_width(width)
        table = np.asarray(self.table, dtype=np.float64)
        if table.shape != (1 << width,):
            raise ValueError(f"table must have 2**{width} entries, got {table.shape}")
        object.__setattr__(self, "table", table)

    @property
    def width(self) -> int:
        return self.support_hi - self.support_lo + 1

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.table)))

    @property
    def radius(self) -> int:
        """Smallest r with support contained in [-r, r]."""
        return max(abs(self.support_lo), abs(self.support_hi))

    def ell(self) -> int:
        """Support length in the paper's sense: smallest positive integer r
        such that the function depends only on sites x with |x| <= r."""
        return max(1, self.radius)

    # -- evaluation ---------------------------------------------------------
    def window_index(self, spins: np.ndarray, site: int) -> int:
        """Window index of this function shifted to ``site`` in a ring config."""
        n = spins.shape[0]
        idx = 0
        for s in range(self.support_lo, self.support_hi + 1):
            idx = (idx << 1) | (1 if spins[(site + s) % n] > 0 else 0)
        return idx

    def __call__(self, spins: np.ndarray, site: int = 0) -> float:
        """Evaluate at ``tau_site eta`` for a ring configuration ``spins``."""
        return float(self.table[self.window_index(spins, site)])

    def eval_all_sites(self, spins: np.ndarray) -> np.ndarray:
        """Vectorized evaluation at every site of the ring."""
        n = spins.shape[0]
        idx = np.zeros(n, dtype=np.int64)
        bits = (spins > 0).astype(np.int64)
        for s in range(self.support_lo, self.support_hi + 1):
            idx = (idx << 1) | np.roll(bits, -s)
        return self.table[idx]

    # -- structure ----------------------------------------------------------
    def shift(self, k: int) -> "LocalFunction":
        """Return g with g[eta] = f[tau_k eta] (support moves by +k)."""
        return LocalFunction(self.support_lo + k, self.support_hi + k, self.table.copy())

    def embed(self, lo: int, hi: int) -> "LocalFunction":
        """Re-express on the larger window [lo, hi] containing the support."""
        if lo > self.support_lo or hi < self.support_hi:
            raise ValueError("embedding window must contain the support")
        width_new = hi - lo + 1
        _check_width(width_new)
        left = self.support_lo - lo
        right = hi - self.support_hi
        idx = np.arange(1 << width_new, dtype=np.int64)
        inner = (idx >> right) & ((1 << self.width) - 1)
        return LocalFunction(lo, hi, self.table[inner])

    def trimmed(self, tol: float = 0.0) -> "LocalFunction":
        """Drop boundary sites the table does not actually depend on."""
        lo, hi, table = self.support_lo, self.support_hi, self.table
        changed = True
        while changed and hi > lo:
            changed = False
            width = hi - lo + 1
            half = 1 << (width - 1)
            # leftmost site (MSB)
            if np.max(np.abs(table[:half] - table[half:])) <= tol:
                table = table[:half]
                lo += 1
                changed = True
                continue
            # rightmost site (LSB)
            ev = table.reshape(-1, 2)
            if np.max(np.abs(ev[:, 0] - ev[:, 1])) <= tol:
                table = ev[:, 0].copy()
                hi -= 1
                changed = True
        return LocalFunction(lo, hi, table)

    # -- algebra ------------------------------------------------------------
    def _binary(self, other, op) -> "LocalFunction":
        if not isinstance(other, LocalFunction):
            other = constant_fn(float(other), lo=self.support_lo, hi=self.support_lo)
        lo = min(self.support_lo, other.support_lo)
        hi = max(self.support_hi, other.support_hi)
        a = self.embed(lo, hi)
        b = other.embed(lo, hi)
        return LocalFunction(lo, hi, op(a.table, b.table))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __radd__(self, other):
        return self.__add__(other)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return (-1.0 * self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, LocalFunction):
            return self._binary(other, np.multiply)
        return LocalFunction(self.support_lo, self.support_hi, self.table * float(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def mean0(self) -> float:
        """Expectation under the symmetric product measure (sigma = 0)."""
        return float(np.mean(self.table))


def constant_fn(value: float, lo: int = 0, hi: int = 0) -> LocalFunction:
    return LocalFunction(lo, hi, np.full(1 << (hi - lo + 1), float(value)))


def site_fn(site: int) -> LocalFunction:
    """The spin at a single site: eta_site."""
    return LocalFunction(site, site, np.array([-1.0, 1.0]))


@dataclass(frozen=True)
class SigmaPolynomial:
    """E^sigma[f] as a polynomial in sigma: sum_k c_k sigma^k."""

    coefficients: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def __post_init__(self):
        object.__setattr__(self, "coefficients", np.asarray(self.coefficients, dtype=np.float64))

    def __call__(self, sigma: float) -> float:
        return float(np.polyval(self.coefficients[::-1], sigma))

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    def derivative_at_zero(self, order: int = 1) -> float:
        """d^order/dsigma^order at sigma = 0 (= order! * c_order)."""
        if order >= len(self.coefficients):
            return 0.0
        k = float(self.coefficients[order])
        for j in range(2, order + 1):
            k *= j
        return k


def product_expectation_poly(f: LocalFunction) -> SigmaPolynomial:
    """Exact sigma-polynomial of E^sigma[f] under the product Bernoulli measure.

    Recursive split on the leftmost window site: with p(+1) = (1+sigma)/2,
    E[f] = (1-sigma)/2 * E[f | left=-1] + (1+sigma)/2 * E[f | left=+1].
    """
    _check_width(f.width)

    def rec(table: np.ndarray) -> np.ndarray:
        m = table.shape[0]
        if m == 1:
            return np.array([table[0]])
        pm = rec(table[: m // 2])
        pp = rec(table[m // 2 :])
        out = np.zeros(max(len(pm), len(pp)) + 1)
        out[: len(pm)] += 0.5 * pm
        out[1 : len(pm) + 1] -= 0.5 * pm
        out[: len(pp)] += 0.5 * pp
        out[1 : len(pp) + 1] += 0.5 * pp
        return out

    return SigmaPolynomial(rec(f.table))


# -- JSON interchange -------------------------------------------------------

def load_driving_json(source) -> LocalFunction:
    """Load a driving function from the documented JSON layout.

    ``{"radius": r, "table": [v_0 .. v_{2^(2r+1)-1}]}`` with window index the
    binary encoding of (eta_{-r} .. eta_r), bit 1 = +1, MSB = leftmost site.
    """
    if isinstance(source, (str, bytes)):
        obj = json.loads(source)
    elif hasattr(source, "read"):
        obj = json.load(source)
    else:
        obj = source
    r = int(obj["radius"])
    table = np.asarray(obj["table"], dtype=np.float64)
    if table.shape != (1 << (2 * r + 1),):
        raise ValueError("table length does not match radius")
    return LocalFunction(-r, r, table)


def dump_driving_json(f: LocalFunction) -> str:
    r = f.radius
    return json.dumps({"radius": r, "table": f.embed(-r, r).table.tolist()})
