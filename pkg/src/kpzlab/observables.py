"""Height field, Gartner transform, regularity moduli, drift-decomposition
checks, and the Duhamel functionals driven by the flux terms.

The height field follows the flux-counter convention: h_0 is twice the
rescaled net particle flux across the marked bond (N-1, 0) and increments
left-to-right by N^{-1/2} eta_x.  A boundary-bond jump therefore shifts every
h_x through h_0, so the pointwise drift checks are restricted to interior
bonds, where jumps are local.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .dynamics import TrajectoryRecord
from .ensembles import Constants, FluxSet
from .heatkernel import CirculantKernel
from .localfn import LocalFunction

__all__ = [
    "HeightField",
    "GartnerField",
    "RegularityThresholds",
    "RegularityReport",
    "height_profile",
    "gartner_profile",
    "spatial_gradient",
    "time_gradient",
    "regularity_moduli",
    "verify_duality",
    "DualityReport",
    "UpsilonAccumulator",
    "BGFunctional",
    "bg_functional",
]


@dataclass(frozen=True)
class HeightField:
    values: np.ndarray
    base_time: float


@dataclass(frozen=True)
class GartnerField:
    values: np.ndarray
    time: float
    R_N: float


def height_from_state(spins: np.ndarray, flux: int) -> np.ndarray:
    n = spins.shape[0]
    h = np.empty(n)
    h[0] = 2.0 * flux / math.sqrt(n)
    h[1:] = h[0] + np.cumsum(spins[1:]) / math.sqrt(n)
    return h


def height_profile(record: TrajectoryRecord, t: float) -> HeightField:
    i = _time_index(record, t)
    return HeightField(height_from_state(record.snapshots[i].astype(np.float64), int(record.flux[i])), t)


def gartner_profile(record: TrajectoryRecord, t: float, R_N: float) -> GartnerField:
    h = height_profile(record, t)
    return GartnerField(np.exp(-h.values + R_N * t), t, R_N)


def _time_index(record: TrajectoryRecord, t: float) -> int:
    i = int(np.searchsorted(record.times, t))
    if i >= len(record.times) or abs(record.times[i] - t) > 1e-12:
        raise ValueError("time is not a recorded checkpoint")
    return i


def spatial_gradient(field: np.ndarray, ell: int) -> np.ndarray:
    """grad^X_ell phi_x = phi_{x+ell} - phi_x with wrap-around."""
    return np.roll(field, -ell, axis=-1) - field


def time_gradient(series: np.ndarray, times: np.ndarray, s: float, horizon: float) -> np.ndarray:
    """grad^T_s psi_t = psi_{clamp(t+s)} - psi_t on a recorded time grid."""
    clamped = np.clip(times + s, 0.0, horizon)
    idx = np.searchsorted(times, clamped)
    idx = np.clip(idx, 0, len(times) - 1)
    return series[idx] - series


@dataclass(frozen=True)
class RegularityThresholds:
    """Surrogate constants for the stopping rules.

    The moduli constant C follows the regularity stopping rules; the size
    constant C_ap is calibrated so that the undriven N = 128, t <= 1 baseline
    exceeds it in well under 5 percent of runs (the stopping constants are
    arbitrary large constants in the source estimates).
    """

    eps_ap: float = 0.05
    eps_reg: float = 0.1
    C: float = 10.0
    C_ap: float = 60.0


@dataclass(frozen=True)
class RegularityReport:
    sup_Z: float
    sup_invZ: float
    space_modulus: float
    time_modulus: float
    ap_exceeded: bool
    space_exceeded: bool
    time_exceeded: bool
    thresholds: RegularityThresholds

    def to_json(self) -> str:
        return json.dumps(
            {
                "sup_Z": self.sup_Z,
                "sup_invZ": self.sup_invZ,
                "space_modulus": self.space_modulus,
                "time_modulus": self.time_modulus,
                "ap_exceeded": self.ap_exceeded,
                "space_exceeded": self.space_exceeded,
                "time_exceeded": self.time_exceeded,
                "C": self.thresholds.C,
                "eps_ap": self.thresholds.eps_ap,
                "eps_reg": self.thresholds.eps_reg,
            },
            indent=2,
        )


def regularity_moduli(
    record: TrajectoryRecord, R_N: float, thresholds: RegularityThresholds = RegularityThresholds()
) -> RegularityReport:
    """Size and Holder-type moduli of the Gartner field over the snapshot grid.

    space modulus: sup over 1 <= |l| <= 2 l_reg of
        N^{1/2} |l|^{-1/2} ||grad_l Z||_inf / (1 + ||Z||_inf^2),
    time modulus: sup over backward increments s in (0, 1/N] of
        (N^{-2} v s)^{-1/4} ||grad^T_{-s} Z||_inf / (1 + ||Z||_inf^2).
    """
    times = record.times
    if len(times) == 0:
        raise ValueError("empty snapshot grid")
    N = record.snapshots.shape[1]
    Z = np.stack(
        [
            np.exp(-height_from_state(record.snapshots[i].astype(np.float64), int(record.flux[i])) + R_N * t)
            for i, t in enumerate(times)
        ]
    )
    sup_Z = float(np.max(Z))
    sup_inv = float(np.max(1.0 / Z))
    denom = 1.0 + sup_Z**2
    l_reg = max(1, int(round(N ** (1.0 / 3.0 + thresholds.eps_reg))))
    space_mod = 0.0
    for ell in range(1, 2 * l_reg + 1):
        g = float(np.max(np.abs(np.roll(Z, -ell, axis=1) - Z)))
        space_mod = max(space_mod, math.sqrt(N) * g / math.sqrt(ell) / denom)
    time_mod = 0.0
    for i in range(len(times)):
        for j in range(i - 1, -1, -1):
            s = times[i] - times[j]
            if s > 1.0 / N:
                break  # times are sorted; earlier snapshots only get farther
            if s <= 0:
                continue
            g = float(np.max(np.abs(Z[j] - Z[i])))
            time_mod = max(time_mod, (max(N**-2, s)) ** -0.25 * g / denom)
    C = thresholds.C
    return RegularityReport(
        sup_Z=sup_Z,
        sup_invZ=sup_inv,
        space_modulus=space_mod,
        time_modulus=time_mod,
        ap_exceeded=(sup_Z + sup_inv) > thresholds.C_ap * N**thresholds.eps_ap,
        space_exceeded=space_mod > C * N ** (2 * thresholds.eps_ap),
        time_exceeded=time_mod > C * N ** (2 * thresholds.eps_ap),
        thresholds=thresholds,
    )


# -- pointwise drift checks at interior bonds ----------------------------------

@dataclass(frozen=True)
class DualityReport:
    lhs: float
    rhs: float
    z_x: float
    drift_split_residual: float
    mshe_residual: float
    expanded_residual: float
    expanded_scale: float


def verify_duality(
    spins: np.ndarray,
    flux: int,
    t: float,
    x: int,
    N: int,
    d: LocalFunction,
    fluxset: FluxSet,
    constants: Constants,
) -> DualityReport:
    """Drift identities for Z_x at an interior bond.

    ``drift_split_residual`` checks the exact decomposition of the generator
    drift into the free-model drift plus N^2 Phi^A Z_x (an algebraic identity;
    this is the quantity gated at 1e-9).  ``mshe_residual`` is the literal
    difference against (1/2) N^2 Delta Z + N^2 Phi^A Z + R_2-terms, which the
    evolution equation only matches modulo bounded corrections of gradient
    type; ``expanded_residual`` subtracts the named error terms
    (-N^{1/2} q_bar - s + g) Z and the transport part as well.  What remains
    corresponds to the bounded remainders acting through length-2 l_d
    gradients, which are O(N^{1/2}) Z pointwise (their smallness is a summed,
    not pointwise, statement), so ``expanded_scale`` is N^{1/2} Z_x.
    """
    ld = d.ell()
    if not (x - 3 * ld - 2 >= 0 and x + ld + 2 <= N - 1):
        raise ValueError("site too close to the boundary bond (N-1, 0)")
    u = 1.0 / math.sqrt(N)
    h = height_from_state(spins.astype(np.float64), flux)
    Z = np.exp(-h + constants.R_N * t)
    zx = Z[x]
    sx, sy = int(spins[x]), int(spins[(x + 1) % N])
    dval = d(spins, x)
    a = math.exp(2 * u) - 1.0
    b = math.exp(-2 * u) - 1.0
    sym, asym, drift = 0.5 * N * N, 0.5 * N**1.5, 0.5 * N
    if (sx, sy) == (1, -1):
        full_drift = (sym - asym - drift * dval) * a
        free_drift = (sym - asym) * a
    elif (sx, sy) == (-1, 1):
        full_drift = (sym + asym + drift * dval) * b
        free_drift = (sym + asym) * b
    else:
        full_drift = 0.0
        free_drift = 0.0
    lhs = (full_drift + constants.R_N) * zx

    t_minus = b - a
    t_plus = b + a
    phi_a = 0.125 / N * t_minus * dval * (1 - sx * sy) + 0.125 / N * t_plus * dval * (sy - sx)
    lap = Z[x + 1] - 2 * zx + Z[x - 1]
    r2 = math.sqrt(N) * constants.R_21 + constants.R_22 + constants.R_23
    rhs = 0.5 * N * N * lap + N * N * phi_a * zx + r2 * zx

    split_residual = abs((full_drift - free_drift) * zx - N * N * phi_a * zx)

    mshe_residual = abs(lhs - rhs)

    # expanded form: T_N Z + (-N^{1/2} q_bar - s + g) Z + R_N-structure,
    # excluding the bounded b_1/b_2 remainders
    grad_m1 = Z[x - 1] - zx
    t_n = 0.5 * N * N * lap - constants.dbar * N * grad_m1
    named = (
        -math.sqrt(N) * fluxset.q_bar(spins, x)
        - fluxset.s(spins, x)
        + fluxset.g(spins, x)
    ) * zx
    expanded_residual = abs(lhs - t_n - named)
    expanded_scale = math.sqrt(N) * zx
    return DualityReport(
        lhs=float(lhs),
        rhs=float(rhs),
        z_x=float(zx),
        drift_split_residual=float(split_residual),
        mshe_residual=float(mshe_residual),
        expanded_residual=float(expanded_residual),
        expanded_scale=float(expanded_scale),
    )


# -- Duhamel functionals ----------------------------------------------------------

@dataclass
class BGFunctional:
    times: np.ndarray
    values_bg: np.ndarray  # (n_times, N)
    values_hl: np.ndarray
    sup_bg: float
    sup_hl: float
    stopped_at: float | None


class UpsilonAccumulator:
    """Streaming Fourier-space Duhamel accumulation of the BG/HL functionals.

    Pushing states at substep times s_0 < s_1 < ... maintains
    A_n = e^{dt T} A_{n-1} + dt F_n (right-endpoint rule), so that
    Upsilon(t_n) = A_n approximates int_0^t e^{(t-s)T}[F_s] ds.
    The integrand pins Y = Z 1_{t <= t_stop}: once the size thresholds are
    exceeded the input field freezes to zero, matching the clipped field.
    """

    def __init__(
        self,
        kernel: CirculantKernel,
        fluxset: FluxSet,
        R_N: float,
        thresholds: RegularityThresholds = RegularityThresholds(),
        bg_scale: float | None = None,
    ):
        self.kernel = kernel
        self.fluxset = fluxset
        self.R_N = R_N
        self.thresholds = thresholds
        self.N = kernel.N
        self.bg_scale = math.sqrt(self.N) if bg_scale is None else bg_scale
        self.acc_bg = np.zeros(self.N, dtype=np.complex128)
        self.acc_hl = np.zeros(self.N, dtype=np.complex128)
        self.prev_t = None
        self.stopped_at = None
        self.sup_bg = 0.0
        self.sup_hl = 0.0

    def push(self, t: float, spins: np.ndarray, flux: int) -> tuple[np.ndarray, np.ndarray]:
        h = height_from_state(spins.astype(np.float64), flux)
        Z = np.exp(-h + self.R_N * t)
        C_ap = self.thresholds.C_ap
        if self.stopped_at is None:
            if np.max(Z) + np.max(1.0 / Z) > C_ap * self.N**self.thresholds.eps_ap:
                self.stopped_at = t
        Y = Z if self.stopped_at is None else np.zeros_like(Z)
        if self.prev_t is None:
            self.prev_t = t
            return np.zeros(self.N), np.zeros(self.N)
        dt = t - self.prev_t
        self.prev_t = t
        qbar = self.fluxset.q_bar.eval_all_sites(spins)
        gs = self.fluxset.g.eval_all_sites(spins) - self.fluxset.s.eval_all_sites(spins)
        f_bg = self.bg_scale * qbar * Y
        f_hl = gs * Y
        decay = np.exp(dt * self.kernel.eigenvalues)
        self.acc_bg = decay * self.acc_bg + dt * np.fft.fft(f_bg)
        self.acc_hl = decay * self.acc_hl + dt * np.fft.fft(f_hl)
        ups_bg = np.fft.ifft(self.acc_bg).real
        ups_hl = np.fft.ifft(self.acc_hl).real
        self.sup_bg = max(self.sup_bg, float(np.max(np.abs(ups_bg))))
        self.sup_hl = max(self.sup_hl, float(np.max(np.abs(ups_hl))))
        return ups_bg, ups_hl


class UpsilonBatchAccumulator:
    """Replica-batched version of :class:`UpsilonAccumulator`.

    States come as (replicas, N) arrays; the Fourier accumulation runs on the
    whole batch at once.  Per-replica stopping freezes that replica's input
    field, matching the scalar accumulator exactly.
    """

    def __init__(self, kernel, fluxset, R_N, replicas,
                 thresholds: RegularityThresholds = RegularityThresholds(),
                 bg_scale: float | None = None):
        self.kernel = kernel
        self.fluxset = fluxset
        self.R_N = R_N
        self.thresholds = thresholds
        self.N = kernel.N
        self.B = replicas
        self.bg_scale = math.sqrt(self.N) if bg_scale is None else bg_scale
        self.acc_bg = np.zeros((replicas, self.N), dtype=np.complex128)
        self.acc_hl = np.zeros((replicas, self.N), dtype=np.complex128)
        self.prev_t = None
        self.stopped = np.zeros(replicas, dtype=bool)
        self.sup_bg = np.zeros(replicas)
        self.sup_hl = np.zeros(replicas)

    def _eval_all(self, f, spins_batch):
        n = self.N
        bits = (spins_batch > 0).astype(np.int64)
        idx = np.zeros(spins_batch.shape, dtype=np.int64)
        for s in range(f.support_lo, f.support_hi + 1):
            idx = (idx << 1) | np.roll(bits, -s, axis=1)
        return f.table[idx]

    def push(self, t, spins_batch, flux_batch):
        n = self.N
        h0 = 2.0 * flux_batch / math.sqrt(n)
        h = h0[:, None] + np.concatenate(
            [np.zeros((self.B, 1)), np.cumsum(spins_batch[:, 1:], axis=1) / math.sqrt(n)], axis=1
        )
        Z = np.exp(-h + self.R_N * t)
        lim = self.thresholds.C_ap * n**self.thresholds.eps_ap
        self.stopped |= (np.max(Z, axis=1) + np.max(1.0 / Z, axis=1)) > lim
        Y = np.where(self.stopped[:, None], 0.0, Z)
        if self.prev_t is None:
            self.prev_t = t
            return
        dt = t - self.prev_t
        self.prev_t = t
        qbar = self._eval_all(self.fluxset.q_bar, spins_batch)
        gs = self._eval_all(self.fluxset.g, spins_batch) - self._eval_all(self.fluxset.s, spins_batch)
        decay = np.exp(dt * self.kernel.eigenvalues)[None, :]
        self.acc_bg = decay * self.acc_bg + dt * np.fft.fft(self.bg_scale * qbar * Y, axis=1)
        self.acc_hl = decay * self.acc_hl + dt * np.fft.fft(gs * Y, axis=1)
        self.sup_bg = np.maximum(self.sup_bg, np.max(np.abs(np.fft.ifft(self.acc_bg, axis=1).real), axis=1))
        self.sup_hl = np.maximum(self.sup_hl, np.max(np.abs(np.fft.ifft(self.acc_hl, axis=1).real), axis=1))


def bg_functional(
    record: TrajectoryRecord,
    kernel: CirculantKernel,
    fluxset: FluxSet,
    R_N: float,
    grid_times=None,
    thresholds: RegularityThresholds = RegularityThresholds(),
) -> BGFunctional:
    """Evaluate the BG/HL functionals over a stored trajectory's snapshots."""
    if kernel.N != record.snapshots.shape[1]:
        raise ValueError("kernel size does not match the record")
    acc = UpsilonAccumulator(kernel, fluxset, R_N, thresholds)
    grid_times = record.times if grid_times is None else np.asarray(grid_times)
    keep = np.isin(np.round(record.times, 12), np.round(grid_times, 12))
    out_bg, out_hl, out_t = [], [], []
    for i, t in enumerate(record.times):
        ubg, uhl = acc.push(float(t), record.snapshots[i], int(record.flux[i]))
        if keep[i]:
            out_t.append(float(t))
            out_bg.append(ubg)
            out_hl.append(uhl)
    return BGFunctional(
        times=np.array(out_t),
        values_bg=np.array(out_bg),
        values_hl=np.array(out_hl),
        sup_bg=acc.sup_bg,
        sup_hl=acc.sup_hl,
        stopped_at=acc.stopped_at,
    )
