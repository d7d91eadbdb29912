"""Event-exact simulation of the driven exclusion process.

The global process lives on the N-site torus with per-bond swap rates
N^2/2 -+ (N^(3/2)/2 + N^alpha d[tau_x eta]/2); the localized variants run the
same dynamics on a small periodic window with an independent rate scale.
All simulators use uniformization against a constant per-bond cap, so the
sampled law is exact and a (config, seed) pair fixes the trajectory bit for
bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from . import _kernels
from .ensembles import EnsembleSpec, SpinConfig
from .localfn import LocalFunction
from .rng import mix64_key, philox_generator

__all__ = [
    "SimConfig",
    "LocalizedSimConfig",
    "TrajectoryRecord",
    "DiscrepancyReport",
    "validate_rates",
    "simulate_torus",
    "simulate_localized",
    "coupled_simulate",
    "time_average",
    "occupation_times",
]


def validate_rates(N: int, d: LocalFunction, alpha: float = 1.0) -> bool:
    """True iff all four channel rates stay strictly positive."""
    return 0.5 * N * N - 0.5 * N**1.5 - 0.5 * N**alpha * d.sup_norm > 0.0


@dataclass(frozen=True)
class SimConfig:
    N: int
    d: LocalFunction
    horizon: float
    seed: int
    alpha: float = 1.0
    record_times: tuple = ()
    observables: tuple = ()  # ((LocalFunction, site), ...)
    initial: SpinConfig | None = None
    replica: int = 0

    def __post_init__(self):
        if self.N % 2 or self.N < 4:
            raise ValueError("N must be even and at least 4")
        if not validate_rates(self.N, self.d, self.alpha):
            raise ValueError("jump rates are not all positive")
        for t in self.record_times:
            if not 0.0 <= t <= self.horizon:
                raise ValueError("record_times must lie in [0, horizon]")
        if self.initial is not None:
            if self.initial.ring_size != self.N:
                raise ValueError("initial configuration ring size mismatch")
            if self.initial.plus_count != self.N // 2:
                raise ValueError("global process requires N/2 particles")


@dataclass(frozen=True)
class LocalizedSimConfig:
    half_width: int          # ring has 2*half_width + 1 sites
    N: float                 # rate scale
    d: LocalFunction
    horizon: float
    seed: int
    variant: str = "full"    # "full" | "free"
    initial: EnsembleSpec | None = None
    alpha: float = 1.0
    record_times: tuple = ()
    observables: tuple = ()
    replica: int = 0

    @property
    def ring_size(self) -> int:
        return 2 * self.half_width + 1

    def __post_init__(self):
        if self.variant not in ("full", "free"):
            raise ValueError("variant must be 'full' or 'free'")
        if self.variant == "full" and not validate_rates(int(self.N), self.d, self.alpha):
            raise ValueError("jump rates are not all positive")
        if self.initial is not None and self.initial.kind == "canonical":
            if self.initial.interval_length != self.ring_size:
                raise ValueError("canonical interval must match the ring")


@dataclass
class TrajectoryRecord:
    times: np.ndarray                 # recorded checkpoints (sorted, unique)
    snapshots: np.ndarray             # (n_times, n_sites) int8
    flux: np.ndarray                  # (n_times,) int64
    observable_integrals: np.ndarray  # (n_times, n_obs) exact int_0^t f ds
    observables: tuple
    event_count: int
    config: object

    def spin_config(self, i: int) -> SpinConfig:
        return SpinConfig.from_spins(self.snapshots[i])


@dataclass(frozen=True)
class DiscrepancyReport:
    epsilon: float
    first_discrepancy_in_L: float | None
    discrepancy_birth_count: int
    max_excursion: int
    horizon: float
    event_count: int


def _pack_observables(observables, d_width_hint=0):
    n_obs = len(observables)
    tables = []
    off = np.zeros(n_obs + 1, dtype=np.int64)
    lo = np.zeros(n_obs, dtype=np.int64)
    w = np.zeros(n_obs, dtype=np.int64)
    site = np.zeros(n_obs, dtype=np.int64)
    for i, (f, s) in enumerate(observables):
        tables.append(np.asarray(f.table, dtype=np.float64))
        off[i + 1] = off[i] + f.table.shape[0]
        lo[i] = f.support_lo
        w[i] = f.width
        site[i] = s
    concat = np.concatenate(tables) if tables else np.zeros(0)
    return concat, off, lo, w, site


def _run(spins, d, rates, horizon, record_times, observables, key):
    sym, asym, drift, cap = rates
    times = np.unique(np.concatenate([[0.0], np.asarray(record_times, dtype=np.float64), [horizon]]))
    tables, off, lo, w, site = _pack_observables(observables)
    n_obs = len(observables)
    sums = np.zeros(n_obs)
    comps = np.zeros(n_obs)
    snapshots = np.zeros((len(times), spins.shape[0]), dtype=np.int8)
    flux_out = np.zeros(len(times), dtype=np.int64)
    integrals = np.zeros((len(times), n_obs))
    rng_ctr = np.zeros(1, dtype=np.uint64)
    counters = np.zeros(2, dtype=np.int64)  # (flux, events)
    snapshots[0] = spins
    d_table = np.asarray(d.table, dtype=np.float64)
    for i in range(1, len(times)):
        _kernels.advance(
            spins, d_table, d.support_lo, d.width,
            sym, asym, drift, cap,
            times[i - 1], times[i], key, rng_ctr, counters,
            tables, off, lo, w, site, sums, comps,
        )
        snapshots[i] = spins
        flux_out[i] = counters[0]
        integrals[i] = sums
    return times, snapshots, flux_out, integrals, int(counters[1])


def simulate_torus(cfg: SimConfig) -> TrajectoryRecord:
    """Exact-law sample of the global driven exclusion process."""
    N = cfg.N
    init = cfg.initial if cfg.initial is not None else SpinConfig.balanced_alternating(N)
    spins = init.spins().copy()
    sym = 0.5 * N * N
    asym = 0.5 * N**1.5
    drift = 0.5 * N**cfg.alpha
    cap = sym + asym + drift * cfg.d.sup_norm
    key = mix64_key(cfg.seed, cfg.replica, "dynamics")
    times, snaps, flux, integrals, events = _run(
        spins, cfg.d, (sym, asym, drift, cap), cfg.horizon, cfg.record_times, cfg.observables, key
    )
    return TrajectoryRecord(times, snaps, flux, integrals, cfg.observables, events, cfg)


def _canonical_initial(cfg: LocalizedSimConfig) -> np.ndarray:
    n = cfg.ring_size
    ens = cfg.initial if cfg.initial is not None else EnsembleSpec.canonical(n, n // 2)
    if ens.kind != "canonical":
        raise ValueError("localized runs start from a canonical ensemble")
    k = ens.plus_count
    rng = philox_generator(cfg.seed, cfg.replica, "init")
    spins = np.full(n, -1, dtype=np.int8)
    spins[rng.permutation(n)[:k]] = 1
    return spins


def simulate_localized(cfg: LocalizedSimConfig) -> TrajectoryRecord:
    """Localized process on the (2 half_width + 1)-ring, full or free variant."""
    N = cfg.N
    spins = _canonical_initial(cfg)
    sym = 0.5 * N * N
    asym = 0.5 * N**1.5
    drift = 0.5 * N**cfg.alpha if cfg.variant == "full" else 0.0
    cap = sym + asym + 0.5 * N**cfg.alpha * cfg.d.sup_norm
    key = mix64_key(cfg.seed, cfg.replica, "dynamics")
    times, snaps, flux, integrals, events = _run(
        spins, cfg.d, (sym, asym, drift, cap), cfg.horizon, cfg.record_times, cfg.observables, key
    )
    return TrajectoryRecord(times, snaps, flux, integrals, cfg.observables, events, cfg)


def occupation_times(cfg: LocalizedSimConfig) -> np.ndarray:
    """Exact holding time per configuration bitmask under the free process."""
    n = cfg.ring_size
    if n > 16:
        raise ValueError("occupation tracking is for small rings")
    spins = _canonical_initial(cfg)
    N = cfg.N
    occ = np.zeros(1 << n)
    key = mix64_key(cfg.seed, cfg.replica, "dynamics")
    rng_ctr = np.zeros(1, dtype=np.uint64)
    _kernels.advance_occupation(spins, 0.5 * N * N, 0.5 * N**1.5, 0.0, cfg.horizon, key, rng_ctr, occ)
    return occ


def simulate_final_states(
    N: int, d: LocalFunction, horizon: float, seed: int, replicas: int,
    alpha: float = 1.0, first_replica: int = 0, method: str = "clock",
) -> tuple[np.ndarray, np.ndarray]:
    """Final (spins, flux) for a batch of replicas of the global process.

    method "clock" is stream-identical to ``simulate_torus`` with
    ``record_times=(horizon,)`` replica by replica; "counted" draws each
    replica's Poisson proposal count from its (seed, replica, "event-count")
    stream and skips the exponential clocks (same law, different stream,
    roughly twice as fast for final-state-only ensembles).
    """
    SimConfig(N=N, d=d, horizon=horizon, seed=seed, alpha=alpha)  # validation
    base = SpinConfig.balanced_alternating(N).spins()
    spins = np.tile(base, (replicas, 1))
    keys = np.array(
        [mix64_key(seed, first_replica + r, "dynamics") for r in range(replicas)],
        dtype=np.uint64,
    )
    fluxes = np.zeros(replicas, dtype=np.int64)
    sym = 0.5 * N * N
    asym = 0.5 * N**1.5
    drift = 0.5 * N**alpha
    cap = sym + asym + drift * d.sup_norm
    d_table = np.asarray(d.table, dtype=np.float64)
    if method == "clock":
        ctrs = np.zeros(replicas, dtype=np.uint64)
        _kernels.advance_batch(
            spins, d_table, d.support_lo, d.width,
            sym, asym, drift, cap, 0.0, horizon, keys, ctrs, fluxes,
        )
    elif method == "counted":
        lam = N * cap * horizon
        counts = np.array(
            [
                philox_generator(seed, first_replica + r, "event-count").poisson(lam)
                for r in range(replicas)
            ],
            dtype=np.int64,
        )
        _kernels.advance_batch_counted(
            spins, d_table, d.support_lo, d.width,
            sym, asym, drift, cap, counts, keys, fluxes,
        )
    else:
        raise ValueError("method must be 'clock' or 'counted'")
    return spins, fluxes


def stream_states_batch(N: int, d: LocalFunction, horizon: float, seed: int,
                        replicas: int, times, alpha: float = 1.0):
    """Yield (t, spins_batch, flux_batch) along a batch of trajectories."""
    SimConfig(N=N, d=d, horizon=horizon, seed=seed, alpha=alpha)  # validation
    base = SpinConfig.balanced_alternating(N).spins()
    spins = np.tile(base, (replicas, 1))
    keys = np.array([mix64_key(seed, r, "dynamics") for r in range(replicas)], dtype=np.uint64)
    ctrs = np.zeros(replicas, dtype=np.uint64)
    fluxes = np.zeros(replicas, dtype=np.int64)
    sym = 0.5 * N * N
    asym = 0.5 * N**1.5
    drift = 0.5 * N**alpha
    cap = sym + asym + drift * d.sup_norm
    d_table = np.asarray(d.table, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if times[0] != 0.0:
        raise ValueError("stream must start at t = 0")
    yield 0.0, spins, fluxes
    for i in range(1, len(times)):
        _kernels.advance_batch(
            spins, d_table, d.support_lo, d.width, sym, asym, drift, cap,
            times[i - 1], times[i], keys, ctrs, fluxes,
        )
        yield float(times[i]), spins, fluxes


def stream_states(cfg: SimConfig, times):
    """Yield (t, spins, flux) along the trajectory at the given sorted times.

    The spins array is a live view; callers must not mutate it.  Useful for
    streaming functionals that would not fit as stored snapshots.
    """
    N = cfg.N
    init = cfg.initial if cfg.initial is not None else SpinConfig.balanced_alternating(N)
    spins = init.spins().copy()
    sym = 0.5 * N * N
    asym = 0.5 * N**1.5
    drift = 0.5 * N**cfg.alpha
    cap = sym + asym + drift * cfg.d.sup_norm
    key = mix64_key(cfg.seed, cfg.replica, "dynamics")
    d = cfg.d
    d_table = np.asarray(d.table, dtype=np.float64)
    no_tables = np.zeros(0)
    no_off = np.zeros(1, dtype=np.int64)
    no_meta = np.zeros(0, dtype=np.int64)
    rng_ctr = np.zeros(1, dtype=np.uint64)
    counters = np.zeros(2, dtype=np.int64)
    times = np.asarray(times, dtype=np.float64)
    if times[0] != 0.0:
        raise ValueError("stream must start at t = 0")
    yield 0.0, spins, 0
    for i in range(1, len(times)):
        _kernels.advance(
            spins, d_table, d.support_lo, d.width, sym, asym, drift, cap,
            times[i - 1], times[i], key, rng_ctr, counters,
            no_tables, no_off, no_meta, no_meta, no_meta, no_tables, no_tables,
        )
        yield float(times[i]), spins, int(counters[0])


def coupled_simulate(cfg: SimConfig, ell: int, epsilon: float, tau: float) -> DiscrepancyReport:
    """Global process coupled to the localized process on the enlarged window.

    The window has half-width ell around site 0 enlarged by radius
    ceil(N^epsilon (2 ell + 1)); interior bonds share proposal and acceptance
    variables (maximal coupling), the window's wrap bond and all other global
    bonds are independent.  Reports whether and when the inner window picks
    up a discrepancy.
    """
    N = cfg.N
    inner = 2 * ell + 1
    radius = int(np.ceil(N**epsilon * inner))
    L = inner + 2 * radius
    if L >= N:
        raise ValueError("enlarged window must be smaller than the ring")
    init = cfg.initial if cfg.initial is not None else SpinConfig.balanced_alternating(N)
    gspins = init.spins().copy()
    offset = (-(L // 2)) % N  # window centered at site 0
    lspins = np.array([gspins[(offset + i) % N] for i in range(L)], dtype=np.int8)
    sym = 0.5 * N * N
    asym = 0.5 * N**1.5
    drift = 0.5 * N**cfg.alpha
    cap = sym + asym + drift * cfg.d.sup_norm
    key = mix64_key(cfg.seed, cfg.replica, "coupling")
    disc = np.zeros(L, dtype=np.int8)
    state = np.array([-1.0, 0.0, 0.0, 0.0, 0.0])
    inner_lo = radius
    inner_hi = radius + inner - 1
    d_table = np.asarray(cfg.d.table, dtype=np.float64)
    rng_ctr = np.zeros(1, dtype=np.uint64)
    _kernels.advance_coupled(
        gspins, lspins, offset, inner_lo, inner_hi,
        d_table, cfg.d.support_lo, cfg.d.width,
        sym, asym, drift, cap, 0.0, tau, key, rng_ctr, disc, state,
    )
    first = float(state[0]) if state[0] >= 0 else None
    return DiscrepancyReport(
        epsilon=epsilon,
        first_discrepancy_in_L=first,
        discrepancy_birth_count=int(state[1]),
        max_excursion=int(state[2]),
        horizon=tau,
        event_count=int(state[4]),
    )


def time_average(record: TrajectoryRecord, f: LocalFunction, site: int, window) -> float:
    """Exact tau^{-1} int f(tau_site eta_s) ds over a recorded window."""
    t0, t1 = float(window[0]), float(window[1])
    if t1 <= t0:
        raise ValueError("window must have positive length")
    idx = None
    for i, (g, s) in enumerate(record.observables):
        if s == site and g.support_lo == f.support_lo and g.table.shape == f.table.shape \
                and np.array_equal(g.table, f.table):
            idx = i
            break
    if idx is None:
        raise ValueError("observable was not registered for exact integration")
    times = record.times
    i0 = int(np.searchsorted(times, t0))
    i1 = int(np.searchsorted(times, t1))
    if i0 >= len(times) or abs(times[i0] - t0) > 1e-12 or i1 >= len(times) or abs(times[i1] - t1) > 1e-12:
        raise ValueError("window endpoints must be recorded checkpoints")
    return float(record.observable_integrals[i1, idx] - record.observable_integrals[i0, idx]) / (t1 - t0)
