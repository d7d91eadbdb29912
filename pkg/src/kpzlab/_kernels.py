"""Numba event kernels for the exclusion simulators.

Thinning against a constant per-bond rate cap keeps every proposal O(1) and
exact in law.  Randomness is a counter-based 64-bit mixer stream; the counter
travels in a one-element uint64 array so repeated kernel calls continue the
stream with a single, unambiguous numba specialization.  fastmath stays off:
bit-identical trajectories are part of the contract.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

_GOLDEN = uint64(0x9E3779B97F4A7C15)
_MIX1 = uint64(0xBF58476D1CE4E5B9)
_MIX2 = uint64(0x94D049BB133111EB)
_INV53 = 1.0 / 9007199254740992.0  # 2^-53


@njit(uint64(uint64, uint64), cache=True, nogil=True, inline="always")
def _u64(key, ctr):
    z = key + ctr * _GOLDEN
    z = (z ^ (z >> uint64(30))) * _MIX1
    z = (z ^ (z >> uint64(27))) * _MIX2
    return z ^ (z >> uint64(31))


@njit(cache=True, nogil=True, inline="always")
def _uniform(key, ctr):
    # in [0, 1)
    return float(_u64(key, ctr) >> uint64(11)) * _INV53


@njit(cache=True, nogil=True, inline="always")
def _uniform_pos(key, ctr):
    # in (0, 1]
    return (float(_u64(key, ctr) >> uint64(11)) + 1.0) * _INV53


@njit(cache=True, nogil=True, inline="always")
def _d_value(spins, n, x, d_table, d_lo, d_width):
    j = x + d_lo
    while j < 0:
        j += n
    while j >= n:
        j -= n
    idx = 0
    for _ in range(d_width):
        idx = (idx << 1) | (1 if spins[j] > 0 else 0)
        j += 1
        if j == n:
            j = 0
    return d_table[idx]


@njit(cache=True, nogil=True, inline="always")
def _bond_rate(spins, n, x, d_table, d_lo, d_width, sym, asym, drift):
    sx = spins[x]
    y = x + 1
    if y == n:
        y = 0
    sy = spins[y]
    if sx == sy:
        return 0.0
    dval = 0.0
    if drift != 0.0:
        dval = _d_value(spins, n, x, d_table, d_lo, d_width)
    if sx == 1:
        return sym - asym - drift * dval
    return sym + asym + drift * dval


@njit(cache=True, nogil=True)
def advance(
    spins,
    d_table,
    d_lo,
    d_width,
    sym,
    asym,
    drift,
    cap,
    t0,
    t1,
    key,
    rng_ctr,
    counters,
    obs_tables,
    obs_off,
    obs_lo,
    obs_w,
    obs_site,
    obs_sums,
    obs_comps,
):
    """Advance the ring from t0 to t1.

    ``rng_ctr`` is the one-element uint64 stream counter; ``counters`` holds
    (flux, accepted events) as int64.  Observable integrals accumulate into
    ``obs_sums`` with Kahan compensation in ``obs_comps``: exact
    piecewise-constant time integrals of each registered local function.
    """
    n = spins.shape[0]
    n_obs = obs_off.shape[0] - 1
    lam = n * cap
    ctr = rng_ctr[0]

    vals = np.zeros(n_obs)
    for o in range(n_obs):
        idx = 0
        for s in range(obs_w[o]):
            j = (obs_site[o] + obs_lo[o] + s) % n
            idx = (idx << 1) | (1 if spins[j] > 0 else 0)
        vals[o] = obs_tables[obs_off[o] + idx]

    t = t0
    t_last = t0
    while True:
        u1 = _uniform_pos(key, ctr)
        ctr += uint64(1)
        t_next = t - np.log(u1) / lam
        if t_next >= t1:
            break
        t = t_next
        u2 = _uniform(key, ctr)
        ctr += uint64(1)
        x = int(u2 * n)
        if x >= n:
            x = n - 1
        y = x + 1
        if y == n:
            y = 0
        sx = spins[x]
        sy = spins[y]
        if sx == sy:
            ctr += uint64(1)  # keep the stream aligned per proposal
            continue
        rate = _bond_rate(spins, n, x, d_table, d_lo, d_width, sym, asym, drift)
        u3 = _uniform(key, ctr)
        ctr += uint64(1)
        if u3 * cap >= rate:
            continue
        # accepted: flush observable integrals up to t, then mutate
        if n_obs > 0:
            dt = t - t_last
            for o in range(n_obs):
                term = vals[o] * dt - obs_comps[o]
                s_new = obs_sums[o] + term
                obs_comps[o] = (s_new - obs_sums[o]) - term
                obs_sums[o] = s_new
            t_last = t
        spins[x] = sy
        spins[y] = sx
        if x == n - 1:
            if sx == -1:
                counters[0] += 1  # particle crossed 0 -> n-1
            else:
                counters[0] -= 1
        counters[1] += 1
        if n_obs > 0:
            for o in range(n_obs):
                rel = (x - (obs_site[o] + obs_lo[o])) % n
                rel2 = (y - (obs_site[o] + obs_lo[o])) % n
                if rel < obs_w[o] or rel2 < obs_w[o]:
                    idx = 0
                    for s in range(obs_w[o]):
                        j = (obs_site[o] + obs_lo[o] + s) % n
                        idx = (idx << 1) | (1 if spins[j] > 0 else 0)
                    vals[o] = obs_tables[obs_off[o] + idx]
    if n_obs > 0:
        dt = t1 - t_last
        for o in range(n_obs):
            term = vals[o] * dt - obs_comps[o]
            s_new = obs_sums[o] + term
            obs_comps[o] = (s_new - obs_sums[o]) - term
            obs_sums[o] = s_new
    rng_ctr[0] = ctr


@njit(cache=True, nogil=True)
def advance_batch(
    spins_batch,
    d_table,
    d_lo,
    d_width,
    sym,
    asym,
    drift,
    cap,
    t0,
    t1,
    keys,
    rng_ctrs,
    fluxes,
):
    """Advance a whole batch of independent replicas from t0 to t1.

    Equivalent to calling ``advance`` replica by replica with no registered
    observables (same streams, same trajectories); batching removes the
    per-replica Python dispatch cost for large ensembles.
    """
    n = spins_batch.shape[1]
    lam = n * cap
    for r in range(spins_batch.shape[0]):
        spins = spins_batch[r]
        key = keys[r]
        ctr = rng_ctrs[r]
        t = t0
        while True:
            u1 = _uniform_pos(key, ctr)
            ctr += uint64(1)
            t_next = t - np.log(u1) / lam
            if t_next >= t1:
                break
            t = t_next
            u2 = _uniform(key, ctr)
            ctr += uint64(1)
            x = int(u2 * n)
            if x >= n:
                x = n - 1
            y = x + 1
            if y == n:
                y = 0
            sx = spins[x]
            sy = spins[y]
            if sx == sy:
                ctr += uint64(1)
                continue
            rate = _bond_rate(spins, n, x, d_table, d_lo, d_width, sym, asym, drift)
            u3 = _uniform(key, ctr)
            ctr += uint64(1)
            if u3 * cap >= rate:
                continue
            spins[x] = sy
            spins[y] = sx
            if x == n - 1:
                if sx == -1:
                    fluxes[r] += 1
                else:
                    fluxes[r] -= 1
        rng_ctrs[r] = ctr


@njit(cache=True, nogil=True)
def advance_batch_counted(
    spins_batch,
    d_table,
    d_lo,
    d_width,
    sym,
    asym,
    drift,
    cap,
    n_proposals,
    keys,
    fluxes,
):
    """Apply a prescribed number of thinning proposals per replica.

    Conditioned on the Poisson proposal count over the window, proposal
    times are irrelevant to the final state, so final-state ensembles can
    skip the exponential clocks entirely.  Exact in law when
    ``n_proposals[r] ~ Poisson(n cap (t1 - t0))``.
    """
    n = spins_batch.shape[1]
    inv_cap = 1.0 / cap
    for r in range(spins_batch.shape[0]):
        spins = spins_batch[r]
        key = keys[r]
        ctr = uint64(0)
        flux = fluxes[r]
        for _ in range(n_proposals[r]):
            z = key + ctr * _GOLDEN
            z = (z ^ (z >> uint64(30))) * _MIX1
            z = (z ^ (z >> uint64(27))) * _MIX2
            z ^= z >> uint64(31)
            ctr += uint64(1)
            x = int(float(z >> uint64(11)) * _INV53 * n)
            if x >= n:
                x = n - 1
            y = x + 1
            if y == n:
                y = 0
            sx = spins[x]
            sy = spins[y]
            if sx == sy:
                continue
            dval = 0.0
            if drift != 0.0:
                dval = _d_value(spins, n, x, d_table, d_lo, d_width)
            if sx == 1:
                rate = sym - asym - drift * dval
            else:
                rate = sym + asym + drift * dval
            z = key + ctr * _GOLDEN
            z = (z ^ (z >> uint64(30))) * _MIX1
            z = (z ^ (z >> uint64(27))) * _MIX2
            z ^= z >> uint64(31)
            ctr += uint64(1)
            if float(z >> uint64(11)) * _INV53 >= rate * inv_cap:
                continue
            spins[x] = sy
            spins[y] = sx
            if x == n - 1:
                if sx == -1:
                    flux += 1
                else:
                    flux -= 1
        fluxes[r] = flux


@njit(cache=True, nogil=True)
def advance_occupation(spins, sym, asym, t0, t1, key, rng_ctr, occ):
    """Free-process run accumulating exact holding times per bitmask."""
    n = spins.shape[0]
    cap = sym + asym
    lam = n * cap
    ctr = rng_ctr[0]
    mask = uint64(0)
    for i in range(n):
        if spins[i] > 0:
            mask |= uint64(1) << uint64(i)
    t = t0
    t_hold = t0
    while True:
        u1 = _uniform_pos(key, ctr)
        ctr += uint64(1)
        t_next = t - np.log(u1) / lam
        if t_next >= t1:
            break
        t = t_next
        u2 = _uniform(key, ctr)
        ctr += uint64(1)
        x = int(u2 * n)
        if x >= n:
            x = n - 1
        y = x + 1
        if y == n:
            y = 0
        sx = spins[x]
        sy = spins[y]
        if sx == sy:
            ctr += uint64(1)
            continue
        rate = sym - asym if sx == 1 else sym + asym
        u3 = _uniform(key, ctr)
        ctr += uint64(1)
        if u3 * cap >= rate:
            continue
        occ[mask] += t - t_hold
        t_hold = t
        spins[x] = sy
        spins[y] = sx
        mask ^= (uint64(1) << uint64(x)) | (uint64(1) << uint64(y))
    occ[mask] += t1 - t_hold
    rng_ctr[0] = ctr


@njit(cache=True, nogil=True, inline="always")
def _flag_site(lspins, gspins, offset, site, inner_lo, inner_hi, t, disc, state):
    n = gspins.shape[0]
    L = lspins.shape[0]
    gsite = (offset + site) % n
    new = 1 if gspins[gsite] != lspins[site] else 0
    if new != disc[site]:
        if new == 1:
            state[1] += 1.0  # birth
            state[3] += 1.0
            depth = site if site <= L - 1 - site else L - 1 - site
            depth += 1
            if depth > state[2]:
                state[2] = float(depth)
            if inner_lo <= site <= inner_hi and state[0] < 0:
                state[0] = t
        else:
            state[3] -= 1.0
        disc[site] = new


@njit(cache=True, nogil=True)
def advance_coupled(
    gspins,
    lspins,
    offset,
    inner_lo,
    inner_hi,
    d_table,
    d_lo,
    d_width,
    sym,
    asym,
    drift,
    cap,
    t0,
    t1,
    key,
    rng_ctr,
    disc,
    state,
):
    """Coupled global/local run on [t0, t1].

    ``state`` carries (first_hit_time, births, max_depth, disc_count, events)
    as float64; first_hit_time < 0 means the inner window is clean.  Interior
    bonds of the local window share the proposal and acceptance uniforms with
    the matching global bond (maximal coupling); the local wrap bond and the
    global bonds outside the window run on their own proposals.
    """
    n = gspins.shape[0]
    L = lspins.shape[0]
    lam = (n + 1) * cap
    ctr = rng_ctr[0]
    t = t0
    while True:
        u1 = _uniform_pos(key, ctr)
        ctr += uint64(1)
        t_next = t - np.log(u1) / lam
        if t_next >= t1:
            break
        t = t_next
        u2 = _uniform(key, ctr)
        ctr += uint64(1)
        j = int(u2 * (n + 1))
        if j >= n + 1:
            j = n
        u3 = _uniform(key, ctr)
        ctr += uint64(1)
        if j < n:
            # global bond j (maximal coupling on interior window bonds)
            rg = _bond_rate(gspins, n, j, d_table, d_lo, d_width, sym, asym, drift)
            if u3 * cap < rg:
                y = j + 1
                if y == n:
                    y = 0
                tmp = gspins[j]
                gspins[j] = gspins[y]
                gspins[y] = tmp
                state[4] += 1.0
            jl = (j - offset) % n
            if jl <= L - 2:
                rl = _bond_rate(lspins, L, jl, d_table, d_lo, d_width, sym, asym, drift)
                if u3 * cap < rl:
                    tmp = lspins[jl]
                    lspins[jl] = lspins[jl + 1]
                    lspins[jl + 1] = tmp
                _flag_site(lspins, gspins, offset, jl, inner_lo, inner_hi, t, disc, state)
                _flag_site(lspins, gspins, offset, jl + 1, inner_lo, inner_hi, t, disc, state)
            else:
                # a global-only swap can still touch window sites at the edges
                for gsite in (j, (j + 1) % n):
                    site = (gsite - offset) % n
                    if site <= L - 1:
                        _flag_site(lspins, gspins, offset, site, inner_lo, inner_hi, t, disc, state)
        else:
            # local wrap bond (L-1, 0), independent of all global clocks
            rl = _bond_rate(lspins, L, L - 1, d_table, d_lo, d_width, sym, asym, drift)
            if u3 * cap < rl:
                tmp = lspins[L - 1]
                lspins[L - 1] = lspins[0]
                lspins[0] = tmp
            _flag_site(lspins, gspins, offset, L - 1, inner_lo, inner_hi, t, disc, state)
            _flag_site(lspins, gspins, offset, 0, inner_lo, inner_hi, t, disc, state)
    rng_ctr[0] = ctr
