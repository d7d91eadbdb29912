"""Experiment orchestration: validated JSON specs in, CSV/JSON results out.

Each experiment kind has a published JSON schema; results carry a metadata
header (spec hash, master seed, package and numpy versions).  Replicas are
partitioned statically by index and every replica derives its own random
stream, so outputs are byte-identical regardless of the thread count.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import jsonschema

from . import __version__
from .dynamics import (
    LocalizedSimConfig,
    SimConfig,
    coupled_simulate,
    simulate_localized,
    simulate_torus,
    validate_rates,
)
from .ensembles import (
    EnsembleSpec,
    build_flux_terms,
    compute_constants,
    compute_dbar,
    block_conditional_expectation,
)
from .exact import (
    StateSpace,
    build_generator,
    kv_exact_oracle,
    local_function_vector,
    structure_checks,
)
from .heatkernel import build_kernel, mc_crosscheck, verify_bounds
from .localfn import LocalFunction, constant_fn, load_driving_json, site_fn
from .observables import (
    RegularityThresholds,
    UpsilonAccumulator,
    regularity_moduli,
    verify_duality,
)
from .rng import philox_generator
from .she import SheConfig, kpz_compare, martingale_diagnostic, solve_she_batch
from .trajio import write_trajectory

__all__ = ["ExperimentSpec", "run", "EXPERIMENT_KINDS", "SCHEMAS"]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

_DRIVING_SCHEMA = {
    "type": "object",
    "properties": {
        "radius": {"type": "integer", "minimum": 0, "maximum": 5},
        "table": {"type": "array", "items": {"type": "number"}},
    },
    "required": ["radius", "table"],
    "additionalProperties": False,
}

_BASE = {
    "replicas": {"type": "integer", "minimum": 1},
    "master_seed": {"type": "integer", "minimum": 0},
}


def _schema(props: dict, required: list) -> dict:
    full = dict(_BASE)
    full.update(props)
    return {
        "type": "object",
        "properties": full,
        "required": required,
        "additionalProperties": False,
    }


SCHEMAS = {
    "constants": _schema({"driving": _DRIVING_SCHEMA, "N": {"type": "integer", "minimum": 4}}, ["driving", "N"]),
    "simulate": _schema(
        {
            "driving": _DRIVING_SCHEMA,
            "N": {"type": "integer", "minimum": 4},
            "T": {"type": "number", "exclusiveMinimum": 0},
            "alpha": {"type": "number"},
            "record_times": {"type": "array", "items": {"type": "number"}},
        },
        ["driving", "N", "T"],
    ),
    "duality": _schema(
        {"driving": _DRIVING_SCHEMA, "N_list": {"type": "array", "items": {"type": "integer"}}},
        ["driving", "N_list"],
    ),
    "kv": _schema(
        {
            "driving": _DRIVING_SCHEMA,
            "N": {"type": "number"},
            "half_width": {"type": "integer", "minimum": 2},
            "tau": {"type": "number"},
            "n_pairs": {"type": "integer", "minimum": 1},
            "plus_count": {"type": "integer"},
            "oracle": {"type": "object"},
        },
        ["driving", "N", "half_width", "n_pairs"],
    ),
    "kv2": _schema(
        {
            "driving": _DRIVING_SCHEMA,
            "N": {"type": "number"},
            "half_width": {"type": "integer", "minimum": 3},
            "tau": {"type": "number"},
            "plus_count": {"type": "integer"},
        },
        ["driving", "N", "half_width"],
    ),
    "azuma": _schema(
        {
            "n": {"type": "integer", "minimum": 2},
            "plus_count": {"type": "integer"},
            "K_grid": {"type": "array", "items": {"type": "number"}},
        },
        ["n"],
    ),
    "exact-suite": _schema(
        {
            "driving": _DRIVING_SCHEMA,
            "sizes": {"type": "array", "items": {"type": "integer"}},
            "N": {"type": "number"},
        },
        ["driving"],
    ),
    "heatkernel-verify": _schema(
        {
            "N_list": {"type": "array", "items": {"type": "integer"}},
            "dbar": {"type": "number"},
            "mc_t": {"type": "number"},
            "mc_replicas": {"type": "integer"},
        },
        ["N_list", "dbar"],
    ),
    "bg-decay": _schema(
        {
            "driving": _DRIVING_SCHEMA,
            "N_list": {"type": "array", "items": {"type": "integer"}},
            "horizon": {"type": "number"},
            "dt_rec_factor": {"type": "number"},
            "grid_dump": {"type": "integer"},
        },
        ["driving", "N_list"],
    ),
    "coupling": _schema(
        {
            "driving": _DRIVING_SCHEMA,
            "N": {"type": "integer"},
            "ell": {"type": "integer", "minimum": 1},
            "epsilon": {"type": "number"},
            "tau": {"type": "number"},
        },
        ["driving", "N", "ell", "epsilon", "tau"],
    ),
    "kpz-compare": _schema(
        {
            "driving": _DRIVING_SCHEMA,
            "N_list": {"type": "array", "items": {"type": "integer"}},
            "M": {"type": "integer"},
            "dt": {"type": "number"},
            "horizon": {"type": "number"},
            "she_replicas": {"type": "integer"},
            "times": {"type": "array", "items": {"type": "number"}},
        },
        ["driving", "N_list", "M"],
    ),
    "regularity": _schema(
        {
            "driving": _DRIVING_SCHEMA,
            "N": {"type": "integer"},
            "horizon": {"type": "number"},
            "dt_rec": {"type": "number"},
            "C": {"type": "number"},
            "C_ap": {"type": "number"},
        },
        ["driving", "N", "horizon"],
    ),
}

EXPERIMENT_KINDS = tuple(sorted(SCHEMAS))


@dataclass(frozen=True)
class ExperimentSpec:
    kind: str
    parameters: dict
    replicas: int = 1
    master_seed: int = 0
    threads: int = 1

    def canonical_json(self) -> str:
        return json.dumps(
            {"kind": self.kind, "parameters": self.parameters, "replicas": self.replicas,
             "master_seed": self.master_seed},
            sort_keys=True,
        )

    def spec_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]

    @classmethod
    def from_json(cls, obj: dict, threads: int = 1, seed_override=None) -> "ExperimentSpec":
        kind = obj.get("kind")
        if kind not in SCHEMAS:
            raise jsonschema.ValidationError(f"unknown experiment kind {kind!r}")
        params = dict(obj.get("parameters", {}))
        replicas = int(params.pop("replicas", obj.get("replicas", 1)))
        seed = int(params.pop("master_seed", obj.get("master_seed", 0)))
        if seed_override is not None:
            seed = int(seed_override)
        merged = dict(params)
        merged["replicas"] = replicas
        merged["master_seed"] = seed
        jsonschema.validate(merged, SCHEMAS[kind])
        return cls(kind, params, replicas, seed, threads)


def _driving(params: dict) -> LocalFunction:
    return load_driving_json(params["driving"]).trimmed()


def _map_replicas(fn, replicas: int, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in range(replicas)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(replicas)))


def _meta_lines(spec: ExperimentSpec) -> list[str]:
    return [
        f"# kind: {spec.kind}",
        f"# spec_hash: {spec.spec_hash()}",
        f"# master_seed: {spec.master_seed}",
        f"# kpzlab_version: {__version__}",
        f"# numpy_version: {np.__version__}",
    ]


def _write_csv(path, spec: ExperimentSpec, columns: list[str], rows) -> None:
    buf = io.StringIO()
    for line in _meta_lines(spec):
        buf.write(line + "\n")
    buf.write(",".join(columns) + "\n")
    for row in rows:
        buf.write(",".join(_fmt(v) for v in row) + "\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def _write_json(path, spec: ExperimentSpec, payload: dict) -> None:
    payload = dict(payload)
    payload["_meta"] = {
        "kind": spec.kind,
        "spec_hash": spec.spec_hash(),
        "master_seed": spec.master_seed,
        "kpzlab_version": __version__,
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=float)
        fh.write("\n")


# -- experiment bodies ---------------------------------------------------------

def _exp_constants(spec, out):
    d = _driving(spec.parameters)
    c = compute_constants(d, int(spec.parameters["N"]))
    fs = build_flux_terms(d)
    _write_json(
        os.path.join(out, "constants.json"),
        spec,
        {
            "N": c.N,
            "R_N": c.R_N,
            "R_21": c.R_21,
            "R_22": c.R_22,
            "R_23": c.R_23,
            "dbar": c.dbar,
            "flatness_defect": c.flatness_defect,
            "E0_qtilde": fs.E0_qtilde,
            "E0_stilde": fs.E0_stilde,
        },
    )
    return EXIT_OK


def _exp_simulate(spec, out):
    p = spec.parameters
    d = _driving(p)
    n = int(p["N"])
    if not validate_rates(n, d, float(p.get("alpha", 1.0))):
        raise jsonschema.ValidationError("jump rates are not all positive")
    cfg = SimConfig(
        N=n,
        d=d,
        horizon=float(p["T"]),
        seed=spec.master_seed,
        alpha=float(p.get("alpha", 1.0)),
        record_times=tuple(p.get("record_times", ())),
    )
    rec = simulate_torus(cfg)
    write_trajectory(os.path.join(out, "trajectory.bin"), rec, spec.master_seed)
    rows = [
        (float(t), int(rec.flux[i]), 2.0 * rec.flux[i] / math.sqrt(n))
        for i, t in enumerate(rec.times)
    ]
    _write_csv(os.path.join(out, "simulate.csv"), spec, ["time", "flux", "height0"], rows)
    return EXIT_OK


def _exp_duality(spec, out):
    import itertools

    p = spec.parameters
    d = _driving(p)
    fs = build_flux_terms(d)
    ld = d.ell()
    results = []
    for n in p["N_list"]:
        n = int(n)
        c = compute_constants(d, n)
        x = n // 2
        wsites = list(range(x - 3 * ld - 1, x + ld + 2))
        worst = {"split": 0.0, "mshe": 0.0, "expanded": 0.0}
        for bits in itertools.product((-1, 1), repeat=len(wsites)):
            spins = np.array([1 if i % 2 else -1 for i in range(n)], dtype=np.int8)
            for s, v in zip(wsites, bits):
                spins[s] = v
            rep = verify_duality(spins, 0, 0.25, x, n, d, fs, c)
            worst["split"] = max(worst["split"], rep.drift_split_residual / rep.z_x)
            worst["mshe"] = max(worst["mshe"], rep.mshe_residual / (math.sqrt(n) * rep.z_x))
            worst["expanded"] = max(worst["expanded"], rep.expanded_residual / rep.expanded_scale)
        results.append({"N": n, **worst})
    _write_json(os.path.join(out, "duality.json"), spec, {"results": results})
    return EXIT_OK


def _pair_family(n_pairs: int):
    """Disjoint-support canonically centered pair differences on sites 0..2n-1."""
    fams = []
    for i in range(n_pairs):
        f = 0.5 * (site_fn(2 * i) - site_fn(2 * i + 1))
        fams.append(f.trimmed())
    avg = fams[0] * (1.0 / n_pairs)
    for f in fams[1:]:
        avg = avg + f * (1.0 / n_pairs)
    return fams, avg.trimmed()


def _exp_kv(spec, out):
    p = spec.parameters
    d = _driving(p)
    N = float(p["N"])
    hw = int(p["half_width"])
    ring = 2 * hw + 1
    tau = float(p.get("tau", N ** (-4.0 / 3.0)))
    n_pairs = int(p["n_pairs"])
    if 2 * n_pairs > ring:
        raise jsonschema.ValidationError("pairs do not fit in the ring")
    k = int(p.get("plus_count", ring // 2))
    _, avg = _pair_family(n_pairs)

    def one(i):
        cfg = LocalizedSimConfig(
            half_width=hw, N=N, d=d, horizon=tau, seed=spec.master_seed, variant="full",
            initial=EnsembleSpec.canonical(ring, k), record_times=(tau,),
            observables=((avg, 0),), replica=i,
        )
        rec = simulate_localized(cfg)
        return float(rec.observable_integrals[-1, 0]) / tau

    vals = np.array(_map_replicas(one, spec.replicas, spec.threads))
    lhs = float(np.mean(vals**2))
    se = float(np.std(vals**2, ddof=1) / math.sqrt(len(vals)))
    rhs = N**-2 / tau / n_pairs * 4.0
    payload = {
        "lhs": lhs,
        "lhs_se": se,
        "paper_rhs": rhs,
        "ratio": lhs / rhs,
        "tau": tau,
        "ring": ring,
        "n_pairs": n_pairs,
        # density-stability preconditions: both must hold for the bound regime
        "tau_within_kv_scale": bool(tau <= N ** (-4.0 / 3.0) * (1 + 1e-9)),
        "ring_within_sqrt_scale": bool(ring <= math.sqrt(N) * (1 + 1e-9)),
    }
    if "oracle" in p:
        payload["oracle"] = _kv_oracle_crosscheck(p["oracle"], spec)
    _write_json(os.path.join(out, "kv.json"), spec, payload)
    _write_csv(
        os.path.join(out, "kv.csv"), spec, ["replica", "time_average"],
        [(i, float(v)) for i, v in enumerate(vals)],
    )
    return EXIT_OK


def _kv_oracle_crosscheck(oparams: dict, spec) -> dict:
    hw = int(oparams.get("half_width", 3))
    N = float(oparams.get("N", 64))
    ring = 2 * hw + 1
    k = int(oparams.get("plus_count", ring // 2))
    t = float(oparams.get("t", N ** (-4.0 / 3.0)))
    replicas = int(oparams.get("replicas", 10000))
    n_pairs = int(oparams.get("n_pairs", 3))
    _, avg = _pair_family(n_pairs)
    space = StateSpace.hyperplane(ring, k)
    gen_free = build_generator(space, N, variant="free")
    fvec = local_function_vector(space, avg)
    oracle = kv_exact_oracle(fvec, gen_free, t)

    def one(i):
        cfg = LocalizedSimConfig(
            half_width=hw, N=N, d=constant_fn(0.0), horizon=t, seed=spec.master_seed,
            variant="free", initial=EnsembleSpec.canonical(ring, k),
            record_times=(t,), observables=((avg, 0),), replica=i,
        )
        rec = simulate_localized(cfg)
        return float(rec.observable_integrals[-1, 0])

    ints = np.array(_map_replicas(one, replicas, spec.threads))
    mc = float(np.mean(ints**2))
    mc_se = float(np.std(ints**2, ddof=1) / math.sqrt(len(ints)))
    return {
        "mc": mc,
        "mc_se": mc_se,
        "exact": oracle["value"],
        "z_score": (mc - oracle["value"]) / mc_se if mc_se > 0 else 0.0,
        "t": t,
        "ring": ring,
    }


def _exp_kv2(spec, out):
    p = spec.parameters
    d = _driving(p)
    N = float(p["N"])
    hw = int(p["half_width"])
    ring = 2 * hw + 1
    tau = float(p.get("tau", N ** (-4.0 / 3.0)))
    k = int(p.get("plus_count", ring // 2))
    f1 = (0.5 * (site_fn(0) - site_fn(1))).trimmed()
    f2 = (site_fn(3) * site_fn(5)).trimmed()
    prod = (f1 * f2).trimmed()

    def one(i):
        cfg = LocalizedSimConfig(
            half_width=hw, N=N, d=d, horizon=tau, seed=spec.master_seed, variant="full",
            initial=EnsembleSpec.canonical(ring, k), record_times=(tau,),
            observables=((prod, 0),), replica=i,
        )
        rec = simulate_localized(cfg)
        return float(rec.observable_integrals[-1, 0]) / tau

    vals = np.array(_map_replicas(one, spec.replicas, spec.threads))
    lhs = float(np.mean(vals**2))
    rhs = N**-2 / tau * 4.0  # |I_1| = 2
    _write_json(
        os.path.join(out, "kv2.json"), spec,
        {"lhs": lhs, "lhs_se": float(np.std(vals**2, ddof=1) / math.sqrt(len(vals))),
         "paper_rhs": rhs, "ratio": lhs / rhs, "tau": tau, "ring": ring,
         "tau_within_kv_scale": bool(tau <= N ** (-4.0 / 3.0) * (1 + 1e-9)),
         "ring_within_sqrt_scale": bool(ring <= math.sqrt(N) * (1 + 1e-9))},
    )
    return EXIT_OK


def _exp_azuma(spec, out):
    p = spec.parameters
    n = int(p["n"])
    L = 2 * n + 1
    k = int(p.get("plus_count", L // 2))
    K_grid = [float(x) for x in p.get("K_grid", (1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0))]
    replicas = spec.replicas
    rng = philox_generator(spec.master_seed, 0, "azuma")
    batch = 20000
    counts = np.zeros(len(K_grid), dtype=np.int64)
    done = 0
    while done < replicas:
        b = min(batch, replicas - done)
        order = np.argsort(rng.random((b, L)), axis=1)
        occ = np.zeros((b, L), dtype=np.int8)
        np.put_along_axis(occ, order[:, :k], 1, axis=1)
        spins = 2 * occ - 1
        diffs = 0.5 * (spins[:, 0 : 2 * n : 2] - spins[:, 1 : 2 * n : 2])
        av = np.abs(diffs.mean(axis=1))
        for j, K in enumerate(K_grid):
            counts[j] += int(np.sum(av >= K / math.sqrt(n) - 1e-15))
        done += b
    p_emp = counts / replicas
    chat = min(
        (-math.log(pe) / K**2) for pe, K in zip(p_emp, K_grid) if pe > 0
    )
    rows = [(K, float(pe), math.exp(-chat * K**2)) for K, pe in zip(K_grid, p_emp)]
    _write_csv(os.path.join(out, "azuma.csv"), spec, ["K", "p_emp", "bound"], rows)
    _write_json(
        os.path.join(out, "azuma.json"), spec,
        {"c_hat": chat, "n": n, "ring": L, "replicas": replicas,
         "bounded": all(pe <= math.exp(-chat * K**2) + 1e-12 for pe, K in zip(p_emp, K_grid))},
    )
    return EXIT_OK


def _build_generator_from_bullets(space: StateSpace, N: float, d: LocalFunction) -> np.ndarray:
    """Independent construction of the generator from the per-state rate table."""
    n = space.n_sites
    m = space.size
    out = np.zeros((m, m))
    spins_all = space.all_spins()
    for i in range(m):
        spins = spins_all[i]
        for x in range(n):
            y = (x + 1) % n
            sx, sy = int(spins[x]), int(spins[y])
            if sx == sy:
                continue
            dval = d(spins, x)
            if (sx, sy) == (1, -1):
                rate = 0.5 * N * N - 0.5 * N**1.5 - 0.5 * N * dval
            else:
                rate = 0.5 * N * N + 0.5 * N**1.5 + 0.5 * N * dval
            j = space.state_index(int(space.masks[i]) ^ ((1 << x) | (1 << y)))
            out[i, j] += rate
            out[i, i] -= rate
    return out


def _build_generator_from_operator_sum(space: StateSpace, N: float, d: LocalFunction) -> np.ndarray:
    """eq-style construction: (1/2)N^2 sum L_x plus the weighted asymmetric sum."""
    n = space.n_sites
    m = space.size
    out = np.zeros((m, m))
    spins_all = space.all_spins()
    eye = np.eye(m)
    for x in range(n):
        y = (x + 1) % n
        perm = np.zeros((m, m))
        weight = np.zeros(m)
        for i in range(m):
            spins = spins_all[i]
            sx, sy = int(spins[x]), int(spins[y])
            if sx == sy:
                perm[i, i] = 1.0
            else:
                perm[i, space.state_index(int(space.masks[i]) ^ ((1 << x) | (1 << y)))] = 1.0
            ind = 1.0 if (sx, sy) == (-1, 1) else (-1.0 if (sx, sy) == (1, -1) else 0.0)
            weight[i] = ind * (1.0 + d(spins, x) / math.sqrt(N))
        lx = perm - eye
        out += 0.5 * N * N * lx + 0.5 * N**1.5 * (weight[:, None] * lx)
    return out


def _exp_exact_suite(spec, out):
    p = spec.parameters
    d = _driving(p)
    N = float(p.get("N", 64))
    sizes = [int(s) for s in p.get("sizes", (5, 7, 9))]
    results = {}
    ok = True
    for L in sizes:
        space = StateSpace.hyperplane(L, L // 2)
        checks = structure_checks(space, N, d)
        a = _build_generator_from_bullets(space, N, d)
        b = _build_generator_from_operator_sum(space, N, d)
        scale = float(np.max(np.abs(a)))
        checks["two_construction_gap"] = float(np.max(np.abs(a - b))) / scale
        results[str(L)] = checks
        ok = ok and checks["invariance"] < 1e-12 * N * N
        ok = ok and checks["antisymmetry"] < 1e-12 * N**1.5
        ok = ok and checks["two_construction_gap"] < 1e-12
        ok = ok and checks["martingale"] < 1e-12
        ok = ok and checks["entropy_slack_min"] > -1e-12
    fs = build_flux_terms(d)
    decay_rows = []
    for ell in (8, 16, 32, 64):
        best = 0.0
        for k in range(ell + 1):
            sig = (2 * k - ell) / ell
            if abs(sig) <= ell**-0.5 + 1e-12:
                best = max(best, abs(block_conditional_expectation(fs.q_bar, ell, k)))
        decay_rows.append((ell, best))
    _write_csv(os.path.join(out, "canonical_decay.csv"), spec, ["ell", "max_abs_can_exp"], decay_rows)
    xs = np.log([r[0] for r in decay_rows])
    ys = np.log([max(r[1], 1e-300) for r in decay_rows])
    slope = float(np.polyfit(xs, ys, 1)[0])
    _write_json(
        os.path.join(out, "exact_suite.json"), spec,
        {"results": results, "decay_slope": slope, "all_passed": bool(ok)},
    )
    return EXIT_OK if ok else EXIT_NUMERIC


def _exp_heatkernel(spec, out):
    p = spec.parameters
    dbar = float(p["dbar"])
    rows = []
    reports = {}
    for n in p["N_list"]:
        n = int(n)
        kern = build_kernel(n, dbar)
        tgrid = np.geomspace(n**-2.0, 1.0, 12)
        rep = verify_bounds(kern, tgrid, [1, 2, 4, 8])
        reports[str(n)] = rep
        for t in tgrid:
            from .heatkernel import kernel_row

            row = kernel_row(kern, float(t))
            rows.append((n, float(t), n * t**0.5 * abs(row[0]), float(np.sum(np.abs(row)))))
    mc = mc_crosscheck(
        build_kernel(int(p["N_list"][0]), dbar),
        float(p.get("mc_t", 0.05)),
        int(p.get("mc_replicas", 100000)),
        master_seed=spec.master_seed,
    )
    _write_csv(os.path.join(out, "heatkernel_grid.csv"), spec, ["N", "dt", "on_diag_ratio", "row_l1"], rows)
    _write_json(os.path.join(out, "heatkernel.json"), spec, {"bounds": reports, "mc": mc})
    return EXIT_OK


def _exp_bg_decay(spec, out):
    p = spec.parameters
    d = _driving(p)
    horizon = float(p.get("horizon", 1.0))
    factor = float(p.get("dt_rec_factor", 10.0))
    thresholds = RegularityThresholds(C=float(p.get("C", 10.0)), C_ap=float(p.get("C_ap", 60.0)))
    summary = []
    grid_dump = int(p.get("grid_dump", 0))
    grid_rows = []
    for n in p["N_list"]:
        n = int(n)
        fs = build_flux_terms(d)
        consts = compute_constants(d, n)
        kern = build_kernel(n, consts.dbar)
        dt_rec = factor / (n * n)
        n_steps = int(math.ceil(horizon / dt_rec))
        times = np.linspace(0.0, horizon, n_steps + 1)

        def one(i, n=n, fs=fs, consts=consts, kern=kern, times=times):
            from .dynamics import stream_states

            cfg = SimConfig(N=n, d=d, horizon=horizon, seed=spec.master_seed, replica=i)
            acc = UpsilonAccumulator(kern, fs, consts.R_N, thresholds)
            rows = []
            for j, (t, spins, flux) in enumerate(stream_states(cfg, times)):
                ubg, uhl = acc.push(t, spins, flux)
                if i < grid_dump and j > 0 and j % max(1, len(times) // 16) == 0:
                    for x in range(0, n, max(1, n // 16)):
                        rows.append((i, float(t), x, float(ubg[x]), float(uhl[x])))
            return acc.sup_bg, acc.sup_hl, rows

        outs = _map_replicas(one, spec.replicas, spec.threads)
        sups_bg = np.array([o[0] for o in outs])
        sups_hl = np.array([o[1] for o in outs])
        for o in outs:
            grid_rows.extend(o[2])
        summary.append(
            (
                n,
                spec.replicas,
                float(sups_bg.mean()),
                float(sups_bg.std(ddof=1) / math.sqrt(len(sups_bg))),
                float(sups_hl.mean()),
                float(sups_hl.std(ddof=1) / math.sqrt(len(sups_hl))),
            )
        )
    _write_csv(
        os.path.join(out, "bg_decay.csv"), spec,
        ["N", "replicas", "mean_sup_upsilon_bg", "se_bg", "mean_sup_upsilon_hl", "se_hl"],
        summary,
    )
    if grid_rows:
        _write_csv(
            os.path.join(out, "bg_grid.csv"), spec,
            ["replica", "t", "x", "upsilon_bg", "upsilon_hl"], grid_rows,
        )
    xs = np.log([row[0] for row in summary])
    ys = np.log([row[2] for row in summary])
    slope = float(np.polyfit(xs, ys, 1)[0]) if len(summary) > 1 else 0.0
    decreasing = all(a[2] > b[2] for a, b in zip(summary, summary[1:]))
    _write_json(
        os.path.join(out, "bg_decay.json"), spec,
        {"fitted_exponent": slope, "strictly_decreasing": decreasing,
         "summary": [list(r) for r in summary]},
    )
    return EXIT_OK


def _exp_coupling(spec, out):
    p = spec.parameters
    d = _driving(p)
    n = int(p["N"])
    ell = int(p["ell"])
    eps = float(p["epsilon"])
    tau = float(p["tau"])

    def one(i):
        cfg = SimConfig(N=n, d=d, horizon=max(tau, 1e-9), seed=spec.master_seed, replica=i)
        return coupled_simulate(cfg, ell, eps, tau)

    reports = _map_replicas(one, spec.replicas, spec.threads)
    hits = sum(1 for r in reports if r.first_discrepancy_in_L is not None)
    p_hat = hits / spec.replicas
    rows = [
        (
            i,
            r.first_discrepancy_in_L if r.first_discrepancy_in_L is not None else -1.0,
            r.discrepancy_birth_count,
            r.max_excursion,
        )
        for i, r in enumerate(reports)
    ]
    _write_csv(
        os.path.join(out, "coupling.csv"), spec,
        ["replica", "first_discrepancy_in_L", "births", "max_excursion"], rows,
    )
    se = math.sqrt(max(p_hat * (1 - p_hat), 1.0 / spec.replicas) / spec.replicas)
    _write_json(
        os.path.join(out, "coupling.json"), spec,
        {"p_hat": p_hat, "hits": hits, "replicas": spec.replicas, "se": se,
         "ell": ell, "epsilon": eps, "tau": tau},
    )
    return EXIT_OK


def _particle_heights(spec, d, n, horizon, times, replicas, threads):
    consts = compute_constants(d, n)

    def one(i):
        cfg = SimConfig(
            N=n, d=d, horizon=horizon, seed=spec.master_seed, replica=i,
            record_times=tuple(times),
        )
        rec = simulate_torus(cfg)
        out = []
        for t in times:
            j = int(np.searchsorted(rec.times, t))
            h = 2.0 * rec.flux[j] / math.sqrt(n) + np.concatenate(
                [[0.0], np.cumsum(rec.snapshots[j][1:]) / math.sqrt(n)]
            )
            out.append(h - consts.R_N * t)
        return np.array(out)

    hs = _map_replicas(one, replicas, threads)
    return np.array(hs), consts  # (replicas, n_times, N)


def _exp_kpz_compare(spec, out):
    p = spec.parameters
    d = _driving(p)
    horizon = float(p.get("horizon", 1.0))
    times = [float(t) for t in p.get("times", (0.25, 0.5, 1.0))]
    m = int(p["M"])
    dt = float(p.get("dt", 1e-4))
    she_reps = int(p.get("she_replicas", spec.replicas))
    dbar = compute_dbar(d)
    she_cfg = SheConfig(M=m, dt=dt, dbar=dbar, horizon=horizon, seed=spec.master_seed,
                        record_times=tuple(times))
    she = solve_she_batch(she_cfg, she_reps)
    she_h = she.h
    diag = martingale_diagnostic(she.times, she.Z, dbar)
    rows = []
    gaps = {}
    prev_gap = None
    monotone = True
    for n in p["N_list"]:
        n = int(n)
        hs, consts = _particle_heights(spec, d, n, horizon, times, spec.replicas, spec.threads)
        per_time = {}
        for ti, t in enumerate(times):
            sj = int(np.searchsorted(np.round(she.times, 12), round(t, 12)))
            comp = kpz_compare(hs[:, ti, :], she_h[sj])
            per_time[str(t)] = comp
            for x in range(0, n, max(1, n // 16)):
                rows.append(
                    (t, x / n, float(hs[:, ti, x].mean()), float(hs[:, ti, x].var(ddof=1)),
                     n, "particle")
                )
        gaps[str(n)] = per_time
        g = per_time[str(times[-1])]["relative_var_gap"]
        if prev_gap is not None and g > prev_gap + 1e-12:
            monotone = False
        prev_gap = g
    lags = (0.0, 0.0625, 0.125, 0.25)
    she_rows = []
    for ti, t in enumerate(times):
        sj = int(np.searchsorted(np.round(she.times, 12), round(t, 12)))
        for x in range(0, m, max(1, m // 16)):
            rows.append(
                (t, x / m, float(she_h[sj][:, x].mean()), float(she_h[sj][:, x].var(ddof=1)),
                 m, "she")
            )
        centered = she_h[sj] - she_h[sj].mean(axis=0, keepdims=True)
        covs = [float(np.mean(centered * np.roll(centered, -int(round(l * m)), axis=1)))
                for l in lags]
        for x in range(0, m, max(1, m // 16)):
            she_rows.append(
                (t, x / m, float(she_h[sj][:, x].mean()), float(she_h[sj][:, x].var(ddof=1)),
                 *covs)
            )
    _write_csv(
        os.path.join(out, "kpz_compare.csv"), spec,
        ["time", "x", "mean_h", "var_h", "grid", "ensemble"], rows,
    )
    _write_csv(
        os.path.join(out, "she_stats.csv"), spec,
        ["time", "x", "mean_h", "var_h"] + [f"cov_lag_{i}" for i in range(len(lags))],
        she_rows,
    )
    _write_json(
        os.path.join(out, "kpz_compare.json"), spec,
        {"gaps": gaps, "martingale": diag, "dbar": dbar, "gap_non_increasing": monotone},
    )
    return EXIT_OK


def _exp_regularity(spec, out):
    p = spec.parameters
    d = _driving(p)
    n = int(p["N"])
    horizon = float(p["horizon"])
    dt_rec = float(p.get("dt_rec", 0.25 / n))
    thresholds = RegularityThresholds(C=float(p.get("C", 10.0)), C_ap=float(p.get("C_ap", 60.0)))
    consts = compute_constants(d, n)
    times = tuple(np.arange(0.0, horizon + 1e-12, dt_rec))

    def one(i):
        cfg = SimConfig(N=n, d=d, horizon=horizon, seed=spec.master_seed, replica=i,
                        record_times=times)
        rec = simulate_torus(cfg)
        return regularity_moduli(rec, consts.R_N, thresholds)

    reports = _map_replicas(one, spec.replicas, spec.threads)
    rows = [
        (i, r.sup_Z, r.sup_invZ, r.space_modulus, r.time_modulus,
         int(r.ap_exceeded), int(r.space_exceeded), int(r.time_exceeded))
        for i, r in enumerate(reports)
    ]
    _write_csv(
        os.path.join(out, "regularity.csv"), spec,
        ["replica", "sup_Z", "sup_invZ", "space_modulus", "time_modulus",
         "ap_exceeded", "space_exceeded", "time_exceeded"],
        rows,
    )
    frac = sum(
        1 for r in reports if r.ap_exceeded or r.space_exceeded or r.time_exceeded
    ) / len(reports)
    _write_json(
        os.path.join(out, "regularity.json"), spec,
        {"fraction_exceeded": frac, "replicas": spec.replicas, "N": n},
    )
    return EXIT_OK


_RUNNERS = {
    "constants": _exp_constants,
    "simulate": _exp_simulate,
    "duality": _exp_duality,
    "kv": _exp_kv,
    "kv2": _exp_kv2,
    "azuma": _exp_azuma,
    "exact-suite": _exp_exact_suite,
    "heatkernel-verify": _exp_heatkernel,
    "bg-decay": _exp_bg_decay,
    "coupling": _exp_coupling,
    "kpz-compare": _exp_kpz_compare,
    "regularity": _exp_regularity,
}


def run(spec: ExperimentSpec, out_dir: str) -> int:
    """Execute the experiment; returns the process exit code."""
    os.makedirs(out_dir, exist_ok=True)
    try:
        return _RUNNERS[spec.kind](spec, out_dir)
    except (jsonschema.ValidationError, ValueError, KeyError) as exc:
        print(f"validation error: {exc}")
        return EXIT_VALIDATION
    except ArithmeticError as exc:
        print(f"numeric abort: {exc}")
        return EXIT_NUMERIC
