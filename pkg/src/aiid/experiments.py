"""Experiment runners behind the command line.

Each runner validates its whole parameter map first (prepare), then
computes rows of a table plus a list of named threshold checks (execute).
All arithmetic lives in the library modules; this file only wires them.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import coding, compression, hypothesis, qmat, sources, transport
from .errors import ValidationError
from .prob_core import Distribution, InfinityBall, ball_relative_entropy, relative_entropy, shannon_entropy

# ------------------------------------------------------------ schemas

SCHEMAS = {
    "run_stein": {
        "mode": ("str", "universal"),
        "p": ("vec", [0.7, 0.3]),
        "q": ("vec", [0.5, 0.5]),
        "rho": ("mat", None),
        "sigma": ("mat", None),
        "delta": ("float", 0.02),
        "eps": ("float", 0.1),
        "h": ("int", 1),
        "ns": ("ints", [200, 1000, 2000]),
        "families": ("strs", ["iid", "defect", "paired"]),
        "defect_x0": ("int", 0),
        "type1_max": ("float", 0.05),
        "gap_max": ("float", 0.02),
    },
    "run_compress": {
        "mode": ("str", "classical"),
        "p": ("vec", [0.89, 0.11]),
        "rho": ("mat", None),
        "delta": ("float", 0.0085),
        "eps": ("float", 0.1),
        "ns": ("ints", [500, 1000, 2000]),
        "families": ("strs", ["iid", "paired", "defect"]),
        "defect_x0": ("int", 0),
        "error_max": ("float", 0.1),
        "gap_max": ("float", 0.05),
        "fidelity_slack": ("float", 0.02),
        "identity_tol": ("float", 1e-10),
    },
    "run_code": {
        "W": ("mat", [[0.9, 0.1], [0.1, 0.9]]),
        "r": ("float", 0.25),
        "delta": ("float", 0.05),
        "ns": ("ints", [8, 16, 24]),
        "trials": ("int", 10000),
        "processes": ("strs", ["iid", "single_site_defect", "mixture"]),
        "defect_site": ("int", 0),
        "replace_y0": ("int", 0),
        "check_monotone": ("bool", True),
        "check_floor": ("bool", True),
        "transcript": ("bool", True),
    },
    "run_transport": {
        "tables": ("strs", ["gamma", "identical", "club"]),
        "rho": ("mat", [[0.7, 0.0], [0.0, 0.3]]),
        "ns": ("ints", [1, 2, 5, 10]),
        "pairs": ("int", 100),
        "tol": ("float", 1e-9),
    },
}

ALIASES = {"stein": "run_stein", "compress": "run_compress", "code": "run_code", "transport": "run_transport"}
RESERVED = {"subcommand": "str", "seed": "int"}


def canonical_subcommand(name: str) -> str:
    name = ALIASES.get(name, name)
    if name not in SCHEMAS:
        raise ValidationError(f"unknown subcommand {name!r}")
    return name


def _coerce(name, kind, value):
    if kind == "float" and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if kind == "vec" and isinstance(value, list) and all(isinstance(v, (int, float)) for v in value):
        return [float(v) for v in value]
    ok = {
        "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
        "float": lambda v: isinstance(v, float),
        "str": lambda v: isinstance(v, str),
        "bool": lambda v: isinstance(v, bool),
        "ints": lambda v: isinstance(v, list) and all(isinstance(x, int) for x in v),
        "strs": lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v),
        "mat": lambda v: v is None or (isinstance(v, list) and all(isinstance(r, list) for r in v)),
        "vec": lambda v: isinstance(v, list),
    }[kind]
    if not ok(value):
        raise ValidationError(f"parameter {name!r} must be of type {kind}")
    return value


def resolve_params(sub: str, raw: dict) -> dict:
    schema = SCHEMAS[sub]
    out = {k: (list(v) if isinstance(v, list) else v) for k, (_, v) in schema.items()}
    for k, v in raw.items():
        if k in RESERVED:
            continue
        if k not in schema:
            raise ValidationError(f"unknown parameter {k!r} for {sub}")
        out[k] = _coerce(k, schema[k][0], v)
    return out


# --------------------------------------------------------- validation


def _dist(v, name) -> Distribution:
    try:
        return Distribution(np.asarray(v, dtype=np.float64))
    except ValidationError as e:
        raise ValidationError(f"{name}: {e}") from None


def _state(v, name) -> qmat.DensityMatrix:
    if v is None:
        raise ValidationError(f"{name} is required in this mode")
    try:
        return qmat.DensityMatrix(np.asarray(v, dtype=np.float64))
    except ValidationError as e:
        raise ValidationError(f"{name}: {e}") from None


def _ns(ns, even=False, lo=1):
    if not ns:
        raise ValidationError("ns must not be empty")
    for n in ns:
        if n < lo:
            raise ValidationError(f"block length {n} below {lo}")
        if even and n % 2:
            raise ValidationError(f"block length {n} must be even")
    return list(ns)


def _unit(x, name, closed=False):
    if not (0.0 <= x <= 1.0 if closed else 0.0 < x < 1.0):
        raise ValidationError(f"{name} must lie in {'[0, 1]' if closed else '(0, 1)'}")


def _families(fams, allowed, name="families"):
    for f in fams:
        if f not in allowed:
            raise ValidationError(f"{name}: unknown entry {f!r}; allowed {', '.join(allowed)}")
    return list(fams)


@dataclass
class Outcome:
    rows: list
    checks: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    records: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c["ok"] for c in self.checks)


def _check(name, ok, value=None, threshold=None):
    return {"name": name, "ok": bool(ok), "value": value, "threshold": threshold}


def _pmap(fn, jobs, threads):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, jobs))


# ------------------------------------------------------------ stein

STEIN_FAMILIES = ("iid", "defect", "paired")


def prepare_stein(P):
    mode = P["mode"]
    _unit(P["eps"], "eps")
    if mode == "universal":
        p, q = _dist(P["p"], "p"), _dist(P["q"], "q")
        if p.size != q.size:
            raise ValidationError("p and q must share an alphabet")
        if P["delta"] <= 0:
            raise ValidationError("delta must be positive")
        fams = _families(P["families"], STEIN_FAMILIES)
        if not 0 <= P["defect_x0"] < p.size:
            raise ValidationError("defect_x0 outside the alphabet")
        return {"mode": mode, "p": p, "q": q, "delta": P["delta"], "ns": _ns(P["ns"], even="paired" in fams), "families": fams, "x0": P["defect_x0"]}
    if mode == "paired":
        return {"mode": mode, "p": _dist(P["p"], "p"), "ns": _ns(P["ns"], even=True, lo=2), "eps": P["eps"]}
    if mode == "sigma_tilde":
        r, s = _dist(P["p"], "p"), _dist(P["q"], "q")
        if r.size != s.size:
            raise ValidationError("p and q must share an alphabet")
        return {"mode": mode, "p": r, "q": s, "ns": _ns(P["ns"]), "eps": P["eps"]}
    if mode == "quantum":
        rho, sigma = _state(P["rho"], "rho"), _state(P["sigma"], "sigma")
        if rho.dim != sigma.dim:
            raise ValidationError("rho and sigma dimensions differ")
        if P["h"] < 1 or rho.dim ** P["h"] > qmat.MAX_DIM:
            raise ValidationError("h must be >= 1 with d^h <= 256")
        if P["delta"] <= 0:
            raise ValidationError("delta must be positive")
        ns = _ns(P["ns"])
        return {"mode": mode, "rho": rho, "sigma": sigma, "h": P["h"], "delta": P["delta"], "ns": ns}
    raise ValidationError(f"unknown stein mode {mode!r}")


def _stein_family_source(fam, p, x0, n):
    if fam == "iid":
        return sources.iid_source(p.probs, n)
    if fam == "defect":
        return sources.make_defect_mixture(p.probs, x0, n)
    return sources.make_paired_source(p.probs, n)


def execute_stein(plan, P, threads=1):
    mode = plan["mode"]
    rows, checks = [], []
    if mode == "universal":
        p, q, delta = plan["p"], plan["q"], plan["delta"]
        target = ball_relative_entropy(InfinityBall(p, 2 * delta), q)

        def job(n):
            test = hypothesis.build_sanov_test(p, delta, n)
            exp = hypothesis.type2_error(test, q, n).exponent
            out = []
            for fam in plan["families"]:
                t1 = hypothesis.type1_error(test, _stein_family_source(fam, p, plan["x0"], n), n)
                out.append({"n": n, "family": fam, "type1": t1, "type2_exponent": exp, "target": target, "gap": abs(exp - target), "bound": None})
            return out

        for chunk in _pmap(job, plan["ns"], threads):
            rows.extend(chunk)
        nmax = max(plan["ns"])
        for row in rows:
            if row["n"] == nmax:
                checks.append(_check(f"type1[{row['family']},n={nmax}]", row["type1"] <= P["type1_max"], row["type1"], P["type1_max"]))
        last = [r for r in rows if r["n"] == nmax][0]
        checks.append(_check(f"gap[n={nmax}]", last["gap"] <= P["gap_max"], last["gap"], P["gap_max"]))
        return Outcome(rows, checks, {"relative_entropy_bits": relative_entropy(p, q), "ball_relative_entropy_bits": target})
    if mode == "paired":
        target = shannon_entropy(plan["p"]) / 2
        for r in _pmap(lambda n: hypothesis.paired_source_exponent_check(plan["p"], [n], plan["eps"])[0], plan["ns"], threads):
            rows.append({"n": r["n"], "family": "paired", "type1": plan["eps"], "type2_exponent": r["rate"], "target": target, "gap": r["gap"], "bound": None})
            checks.append(_check(f"gap[n={r['n']}]", r["gap"] <= P["gap_max"], r["gap"], P["gap_max"]))
        return Outcome(rows, checks, {"target_bits": target})
    if mode == "sigma_tilde":
        res = _pmap(lambda n: hypothesis.stein_zero_alternative_check(plan["p"], plan["q"], plan["eps"], [n])[0], plan["ns"], threads)
        for r in res:
            rows.append({"n": r["n"], "family": "sigma_tilde", "type1": plan["eps"], "type2_exponent": r["exponent"], "target": 0.0, "gap": r["exponent"], "bound": r["bound_exponent"]})
            checks.append(_check(f"bound[n={r['n']}]", r["ok"], r["exponent"], r["bound_exponent"]))
        nmax = max(plan["ns"])
        last = [r for r in rows if r["n"] == nmax][0]
        checks.append(_check(f"gap[n={nmax}]", last["gap"] <= P["gap_max"], last["gap"], P["gap_max"]))
        return Outcome(rows, checks)
    # quantum universal test, i.i.d. null
    test = hypothesis.build_quantum_universal_test(plan["rho"], plan["sigma"], plan["h"], plan["delta"], seed=0)
    target = hypothesis.batched_exponent_target(test)

    def qjob(n):
        t1, exp = hypothesis.evaluate_quantum_test(test, sources.iid_quantum(plan["rho"], n), n)
        return {"n": n, "family": "iid", "type1": t1, "type2_exponent": exp, "target": target, "gap": abs(exp - target), "bound": None}

    rows = _pmap(qjob, plan["ns"], threads)
    nmax = max(plan["ns"])
    for r in rows:
        if r["n"] == nmax:
            checks.append(_check(f"type1[n={nmax}]", r["type1"] <= P["type1_max"], r["type1"], P["type1_max"]))
            checks.append(_check(f"gap[n={nmax}]", r["gap"] <= P["gap_max"], r["gap"], P["gap_max"]))
    return Outcome(rows, checks, {"measured_lb_bits": test.measured_lb})


# --------------------------------------------------------- compress

COMPRESS_CLASSICAL = ("iid", "paired", "defect")
COMPRESS_QUANTUM = ("iid", "gamma")


def prepare_compress(P):
    mode = P["mode"]
    if mode == "classical":
        p = _dist(P["p"], "p")
        if P["delta"] <= 0:
            raise ValidationError("delta must be positive")
        fams = _families(P["families"], COMPRESS_CLASSICAL)
        ns = _ns(P["ns"], even="paired" in fams)
        if max(ns) > 0xFFFF or p.size > 0xFF:
            raise ValidationError("n and |X| must fit the wire header")
        if not 0 <= P["defect_x0"] < p.size:
            raise ValidationError("defect_x0 outside the alphabet")
        return {"mode": mode, "p": p, "delta": P["delta"], "ns": ns, "families": fams, "x0": P["defect_x0"]}
    if mode == "quantum":
        rho = _state(P["rho"], "rho")
        _unit(P["eps"], "eps")
        fams = _families(P["families"], COMPRESS_QUANTUM)
        return {"mode": mode, "rho": rho, "eps": P["eps"], "ns": _ns(P["ns"]), "families": fams}
    raise ValidationError(f"unknown compress mode {mode!r}")


def execute_compress(plan, P, threads=1):
    rows, checks = [], []
    if plan["mode"] == "classical":
        p = plan["p"]
        H = shannon_entropy(p)

        def job(n):
            code = compression.build_classical_code(p, plan["delta"], n)
            rate, other = compression.rate_identity_check(code)
            out = []
            for fam in plan["families"]:
                err = compression.classical_code_error(code, _stein_family_source(fam, p, plan["x0"], n))
                out.append({"n": n, "family": fam, "rate": rate, "error": err, "target": H, "gap": abs(rate - H), "identity_gap": abs(rate - other)})
            return out

        for chunk in _pmap(job, plan["ns"], threads):
            rows.extend(chunk)
        nmax = max(plan["ns"])
        for r in rows:
            checks.append(_check(f"identity[{r['family']},n={r['n']}]", r["identity_gap"] <= P["identity_tol"], r["identity_gap"], P["identity_tol"]))
            if r["n"] == nmax:
                checks.append(_check(f"error[{r['family']},n={nmax}]", r["error"] <= P["error_max"], r["error"], P["error_max"]))
        last = [r for r in rows if r["n"] == nmax][0]
        checks.append(_check(f"gap[n={nmax}]", last["gap"] <= P["gap_max"], last["gap"], P["gap_max"]))
        return Outcome(rows, checks, {"entropy_bits": H})
    rho, eps = plan["rho"], plan["eps"]
    S = qmat.von_neumann_entropy(rho)
    floor = (1 - eps / 2) ** 2 - P["fidelity_slack"]

    def qjob(n):
        code = compression.build_quantum_code(rho, eps, n)
        out = []
        for fam in plan["families"]:
            src = sources.iid_quantum(rho, n) if fam == "iid" else sources.make_gamma_eta_sigma("gamma", rho, None, n)
            lb, exact = compression.quantum_code_fidelity(code, src)
            out.append({"n": n, "family": fam, "rate": code.rate, "fidelity_lb": lb, "fidelity_exact": exact, "target": S, "gap": abs(code.rate - S), "rank_ok": compression.rank_bound_check(code)})
        return out

    for chunk in _pmap(qjob, plan["ns"], threads):
        rows.extend(chunk)
    nmax = max(plan["ns"])
    for r in rows:
        checks.append(_check(f"rank_bound[{r['family']},n={r['n']}]", r["rank_ok"]))
        if r["n"] == nmax:
            checks.append(_check(f"fidelity[{r['family']},n={nmax}]", r["fidelity_lb"] >= floor, r["fidelity_lb"], floor))
    last = [r for r in rows if r["n"] == nmax][0]
    checks.append(_check(f"gap[n={nmax}]", last["gap"] <= P["gap_max"], last["gap"], P["gap_max"]))
    return Outcome(rows, checks, {"entropy_bits": S})


# ------------------------------------------------------------- code

PROCESSES = ("iid", "single_site_defect", "mixture", "z_correlated")


def prepare_code(P):
    W = np.asarray(P["W"], dtype=np.float64)
    try:
        coding.DMC(W)
    except ValidationError as e:
        raise ValidationError(f"W: {e}") from None
    if W.shape[0] > 256 or W.shape[1] > 256:
        raise ValidationError("alphabets must fit a byte")
    if P["r"] <= 0:
        raise ValidationError("r must be positive")
    if P["delta"] < 0:
        raise ValidationError("delta must be non-negative")
    if P["trials"] < 1:
        raise ValidationError("trials must be positive")
    procs = _families(P["processes"], PROCESSES, "processes")
    if not 0 <= P["replace_y0"] < W.shape[1]:
        raise ValidationError("replace_y0 outside the output alphabet")
    if "z_correlated" in procs and W.shape != (2, 2):
        raise ValidationError("z_correlated needs binary alphabets")
    ns = _ns(P["ns"])
    for n in ns if set(procs) - {"z_correlated"} else []:
        if 2.0 ** (P["r"] * n) > 2**20:
            raise ValidationError(f"2^(r n) messages too many at n={n}")
    return {"W": W, "r": P["r"], "delta": P["delta"], "ns": ns, "trials": P["trials"], "processes": procs,
            "site": P["defect_site"], "y0": P["replace_y0"]}


def _process(kind, plan):
    W = plan["W"]
    if kind == "single_site_defect":
        F = sources.flip_matrix(W.shape[0]) if W.shape[0] == W.shape[1] else sources.replacement_matrix(W.shape[1])
        return sources.make_channel_process(kind, W, F=F, site=plan["site"])
    if kind == "mixture":
        return sources.make_channel_process(kind, W, y0=plan["y0"])
    return sources.make_channel_process(kind, W)


def execute_code(plan, P, seed=0, threads=1):
    W = plan["W"]
    P0 = coding.capacity_dmc(W)[1]
    jobs = [(kind, n) for kind in plan["processes"] for n in plan["ns"]]

    def job(kn):
        kind, n = kn
        if kind == "z_correlated":
            z = coding.z_channel_scheme(n, plan["trials"], seed)
            lo, hi = coding.wilson_interval(z.block_errors, z.trials)
            row = {"n": n, "process": kind, "r": 0.5 if n >= 2 else 0.0, "M": 2 ** z.bits, "delta": 0.0, "errors": z.block_errors,
                   "error": z.block_errors / z.trials, "ci_low": lo, "ci_high": hi, "gallager_bound": None, "floor": None}
            return row, []
        tr = coding.shared_randomness_protocol(W, _process(kind, plan), plan["r"], n, seed, plan["trials"], plan["delta"])
        s = tr.summary
        floor = coding.reliability_floor(s["M"], n) if kind == "mixture" else None
        row = {"n": n, "process": kind, "r": s["rate"], "M": s["M"], "delta": plan["delta"], "errors": s["errors"], "error": s["error"],
               "ci_low": s["ci_low"], "ci_high": s["ci_high"], "gallager_bound": coding.gallager_bound(W, n, s["M"], P0), "floor": floor}
        recs = [dict(process=kind, n=n, **rec) for rec in tr.records] if P["transcript"] else []
        return row, recs

    results = _pmap(job, jobs, threads)
    rows = [r for r, _ in results]
    records = [rec for _, recs in results for rec in recs]
    checks = []
    for kind in plan["processes"]:
        seq = sorted((r for r in rows if r["process"] == kind), key=lambda r: r["n"])
        if kind == "z_correlated":
            for r in seq:
                checks.append(_check(f"zero_errors[z_correlated,n={r['n']}]", r["errors"] == 0, r["errors"], 0))
            continue
        if P["check_monotone"]:
            for a, b in zip(seq, seq[1:]):
                # not significantly increasing: the later interval starts below the earlier one ends
                checks.append(_check(f"monotone[{kind},{a['n']}->{b['n']}]", b["ci_low"] <= a["ci_high"], b["ci_low"], a["ci_high"]))
        if kind == "mixture" and P["check_floor"]:
            for r in seq:
                sigma = math.sqrt(r["error"] * (1 - r["error"]) / plan["trials"])
                lim = r["floor"] - 3 * sigma
                checks.append(_check(f"floor[mixture,n={r['n']}]", r["error"] >= lim, r["error"], lim))
    return Outcome(rows, checks, {"capacity_bits": coding.capacity_dmc(W)[0]}, records)


# -------------------------------------------------------- transport

TRANSPORT_TABLES = ("gamma", "identical", "club")


def prepare_transport(P):
    tables = _families(P["tables"], TRANSPORT_TABLES, "tables")
    rho = _state(P["rho"], "rho") if "identical" in tables else None
    if rho is not None and not rho.is_diagonal():
        raise ValidationError("identical-states table needs a diagonal rho")
    ns = _ns(P["ns"])
    if "club" in tables and max(ns) > 10:
        raise ValidationError("club table is exhaustive-checked only for n <= 10")
    if P["pairs"] < 0:
        raise ValidationError("pairs must be non-negative")
    return {"tables": tables, "rho": rho, "ns": ns, "pairs": P["pairs"], "tol": P["tol"]}


def execute_transport(plan, P, seed=0, threads=1):
    rows, checks = [], []
    tol = plan["tol"]
    ket0 = qmat.DensityMatrix.diag([1.0, 0.0])
    for table in plan["tables"]:
        for n in plan["ns"]:
            if table == "gamma":
                src = sources.make_gamma_eta_sigma("gamma", ket0, None, n)
                w = sources.w1_aiid_deviation(src, ket0)
                td = sources.trace_deviation(src, ket0)
                rows.append({"table": "gamma", "n": n, "quantity": "w1_over_n", "value": w, "lower": td / n, "upper": td, "ok": abs(w - 1.0 / n) <= tol})
            elif table == "identical":
                src = sources.iid_quantum(plan["rho"], n)
                w = sources.w1_aiid_deviation(src, plan["rho"])
                td = sources.trace_deviation(src, plan["rho"])
                rows.append({"table": "identical", "n": n, "quantity": "w1_over_n", "value": w, "lower": td / n, "upper": td, "ok": abs(w) <= tol})
            else:
                W = np.eye(2)
                defect = transport.BlockChannel.sites([sources.flip_matrix(2)] + [W] * (n - 1))
                ident = transport.BlockChannel.iid(W, n)
                club = transport.club_distance(defect, ident)
                dia = transport.diamond_distance_classical(defect, ident)
                rows.append({"table": "club", "n": n, "quantity": "club_flip_defect", "value": club, "lower": dia, "upper": n * dia, "ok": abs(club - 1.0) <= tol and club <= n * dia + tol})
    if "club" in plan["tables"] and plan["pairs"]:
        rng = np.random.default_rng(seed)
        bad = 0
        for _ in range(plan["pairs"]):
            a = transport.DenseChannel(2, 2, 2, rng.dirichlet(np.ones(4), size=4))
            b = transport.DenseChannel(2, 2, 2, rng.dirichlet(np.ones(4), size=4))
            bad += not transport.club_vs_diamond_check(a, b, tol)
        rows.append({"table": "club", "n": 2, "quantity": "random_pairs_violations", "value": float(bad), "lower": None, "upper": None, "ok": bad == 0})
    for r in rows:
        checks.append(_check(f"{r['table']}:{r['quantity']}[n={r['n']}]", r["ok"], r["value"]))
    return Outcome(rows, checks)


# --------------------------------------------------------------- api

COLUMNS = {
    "run_stein": ["n", "family", "type1", "type2_exponent", "target", "gap", "bound"],
    "run_compress": ["n", "family", "rate", "error", "fidelity_lb", "fidelity_exact", "target", "gap", "identity_gap", "rank_ok"],
    "run_code": ["n", "process", "r", "M", "delta", "errors", "error", "ci_low", "ci_high", "gallager_bound", "floor"],
    "run_transport": ["table", "n", "quantity", "value", "lower", "upper", "ok"],
}


def prepare(sub: str, params: dict):
    P = resolve_params(sub, params)
    plan = {"run_stein": prepare_stein, "run_compress": prepare_compress, "run_code": prepare_code, "run_transport": prepare_transport}[sub](P)
    return P, plan


def run(sub: str, params: dict, seed: int = 0, threads: int = 1) -> Outcome:
    sub = canonical_subcommand(sub)
    P, plan = prepare(sub, params)
    if sub == "run_stein":
        return execute_stein(plan, P, threads)
    if sub == "run_compress":
        return execute_compress(plan, P, threads)
    if sub == "run_code":
        return execute_code(plan, P, seed, threads)
    return execute_transport(plan, P, seed, threads)
