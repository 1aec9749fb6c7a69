"""Universal Stein tests and exact finite-n hypothesis-testing divergences.

The classical test accepts the null when the empirical type lies within
2*delta of p in sup-norm. For permutation-invariant pairs the optimal
Neyman-Pearson test can be run on types instead of strings, which is what
keeps n in the thousands exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import qmat
from .errors import CapabilityError, DimensionError, ValidationError
from .prob_core import (
    LN2,
    TYPE_CAP,
    Distribution,
    InfinityBall,
    ball_relative_entropy,
    binary_entropy,
    log_multinomial,
    log_type_probability,
    logsumexp,
    shannon_entropy,
    type_array,
)
from .sources import (
    ClassicalSource,
    QuantumSource,
    SourceFamily,
    logsumexp_groups,
)
from .transport import StringDistribution

ACCEPT_TOL = 1e-12


# ------------------------------------------------------------ Sanov test


@dataclass(frozen=True)
class SanovTest:
    p: Distribution
    delta: float
    n: int

    def __post_init__(self):
        if self.delta <= 0:
            raise ValidationError("delta must be > 0")
        if self.n < 1:
            raise ValidationError("n must be >= 1")

    @property
    def radius(self) -> float:
        return 2.0 * self.delta

    def accepts(self, counts) -> np.ndarray:
        c = np.atleast_2d(np.asarray(counts, dtype=np.float64))
        dev = np.max(np.abs(c / c.sum(axis=1, keepdims=True) - self.p.probs[None, :]), axis=1)
        return dev <= self.radius + ACCEPT_TOL

    def accepted_types(self, cap: int = TYPE_CAP) -> np.ndarray:
        t = type_array(self.n, self.p.size, cap)
        return t[self.accepts(t)]


def build_sanov_test(p: Distribution, delta: float, n: int) -> SanovTest:
    return SanovTest(p, float(delta), int(n))


def _realize(src, n):
    if isinstance(src, SourceFamily):
        src = src.at(n)
    if isinstance(src, QuantumSource):
        if not src.is_diagonal():
            raise CapabilityError("classical test needs a diagonal source")
        src = src.classical
    if not isinstance(src, ClassicalSource):
        raise CapabilityError("source has no exact type law")
    return src


def type1_error(test: SanovTest, src, n: int | None = None) -> float:
    """P_src(type not accepted), exact from the source's type law."""
    s = _realize(src, test.n if n is None else n)
    if s.n != test.n or s.nx != test.p.size:
        raise DimensionError("source does not match the test")
    counts, logp = s.type_law()
    rej = ~test.accepts(counts)
    return min(1.0, math.exp(logsumexp(logp[rej]))) if np.any(rej) else 0.0


class Type2Result:
    """Exact q^n(accepted) and the Sanov-type bound, with log2 versions."""

    def __init__(self, log2_exact: float, log2_bound: float, n: int):
        self.log2_exact = log2_exact
        self.log2_bound = log2_bound
        self.n = n

    @property
    def exact(self) -> float:
        return 2.0**self.log2_exact

    @property
    def bound(self) -> float:
        return min(1.0, 2.0**self.log2_bound)

    @property
    def exponent(self) -> float:
        return -self.log2_exact / self.n

    @property
    def bound_exponent(self) -> float:
        return -self.log2_bound / self.n

    def __iter__(self):
        return iter((self.exact, self.bound))

    def __repr__(self):
        return f"Type2Result(exponent={self.exponent:.6g}, bound_exponent={self.bound_exponent:.6g})"


def type2_error(test: SanovTest, q: Distribution, n: int | None = None) -> Type2Result:
    n = test.n if n is None else n
    if q.size != test.p.size:
        raise DimensionError("alphabet mismatch")
    acc = build_sanov_test(test.p, test.delta, n).accepted_types()
    l2 = logsumexp(log_type_probability(acc, q)) / LN2 if acc.size else -math.inf
    D = ball_relative_entropy(InfinityBall(test.p, test.radius), q)
    l2b = (q.size - 1) * math.log2(n + 1) - n * D
    return Type2Result(l2, l2b, n)


# ------------------------------------------------------- Neyman-Pearson


def neyman_pearson_plan(logP, logQ, eps: float):
    """Optimal randomised test over atoms given natural-log masses.

    Atoms are taken in decreasing likelihood ratio (Q = 0 first) until the
    accumulated P-mass reaches 1 - eps, with one fractional weight on the
    likelihood-ratio class where that happens. Atoms with P = 0 never enter.
    Returns (weights in [0, 1] per atom, natural log of the type-II error).
    """
    if not 0.0 <= eps < 1.0:
        raise ValidationError("eps must lie in [0, 1)")
    lp = np.asarray(logP, dtype=np.float64).ravel()
    lq = np.asarray(logQ, dtype=np.float64).ravel()
    if lp.shape != lq.shape:
        raise DimensionError("atom arrays differ in length")
    weights = np.zeros(lp.size)
    live = np.flatnonzero(np.isfinite(lp))
    if live.size == 0:
        raise ValidationError("null hypothesis has no mass")
    with np.errstate(invalid="ignore"):
        llr = np.where(np.isneginf(lq[live]), np.inf, lp[live] - lq[live])
    rank = np.argsort(-llr, kind="stable")
    order = live[rank]
    llr = llr[rank]
    pm = np.exp(lp[order])
    target = 1.0 - eps
    cum = np.cumsum(pm)
    idx = min(int(np.searchsorted(cum, target - 1e-15)), pm.size - 1)
    # the whole tie class of the boundary atom shares one fraction, as the
    # threshold eigenspace does in the quantum test
    edge = llr[idx]
    if math.isinf(edge):
        tied = np.isinf(llr)
    else:
        tied = np.abs(llr - edge) <= 1e-10 * max(1.0, abs(edge))
    first = int(np.argmax(tied))
    last = pm.size - int(np.argmax(tied[::-1]))
    before = cum[first - 1] if first > 0 else 0.0
    group = float(pm[first:last].sum())
    f = min(1.0, max(0.0, (target - before) / group))
    weights[order[:first]] = 1.0
    weights[order[first:last]] = f
    terms = list(lq[order[:first]])
    if f > 0:
        terms.append(math.log(f) + logsumexp(lq[order[first:last]]))
    return weights, logsumexp(terms)


def neyman_pearson_log_beta(logP, logQ, eps: float) -> float:
    """Natural log of the optimal type-II error at type-I level eps."""
    return neyman_pearson_plan(logP, logQ, eps)[1]


def dh_from_log_beta(lb: float) -> float:
    return math.inf if lb == -math.inf else -lb / LN2


def dh_eps_classical(p_n: StringDistribution, q_n: StringDistribution, eps: float) -> float:
    """Exact D_H^eps in bits between two string distributions."""
    if p_n.size != q_n.size or p_n.n != q_n.n:
        raise DimensionError("string distributions must share alphabet and length")
    qd = q_n.as_dict()
    with np.errstate(divide="ignore"):
        lq = np.log(np.array([qd.get(tuple(s), 0.0) for s in p_n.strings.tolist()]))
    return dh_from_log_beta(neyman_pearson_log_beta(np.log(p_n.probs), lq, eps))


def dh_eps_atoms(P, Q, eps: float) -> float:
    """Exact D_H^eps for probability vectors on a common finite set."""
    P, Q = np.asarray(P, dtype=np.float64), np.asarray(Q, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return dh_from_log_beta(neyman_pearson_log_beta(np.log(P), np.log(Q), eps))


def dh_eps_exchangeable(p_law: tuple, q_law: tuple, eps: float) -> float:
    """D_H^eps from two type laws (counts, log-masses). Valid when both
    string laws are permutation invariant: the likelihood ratio is then
    constant on type classes."""
    pc, pl = p_law
    qc, ql = q_law
    keys = np.vstack([pc, qc])
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    lp = np.full(uniq.shape[0], -np.inf)
    lq = np.full(uniq.shape[0], -np.inf)
    lp[inv[: len(pl)]] = pl
    lq[inv[len(pl) :]] = ql
    return dh_from_log_beta(neyman_pearson_log_beta(lp, lq, eps))


def paired_source_dh(p: Distribution, n: int, eps: float) -> float:
    """D_H^eps(paired_n || p^(n)) via the pair-block reduction.

    Both laws are i.i.d. over the n/2 blocks (x_{2i-1}, x_{2i}): the paired
    block law is diag(p) on X^2, the alternative block law is p (x) p.
    Blocks outside the support of the paired law carry no null mass, so
    types are enumerated over that support only.
    """
    if n % 2:
        raise ValidationError("n must be even")
    k = p.size
    P2 = np.zeros(k * k)
    P2[np.arange(k) * (k + 1)] = p.probs
    Q2 = np.outer(p.probs, p.probs).ravel()
    sup = np.flatnonzero(P2 > 0)
    m = n // 2
    T = type_array(m, sup.size)
    lm = log_multinomial(T)
    lp = lm + T @ np.log(P2[sup])
    lq = lm + T @ np.log(Q2[sup])
    return dh_from_log_beta(neyman_pearson_log_beta(lp, lq, eps))


def paired_source_exponent_check(p: Distribution, n_list: Sequence[int], eps: float):
    target = shannon_entropy(p) / 2.0
    rows = []
    for n in n_list:
        dh = paired_source_dh(p, n, eps)
        rows.append({"n": n, "dh": dh, "rate": dh / n, "target": target, "gap": abs(dh / n - target)})
    return rows


def sigma_tilde_dh(r: Distribution, s: Distribution, n: int, eps: float) -> float:
    """D_H^eps(r^(n) || (1 - 1/n) s^(n) + (1/n) r^(n)), exact over types."""
    if r.size != s.size:
        raise DimensionError("alphabet mismatch")
    sup = np.flatnonzero((r.probs > 0) | (s.probs > 0))
    T = type_array(n, sup.size)
    counts = np.zeros((T.shape[0], r.size), dtype=np.int64)
    counts[:, sup] = T
    lr = log_type_probability(counts, r)
    ls = log_type_probability(counts, s)
    lq = np.logaddexp(math.log1p(-1.0 / n) + ls if n > 1 else np.full_like(ls, -np.inf), math.log(1.0 / n) + lr)
    return dh_from_log_beta(neyman_pearson_log_beta(lr, lq, eps))


def stein_zero_alternative_check(rho, sigma, eps: float, n_list: Sequence[int]):
    """Per-n check that D_H^eps(rho^n || sigma_tilde_n) <= -log2((1-eps)/n)."""
    r, s = _diag_pair(rho, sigma)
    rows = []
    for n in n_list:
        dh = sigma_tilde_dh(r, s, n, eps)
        bound = -math.log2((1.0 - eps) / n)
        rows.append({"n": n, "dh": dh, "bound": bound, "exponent": dh / n, "bound_exponent": bound / n, "ok": dh <= bound + 1e-9})
    return rows


def _diag_pair(rho, sigma):
    if isinstance(rho, Distribution):
        return rho, sigma
    if not (rho.is_diagonal() and sigma.is_diagonal()):
        raise CapabilityError("classical reduction needs diagonal states")
    return Distribution(rho.diagonal() / rho.diagonal().sum()), Distribution(sigma.diagonal() / sigma.diagonal().sum())


def msr_alternative_correction(n: int, r: int, delta: float, d_ae: int) -> float:
    if not 0 <= r <= n or n < 1:
        raise ValidationError("need 0 <= r <= n")
    if not 0.0 < delta < 1.0:
        raise ValidationError("delta must lie in (0, 1)")
    f = r / n
    return binary_entropy(f) + f * math.log2(d_ae) + f * math.log2(1.0 / delta) + (1.0 - f) * math.log2(1.0 / (1.0 - delta))


# --------------------------------------------------------- quantum lifting


@dataclass(frozen=True)
class BatchedQuantumTest:
    h: int
    d: int
    basis: np.ndarray  # measurement vectors as columns on (C^d)^h
    p_outcome: Distribution
    q_outcome: Distribution
    delta: float
    measured_lb: float

    @property
    def measurement(self) -> qmat.ProjectiveMeasurement:
        return qmat.ProjectiveMeasurement.from_basis(self.basis)

    def batches(self, n: int) -> int:
        return n // self.h

    def inner(self, n: int) -> SanovTest:
        m = self.batches(n)
        if m < 1:
            raise ValidationError("n smaller than the batch size")
        return build_sanov_test(self.p_outcome, self.delta, m)

    def outcome_law(self, state: np.ndarray) -> np.ndarray:
        p = np.real(np.einsum("ij,jk,ki->i", self.basis.conj().T, state, self.basis))
        p = np.clip(p, 0.0, None)
        return p / p.sum()


def build_quantum_universal_test(rho: qmat.DensityMatrix, sigma: qmat.DensityMatrix, h: int, delta: float,
                                 restarts: int = 32, seed: int = 0) -> BatchedQuantumTest:
    if rho.dim != sigma.dim:
        raise DimensionError("state dimensions differ")
    if rho.dim**h > qmat.MAX_DIM:
        raise ValidationError("d^h exceeds the dense cap")
    rh = qmat.DensityMatrix(qmat.kron_power(rho, h), check=False)
    sh = qmat.DensityMatrix(qmat.kron_power(sigma, h), check=False)
    val, U = qmat.optimize_measurement(rh, sh, restarts=restarts, seed=seed)
    probe = BatchedQuantumTest(h, rho.dim, U, None, None, delta, val)
    p = Distribution(probe.outcome_law(rh.matrix))
    q = Distribution(probe.outcome_law(sh.matrix))
    return BatchedQuantumTest(h, rho.dim, U, p, q, float(delta), val)


def _iid_outcome_type_law(law: np.ndarray, m: int):
    T = type_array(m, law.size)
    zero = law <= 0
    logl = np.log(np.where(zero, 1.0, law))
    lp = log_multinomial(T) + T @ logl
    if np.any(zero):
        lp[(T[:, zero] > 0).any(axis=1)] = -np.inf
    return T, lp


def _site_structure(comp, nx):
    """(common site law, defect site law or None) for a product component
    with at most one distinct site."""
    laws = {}
    for blk, reps in comp.runs:
        if blk.size != 1:
            raise CapabilityError("batched evaluation needs site-product components")
        laws.setdefault(blk.law.tobytes(), [blk.law, 0])[1] += reps
    if len(laws) == 1:
        (law, _), = laws.values()
        return law, None
    if len(laws) == 2:
        (a, ra), (b, rb) = sorted(laws.values(), key=lambda t: -t[1])
        if rb == 1:
            return a, b
    raise CapabilityError("batched evaluation supports at most one defect site")


def _batched_null_type_law(test: BatchedQuantumTest, src: QuantumSource, n: int):
    """Outcome type law of the m measured batches under the symmetrised null:
    a defect site lands in each of the n positions with equal probability;
    positions beyond m*h are discarded."""
    h, m = test.h, test.batches(n)
    basis = src.basis
    parts_c, parts_l = [], []
    for w, comp in zip(src.classical.weights, src.classical.components):
        if w <= 0:
            continue
        a, b = _site_structure(comp, src.d)
        A = (basis * a[None, :]) @ basis.conj().T
        batch_iid = test.outcome_law(qmat.kron_power(A, h))
        if b is None:
            T, lp = _iid_outcome_type_law(batch_iid, m)
            parts_c.append(T)
            parts_l.append(lp + math.log(w))
            continue
        B = (basis * b[None, :]) @ basis.conj().T
        lost = (n - m * h) / n
        if lost > 0:
            T, lp = _iid_outcome_type_law(batch_iid, m)
            parts_c.append(T)
            parts_l.append(lp + math.log(w * lost))
        T, lp = _iid_outcome_type_law(batch_iid, m - 1)
        defect = np.zeros(batch_iid.size)
        for pos in range(h):
            mats = [A] * h
            mats[pos] = B
            defect += test.outcome_law(qmat.kron_all(mats)) / h
        with np.errstate(divide="ignore"):
            ld = np.log(defect)
        D = batch_iid.size
        for o in np.flatnonzero(defect > 0):
            Tc = T.copy()
            Tc[:, o] += 1
            parts_c.append(Tc)
            parts_l.append(lp + ld[o] + math.log(w * m * h / n))
    return logsumexp_groups(np.vstack(parts_c), np.concatenate(parts_l))


def evaluate_quantum_test(test: BatchedQuantumTest, null_src, n: int, sigma: qmat.DensityMatrix | None = None):
    """(type-I error on the null source, type-II exponent per system against
    sigma^(n)). The alternative defaults to the sigma the test was built for."""
    if isinstance(null_src, SourceFamily):
        null_src = null_src.at(n)
    if not isinstance(null_src, QuantumSource) or not null_src.is_diagonal():
        raise CapabilityError("null source must be diagonal-structured")
    inner = test.inner(n)
    counts, logp = _batched_null_type_law(test, null_src, n)
    rej = ~inner.accepts(counts)
    type1 = min(1.0, math.exp(logsumexp(logp[rej]))) if np.any(rej) else 0.0
    q = test.q_outcome
    if sigma is not None:
        q = Distribution(test.outcome_law(qmat.kron_power(sigma, test.h)))
    acc = inner.accepted_types()
    l2 = logsumexp(log_type_probability(acc, q)) / LN2 if acc.size else -math.inf
    return type1, -l2 / n


def batched_exponent_target(test: BatchedQuantumTest) -> float:
    """Per-system exponent the batched classical test aims at."""
    return ball_relative_entropy(InfinityBall(test.p_outcome, 2 * test.delta), test.q_outcome) / test.h
