"""Almost-i.i.d. source families, channel processes and their verifiers.

Classical realisations are mixtures of block products: each component is a
sequence of runs ``(block law, repeats)``. That keeps type laws, marginals
and samples exact for every family used here. Quantum families diagonal in
a fixed basis reuse the classical structure.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import qmat
from .errors import CapabilityError, CapacityError, DimensionError, ValidationError
from .prob_core import TYPE_CAP, Distribution, log_multinomial, point_mass, type_array
from .transport import (
    LP_CAP,
    BlockChannel,
    DenseChannel,
    MixtureChannel,
    StringDistribution,
    hamming_matrix,
    index_to_digits,
    transportation_simplex,
    w1_hamming,
)

DENSE_CAP = 256
SUBSET_CAP = 10**5


def logsumexp_groups(keys: np.ndarray, logp: np.ndarray):
    """Merge rows with equal keys, combining log-masses by log-sum-exp."""
    keys = np.asarray(keys)
    radix = int(keys.max()) + 1 if keys.size else 1
    if keys.ndim == 2 and keys.dtype.kind in "iu" and keys.min(initial=0) >= 0 and keys.shape[1] * math.log2(radix) < 62:
        # integer rows: group on a mixed-radix scalar key (much faster)
        flat = np.zeros(keys.shape[0], dtype=np.int64)
        for j in range(keys.shape[1]):
            flat = flat * radix + keys[:, j]
        ukey, first, inv = np.unique(flat, return_index=True, return_inverse=True)
        uniq = keys[first]
    else:
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    mx = np.full(uniq.shape[0], -np.inf)
    np.maximum.at(mx, inv, logp)
    safe = np.where(np.isfinite(mx), mx, 0.0)
    acc = np.zeros(uniq.shape[0])
    np.add.at(acc, inv, np.exp(logp - safe[inv]))
    with np.errstate(divide="ignore"):
        out = safe + np.log(acc)
    out[~np.isfinite(mx)] = -np.inf
    return uniq, out


# ------------------------------------------------------ classical structure


@dataclass(frozen=True)
class Block:
    """Joint law of ``size`` consecutive sites, flattened row-major."""

    size: int
    law: np.ndarray
    nx: int

    @classmethod
    def site(cls, p) -> "Block":
        v = p.probs if isinstance(p, Distribution) else np.asarray(p, dtype=np.float64)
        return cls(1, np.asarray(v, dtype=np.float64), v.size)

    def strings(self) -> np.ndarray:
        return index_to_digits(np.arange(self.nx**self.size), self.size, self.nx)

    def marginal(self, positions: Sequence[int]) -> np.ndarray:
        t = self.law.reshape([self.nx] * self.size)
        drop = tuple(i for i in range(self.size) if i not in positions)
        return t.sum(axis=drop).ravel() if drop else t.ravel()

    def key(self):
        return (self.size, self.nx, self.law.tobytes())


@dataclass(frozen=True)
class ProductLaw:
    runs: tuple  # ((Block, repeats), ...) in site order

    @property
    def n(self) -> int:
        return sum(b.size * r for b, r in self.runs)

    def layout(self):
        return tuple((b.size, r) for b, r in self.runs)

    def site_laws(self):
        """Per-site marginal laws, in order (one entry per run and offset)."""
        out = []
        for b, r in self.runs:
            for _ in range(r):
                for i in range(b.size):
                    out.append(b.marginal([i]))
        return out

    def dense(self) -> np.ndarray:
        law = np.ones(1)
        for b, r in self.runs:
            for _ in range(r):
                law = np.kron(law, b.law)
        return law

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        cols = []
        for b, r in self.runs:
            idx = rng.choice(b.law.size, size=(count, r), p=b.law)
            digs = index_to_digits(idx.ravel(), b.size, b.nx).reshape(count, r * b.size)
            cols.append(digs)
        return np.hstack(cols) if cols else np.zeros((count, 0), dtype=np.int64)

    def type_law(self, cap: int = TYPE_CAP):
        """Exact law of the type: (counts (T, |X|), natural-log masses (T,))."""
        nx = self.runs[0][0].nx
        counts = np.zeros((1, nx), dtype=np.int64)
        logp = np.zeros(1)
        grouped: dict = {}
        for b, r in self.runs:
            grouped.setdefault(b.key(), [b, 0])[1] += r
        for b, r in grouped.values():
            c, lp = _group_type_law(b, r, cap)
            tot = counts.shape[0] * c.shape[0]
            if tot > cap:
                raise CapacityError("type-law convolution exceeds the cap")
            new_c = (counts[:, None, :] + c[None, :, :]).reshape(-1, nx)
            new_l = (logp[:, None] + lp[None, :]).ravel()
            counts, logp = logsumexp_groups(new_c, new_l)
        return counts, logp


def _group_type_law(b: Block, r: int, cap: int):
    """Type law of r i.i.d. copies of block b, in closed form."""
    strs = b.strings()
    sup = np.flatnonzero(b.law > 0)
    vecs = np.stack([np.bincount(strs[s], minlength=b.nx) for s in sup])
    vals, inv = np.unique(vecs, axis=0, return_inverse=True)
    inv = inv.ravel()
    probs = np.zeros(vals.shape[0])
    np.add.at(probs, inv, b.law[sup])
    K = vals.shape[0]
    N = type_array(r, K, cap)
    lp = log_multinomial(N) + N @ np.log(probs)
    counts = N @ vals
    if K == b.nx and b.size == 1:
        return counts, lp
    return logsumexp_groups(counts, lp)


class ClassicalSource:
    """Mixture of block products on X^n."""

    def __init__(self, components: Sequence[tuple], kind: str = "custom"):
        ws = np.array([w for w, _ in components], dtype=np.float64)
        if np.any(ws < 0) or abs(ws.sum() - 1.0) > 1e-12:
            raise ValidationError("mixture weights must form a distribution")
        laws = [c for _, c in components]
        if len({c.n for c in laws}) != 1:
            raise DimensionError("components must have the same length")
        self.weights = ws
        self.components = tuple(laws)
        self.kind = kind
        self.n = laws[0].n
        self.nx = laws[0].runs[0][0].nx

    @classmethod
    def product(cls, runs, kind: str = "custom") -> "ClassicalSource":
        return cls([(1.0, ProductLaw(tuple(runs)))], kind)

    def type_law(self, cap: int = TYPE_CAP):
        parts_c, parts_l = [], []
        for w, c in zip(self.weights, self.components):
            if w <= 0:
                continue
            cc, ll = c.type_law(cap)
            parts_c.append(cc)
            parts_l.append(ll + math.log(w))
        return logsumexp_groups(np.vstack(parts_c), np.concatenate(parts_l))

    def dense(self) -> np.ndarray:
        if self.nx**self.n > 10**7:
            raise CapacityError("dense law too large")
        return sum(w * c.dense() for w, c in zip(self.weights, self.components))

    def as_string_distribution(self) -> StringDistribution:
        return StringDistribution.from_dense(self.nx, self.n, self.dense())

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        pick = rng.choice(len(self.components), size=count, p=self.weights)
        out = np.zeros((count, self.n), dtype=np.int64)
        for j, c in enumerate(self.components):
            sel = np.flatnonzero(pick == j)
            if sel.size:
                out[sel] = c.sample(rng, sel.size)
        return out

    def site_marginals(self) -> list:
        acc = None
        for w, c in zip(self.weights, self.components):
            laws = [w * s for s in c.site_laws()]
            acc = laws if acc is None else [a + b for a, b in zip(acc, laws)]
        return acc

    def marginal(self, sites: Sequence[int]) -> np.ndarray:
        """Dense law of the sites listed (sorted order)."""
        sites = sorted(set(int(s) for s in sites))
        out = 0.0
        for w, c in zip(self.weights, self.components):
            law = np.ones(1)
            pos = 0
            for b, r in c.runs:
                for _ in range(r):
                    inside = [s - pos for s in sites if pos <= s < pos + b.size]
                    if inside:
                        law = np.kron(law, b.marginal(inside))
                    pos += b.size
            out = out + w * law
        return out


@dataclass
class QuantumSource:
    """State on (C^d)^n, either diagonal in basis^{(x)n} with a classical
    structure, or an explicit dense matrix."""

    n: int
    d: int
    basis: np.ndarray | None = None
    classical: ClassicalSource | None = None
    matrix: np.ndarray | None = None
    kind: str = "custom"

    def is_diagonal(self) -> bool:
        return self.classical is not None

    def dense(self) -> qmat.DensityMatrix:
        if self.matrix is not None:
            return qmat.DensityMatrix(self.matrix, check=False)
        if self.d**self.n > DENSE_CAP:
            raise CapacityError("state too large for a dense matrix")
        U = qmat.kron_power(self.basis, self.n)
        m = (U * self.classical.dense()[None, :]) @ U.conj().T
        return qmat.DensityMatrix(m, check=False)


@dataclass
class SourceFamily:
    kind: str
    base: object
    builder: Callable[[int], object]
    params: dict = field(default_factory=dict)

    def at(self, n: int):
        return self.builder(n)

    @property
    def capabilities(self) -> set:
        return {"exact_marginals", "exact_type_probs", "sampler"}


def _probs(p) -> np.ndarray:
    return p.probs if isinstance(p, Distribution) else np.asarray(p, dtype=np.float64)


def iid_source(p, n: int) -> ClassicalSource:
    return ClassicalSource.product([(Block.site(p), n)], kind="iid")


def iid_family(p) -> SourceFamily:
    return SourceFamily("iid", p, lambda n: iid_source(p, n))


def make_defect_mixture(p, x0: int, n: int) -> ClassicalSource:
    """((1 - 1/sqrt n) p + (1/sqrt n) delta_x0)^{(x)n}."""
    v = _probs(p)
    if not 0 <= x0 < v.size:
        raise ValidationError("x0 outside the alphabet")
    lam = 1.0 / math.sqrt(n)
    site = (1.0 - lam) * v + lam * point_mass(x0, v.size).probs
    return ClassicalSource.product([(Block.site(site), n)], kind="defect_mixture")


def defect_mixture_family(p, x0: int = 0) -> SourceFamily:
    return SourceFamily("defect_mixture", p, lambda n: make_defect_mixture(p, x0, n), {"x0": x0})


def pair_block(p) -> Block:
    v = _probs(p)
    k = v.size
    law = np.zeros(k * k)
    law[np.arange(k) * k + np.arange(k)] = v
    return Block(2, law, k)


def make_paired_source(p, n: int) -> ClassicalSource:
    """Odd sites i.i.d. p, each even site a copy of its predecessor."""
    if n % 2:
        raise ValidationError("paired source needs even n")
    return ClassicalSource.product([(pair_block(p), n // 2)], kind="paired")


def paired_family(p) -> SourceFamily:
    return SourceFamily("paired", p, lambda n: make_paired_source(p, n))


def sigma_tilde_classical(r_diag, s_diag, n: int) -> ClassicalSource:
    """(1 - 1/n) s^{(x)n} + (1/n) r^{(x)n}."""
    a = ProductLaw(((Block.site(s_diag), n),))
    b = ProductLaw(((Block.site(r_diag), n),))
    return ClassicalSource([(1.0 - 1.0 / n, a), (1.0 / n, b)], kind="sigma_tilde_mixture")


def _common_basis(rho: qmat.DensityMatrix, sigma: qmat.DensityMatrix | None):
    """Basis diagonalising both states, or None."""
    if rho.is_diagonal() and (sigma is None or sigma.is_diagonal()):
        return np.eye(rho.dim, dtype=np.complex128)
    _, U = rho.eig()
    if sigma is None:
        return U
    s = U.conj().T @ sigma.matrix @ U
    if float(np.max(np.abs(s - np.diag(np.diag(s))))) < 1e-10:
        return U
    _, V = sigma.eig()
    r = V.conj().T @ rho.matrix @ V
    if float(np.max(np.abs(r - np.diag(np.diag(r))))) < 1e-10:
        return V
    return None


def _diag_in(U, state):
    return np.clip(np.real(np.diag(U.conj().T @ state.matrix @ U)), 0.0, None)


def make_gamma_eta_sigma(kind: str, rho: qmat.DensityMatrix | None, sigma: qmat.DensityMatrix | None, n: int) -> QuantumSource:
    """gamma_n = |1><1| (x) |0><0|^(n-1); eta_n with defect weight 1/n on
    site 1; sigma_tilde_n = (1 - 1/n) sigma^(n) + (1/n) rho^(n)."""
    if kind in ("gamma", "eta"):
        d = 2 if rho is None else rho.dim
        first = point_mass(1, d).probs if kind == "gamma" else (1.0 / n) * point_mass(1, d).probs + (1 - 1.0 / n) * point_mass(0, d).probs
        runs = [(Block.site(first), 1)]
        if n > 1:
            runs.append((Block.site(point_mass(0, d)), n - 1))
        cs = ClassicalSource.product(runs, kind=kind)
        return QuantumSource(n, d, np.eye(d, dtype=np.complex128), cs, kind=kind)
    if kind == "sigma_tilde":
        if rho is None or sigma is None or rho.dim != sigma.dim:
            raise ValidationError("sigma_tilde needs rho and sigma of equal dimension")
        U = _common_basis(rho, sigma)
        if U is not None:
            cs = sigma_tilde_classical(_diag_in(U, rho), _diag_in(U, sigma), n)
            return QuantumSource(n, rho.dim, U, cs, kind="sigma_tilde_mixture")
        if rho.dim**n > DENSE_CAP:
            raise CapacityError("non-commuting sigma_tilde beyond the dense cap")
        m = (1 - 1.0 / n) * qmat.kron_power(sigma, n) + (1.0 / n) * qmat.kron_power(rho, n)
        return QuantumSource(n, rho.dim, matrix=m, kind="sigma_tilde_mixture")
    raise ValidationError(f"unknown kind {kind!r}")


def iid_quantum(rho: qmat.DensityMatrix, n: int) -> QuantumSource:
    w, U = rho.eig()
    if rho.is_diagonal():
        U = np.eye(rho.dim, dtype=np.complex128)
        w = rho.diagonal()
    cs = iid_source(np.clip(w, 0, None) / np.clip(w, 0, None).sum(), n)
    return QuantumSource(n, rho.dim, U, cs, kind="iid")


def gamma_family(d: int = 2) -> SourceFamily:
    base = qmat.DensityMatrix.diag(point_mass(0, d).probs)
    return SourceFamily("gamma", base, lambda n: make_gamma_eta_sigma("gamma", base, None, n))


def permute_subsystems(m: np.ndarray, d: int, n: int, perm: Sequence[int]) -> np.ndarray:
    """U_pi M U_pi^dagger where subsystem i moves to position perm[i]."""
    perm = list(perm)
    if sorted(perm) != list(range(n)):
        raise ValidationError("perm must be a permutation of range(n)")
    inv = np.argsort(perm)
    t = m.reshape([d] * (2 * n))
    axes = list(inv) + [n + i for i in inv]
    return t.transpose(axes).reshape(d**n, d**n)


def make_msr_state(psi, n: int, r: int, perm: Sequence[int] | None = None, omega=None) -> qmat.DensityMatrix:
    """U_pi (omega (x) psi^{(x)(n-r)}) U_pi^dagger; defect sites come first.

    MSR by construction with the given r; r/n is the reported defect rate.
    """
    v = np.asarray(psi, dtype=np.complex128).ravel()
    v = v / np.linalg.norm(v)
    d = v.size
    if not 0 <= r <= n:
        raise ValidationError("need 0 <= r <= n")
    if d**n > DENSE_CAP:
        raise CapacityError("MSR state exceeds the dense cap")
    pure = np.outer(v, v.conj())
    if r:
        om = np.asarray(omega.matrix if isinstance(omega, qmat.DensityMatrix) else omega, dtype=np.complex128)
        if om.shape != (d**r, d**r):
            raise DimensionError("omega must act on r sites")
        m = np.kron(om, qmat.kron_power(pure, n - r))
    else:
        m = qmat.kron_power(pure, n)
    if perm is not None:
        m = permute_subsystems(m, d, n, perm)
    return qmat.DensityMatrix(m, check=False)


# ---------------------------------------------------------- channel processes


def flip_matrix(k: int = 2) -> np.ndarray:
    return np.roll(np.eye(k), 1, axis=1)


def replacement_matrix(k: int, y0: int = 0) -> np.ndarray:
    m = np.zeros((k, k))
    m[:, y0] = 1.0
    return m


def z_block() -> np.ndarray:
    """(x1, x2) -> (x1 + Z, x2 + Z) with Z a fair bit."""
    m = np.zeros((4, 4))
    for x in range(4):
        x1, x2 = divmod(x, 2)
        for z in (0, 1):
            m[x, ((x1 ^ z) << 1) | (x2 ^ z)] += 0.5
    return m


@dataclass
class ChannelProcess:
    kind: str
    base: np.ndarray
    builder: Callable[[int], object]
    params: dict = field(default_factory=dict)

    def at(self, n: int):
        return self.builder(n)

    def sample(self, n: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return self.at(n).sample(x, rng)


def make_channel_process(kind: str, W=None, **params) -> ChannelProcess:
    """iid, single_site_defect (F on one site, W elsewhere), mixture
    ((1 - 1/n) W^n + (1/n) R^n) or z_correlated."""
    if kind == "z_correlated":
        base = np.full((2, 2), 0.5)

        def build(n):
            blocks = [(2, z_block())] * (n // 2)
            if n % 2:
                blocks.append((1, base))
            return BlockChannel(blocks, 2, 2)

        return ChannelProcess(kind, base, build, params)
    if W is None:
        raise ValidationError("base channel W required")
    W = np.asarray(W, dtype=np.float64)
    nx, ny = W.shape
    if kind == "iid":
        return ChannelProcess(kind, W, lambda n: BlockChannel.iid(W, n), params)
    if kind == "single_site_defect":
        F = np.asarray(params.get("F", flip_matrix(nx) if nx == ny else replacement_matrix(ny)), dtype=np.float64)
        site = int(params.get("site", 0))

        def build(n):
            mats = [W] * n
            mats[min(site, n - 1)] = F
            return BlockChannel.sites(mats)

        return ChannelProcess(kind, W, build, {"F": F, "site": site})
    if kind == "mixture":
        R = np.asarray(params.get("R", replacement_matrix(ny, int(params.get("y0", 0)))), dtype=np.float64)

        def build(n):
            return MixtureChannel([(1.0 - 1.0 / n, BlockChannel.iid(W, n)), (1.0 / n, BlockChannel.iid(R, n))])

        return ChannelProcess(kind, W, build, {"R": R})
    if kind == "custom":
        fn = params["builder"]
        return ChannelProcess(kind, W, fn, params)
    raise ValidationError(f"unknown channel process kind {kind!r}")


def channel_output_source(ch, x: Sequence[int]) -> ClassicalSource:
    """Output law of a block or mixture channel on a fixed input string."""
    x = list(x)

    def product_of(bc: BlockChannel):
        runs = []
        pos = 0
        for size, m in bc.blocks:
            xi = 0
            for s in x[pos : pos + size]:
                xi = xi * bc.nx + int(s)
            runs.append((Block(size, m[xi].copy(), bc.ny), 1))
            pos += size
        return ProductLaw(tuple(runs))

    if isinstance(ch, BlockChannel):
        return ClassicalSource([(1.0, product_of(ch))])
    if isinstance(ch, MixtureChannel):
        return ClassicalSource([(w, product_of(c)) for w, c in zip(ch.weights, ch.components)])
    if isinstance(ch, DenseChannel):
        raise CapabilityError("dense channels have no block structure")
    raise CapabilityError("unsupported channel type")


# ------------------------------------------------------------ verifiers


def _tv(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.abs(a - b).sum())


def _patterns(size: int):
    return [c for k in range(1, size + 1) for c in itertools.combinations(range(size), k)]


def _exact_subset_average(src: ClassicalSource, base: np.ndarray, k: int) -> float | None:
    """E over uniform k-subsets of TV(marginal, base^k), exact when every
    component shares one run layout."""
    layouts = {c.layout() for c in src.components}
    if len(layouts) != 1:
        return None
    # the base is permutation invariant, so run positions carrying the same
    # block in every component can be pooled
    pooled: dict = {}
    for ri in range(len(src.components[0].runs)):
        blocks = tuple(c.runs[ri][0] for c in src.components)
        key = tuple(b.key() for b in blocks)
        pooled.setdefault(key, [blocks, 0])[1] += src.components[0].runs[ri][1]
    pooled_runs = list(pooled.values())
    layout = [(blocks[0].size, reps) for blocks, reps in pooled_runs]
    n = src.n
    total_log = math.log(math.comb(n, k))
    target = np.ones(1)
    for _ in range(k):
        target = np.kron(target, base)

    run_options = []
    for ri, (bsize, reps) in enumerate(layout):
        pats = _patterns(bsize)
        opts = []
        for a in itertools.product(range(k + 1), repeat=len(pats)):
            used = sum(ai * len(p) for ai, p in zip(a, pats))
            nblocks = sum(a)
            if used > k or nblocks > reps:
                continue
            logw = math.lgamma(reps + 1) - math.lgamma(reps - nblocks + 1) - sum(math.lgamma(ai + 1) for ai in a)
            factors = []
            for blk in pooled_runs[ri][0]:
                law = np.ones(1)
                for ai, p in zip(a, pats):
                    m = blk.marginal(list(p))
                    for _ in range(ai):
                        law = np.kron(law, m)
                factors.append(law)
            opts.append((used, logw, factors))
        run_options.append(opts)

    acc = 0.0

    def rec(ri, left, logw, laws):
        nonlocal acc
        if ri == len(run_options):
            if left == 0:
                mix = sum(w * l for w, l in zip(src.weights, laws))
                acc += math.exp(logw - total_log) * _tv(mix, target)
            return
        for used, lw, factors in run_options[ri]:
            if used <= left:
                rec(ri + 1, left - used, logw + lw, [np.kron(a, b) for a, b in zip(laws, factors)])

    rec(0, k, 0.0, [np.ones(1)] * len(src.components))
    return acc


def weak_aiid_deviation(src, base, n: int | None = None, k: int = 1, trials: int = 2000, seed: int = 0):
    """Average over uniformly random k-subsets I of the trace distance
    between the I-marginal and base^{(x)k}. Returns (estimate, stderr);
    stderr is 0 when the average is computed exactly."""
    if isinstance(src, SourceFamily):
        src = src.at(n)
    if isinstance(src, QuantumSource):
        return _weak_quantum(src, base, k, trials, seed)
    if not isinstance(src, ClassicalSource):
        raise CapabilityError("unsupported source object")
    b = _probs(base)
    if not 1 <= k <= src.n:
        raise ValidationError("need 1 <= k <= n")
    exact = _exact_subset_average(src, b, k)
    if exact is not None:
        return exact, 0.0
    target = b
    for _ in range(k - 1):
        target = np.kron(target, b)
    if math.comb(src.n, k) <= SUBSET_CAP:
        vals = [_tv(src.marginal(I), target) for I in itertools.combinations(range(src.n), k)]
        return float(np.mean(vals)), 0.0
    rng = np.random.default_rng(seed)
    vals = np.array([_tv(src.marginal(rng.choice(src.n, size=k, replace=False)), target) for _ in range(trials)])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(trials))


def _weak_quantum(src: QuantumSource, base, k, trials, seed):
    base_m = base if isinstance(base, qmat.DensityMatrix) else qmat.DensityMatrix(base)
    if src.is_diagonal():
        s = src.basis.conj().T @ base_m.matrix @ src.basis
        if float(np.max(np.abs(s - np.diag(np.diag(s))))) < 1e-10:
            return weak_aiid_deviation(src.classical, np.real(np.diag(s)), k=k, trials=trials, seed=seed)
    rho = src.dense()
    target = qmat.kron_power(base_m, k)
    vals = []
    subsets = list(itertools.combinations(range(src.n), k))
    for I in subsets:
        red = qmat.partial_trace(rho, [src.d] * src.n, I)
        vals.append(qmat.trace_distance(red, target))
    return float(np.mean(vals)), 0.0


def w1_aiid_deviation(src, base, n: int | None = None):
    """(1/n) W1(rho_n, base^{(x)n}): a float when exact, a (lower, upper)
    bracket otherwise."""
    if isinstance(src, SourceFamily):
        src = src.at(n)
    if isinstance(src, QuantumSource):
        base_m = base if isinstance(base, qmat.DensityMatrix) else qmat.DensityMatrix(base)
        if src.is_diagonal():
            s = src.basis.conj().T @ base_m.matrix @ src.basis
            if float(np.max(np.abs(s - np.diag(np.diag(s))))) < 1e-10:
                return w1_aiid_deviation(src.classical, np.real(np.diag(s)))
        rho = src.dense()
        td = qmat.trace_distance(rho, qmat.kron_power(base_m, src.n))
        return (td / src.n, td)
    b = _probs(base)
    n = src.n
    if len(src.components) == 1:
        # W1 is additive over independent blocks under Hamming cost
        total = 0.0
        for blk, reps in src.components[0].runs:
            target = np.ones(1)
            for _ in range(blk.size):
                target = np.kron(target, b)
            total += reps * _block_w1(blk, target)
        return total / n
    if src.nx**n <= 10**6:
        p = src.as_string_distribution()
        q = iid_source(b, n).as_string_distribution()
        if len(p) + len(q) <= LP_CAP:
            return w1_hamming(p, q)[0] / n
    lower = sum(_tv(m, b) for m in src.site_marginals())
    upper = sum(w * w1_aiid_deviation(ClassicalSource([(1.0, c)]), b) * n for w, c in zip(src.weights, src.components))
    return (lower / n, upper / n)


def _block_w1(blk: Block, target: np.ndarray) -> float:
    if blk.size == 1:
        return _tv(blk.law, target)
    strs = blk.strings()
    ia, ib = np.flatnonzero(blk.law > 0), np.flatnonzero(target > 0)
    val, _ = transportation_simplex(blk.law[ia], target[ib], hamming_matrix(strs[ia], strs[ib]))
    return val


def trace_deviation(src: QuantumSource, base: qmat.DensityMatrix) -> float:
    """Trace distance between rho_n and base^{(x)n}."""
    if src.is_diagonal():
        s = src.basis.conj().T @ base.matrix @ src.basis
        if float(np.max(np.abs(s - np.diag(np.diag(s))))) < 1e-10:
            return _classical_product_tv(src.classical, np.real(np.diag(s)))
    return qmat.trace_distance(src.dense(), qmat.kron_power(base, src.n))


def _classical_product_tv(src: ClassicalSource, b: np.ndarray) -> float:
    if src.nx**src.n <= 10**6:
        return _tv(src.dense(), iid_source(b, src.n).dense())
    if len(src.components) == 1:
        # sites equal to the base cancel: TV(A x B, C x B) = TV(A, C)
        rest = [(blk, r) for blk, r in src.components[0].runs if not (blk.size == 1 and np.array_equal(blk.law, b))]
        m = sum(blk.size * r for blk, r in rest)
        if m == 0:
            return 0.0
        if src.nx**m <= 10**6:
            return _tv(ProductLaw(tuple(rest)).dense(), iid_source(b, m).dense())
    raise CapabilityError("trace deviation needs a dense or near-product source")
