"""Transport distances on Hamming space.

Exact W1 between string distributions via a transportation simplex, the
quantum W1 sandwich, entropy continuity, and the club distance between
classical channels on strings.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import CapabilityError, CapacityError, DimensionError, ValidationError
from .prob_core import Distribution, binary_entropy, total_variation

LP_CAP = 5000
EXHAUSTIVE_CAP = 10**5
DIAG_TOL = 1e-12


# ------------------------------------------------------------- strings


def index_to_digits(idx: np.ndarray, n: int, base: int) -> np.ndarray:
    """Row-major digits of flat indices; site 0 is the most significant."""
    idx = np.asarray(idx, dtype=np.int64)
    out = np.zeros((idx.size, n), dtype=np.int64)
    rest = idx.copy()
    for i in range(n - 1, -1, -1):
        out[:, i] = rest % base
        rest //= base
    return out


def digits_to_index(strings: np.ndarray, base: int) -> np.ndarray:
    s = np.atleast_2d(np.asarray(strings, dtype=np.int64))
    out = np.zeros(s.shape[0], dtype=np.int64)
    for i in range(s.shape[1]):
        out = out * base + s[:, i]
    return out


class StringDistribution:
    """Sparse law on X^n: distinct strings (S, n) with probabilities (S,)."""

    __slots__ = ("size", "n", "strings", "probs")

    def __init__(self, size: int, n: int, strings, probs, tol: float = 1e-10):
        s = np.asarray(strings, dtype=np.int64).reshape(-1, n)
        p = np.asarray(probs, dtype=np.float64).ravel()
        if s.shape[0] != p.size:
            raise DimensionError("strings and probabilities differ in length")
        if np.any(p < 0) or abs(p.sum() - 1.0) > tol:
            raise ValidationError("probabilities must be non-negative and sum to 1")
        if s.size and (s.min() < 0 or s.max() >= size):
            raise ValidationError("symbol out of range")
        keep = p > 0
        s, p = s[keep], p[keep]
        # merge duplicates, canonical lexicographic order
        key = digits_to_index(s, size) if n <= 40 else None
        if key is not None:
            uniq, inv = np.unique(key, return_inverse=True)
            merged = np.zeros(uniq.size)
            np.add.at(merged, inv, p)
            s = index_to_digits(uniq, n, size)
            p = merged
        object.__setattr__(self, "size", int(size))
        object.__setattr__(self, "n", int(n))
        s.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "strings", s)
        object.__setattr__(self, "probs", p)

    def __setattr__(self, key, value):
        raise AttributeError("StringDistribution is immutable")

    @classmethod
    def from_dense(cls, size: int, n: int, law) -> "StringDistribution":
        law = np.asarray(law, dtype=np.float64).ravel()
        if law.size != size**n:
            raise DimensionError("dense law has the wrong length")
        idx = np.flatnonzero(law > 0)
        return cls(size, n, index_to_digits(idx, n, size), law[idx])

    @classmethod
    def point(cls, string: Sequence[int], size: int) -> "StringDistribution":
        s = np.asarray(string, dtype=np.int64)
        return cls(size, s.size, s[None, :], [1.0])

    @classmethod
    def product(cls, sites: Sequence[Distribution]) -> "StringDistribution":
        size = sites[0].size
        law = np.ones(1)
        for d in sites:
            if d.size != size:
                raise DimensionError("sites must share the alphabet")
            law = np.kron(law, d.probs)
        return cls.from_dense(size, len(sites), law)

    def dense(self) -> np.ndarray:
        if self.size**self.n > 10**7:
            raise CapacityError("dense law too large")
        out = np.zeros(self.size**self.n)
        out[digits_to_index(self.strings, self.size)] = self.probs
        return out

    def as_dict(self) -> dict:
        return {tuple(s): float(p) for s, p in zip(self.strings.tolist(), self.probs)}

    def __len__(self):
        return self.probs.size


@dataclass(frozen=True)
class Coupling:
    """Joint law with support triples (first string, second string, mass)."""

    first: np.ndarray
    second: np.ndarray
    mass: np.ndarray

    def cost(self) -> float:
        return float(np.sum(self.mass * np.count_nonzero(self.first != self.second, axis=1)))

    def marginals(self, size: int):
        n = self.first.shape[1]
        a = StringDistribution(size, n, self.first, self.mass, tol=1e-8)
        b = StringDistribution(size, n, self.second, self.mass, tol=1e-8)
        return a, b


def hamming_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.count_nonzero(a[:, None, :] != b[None, :, :], axis=2).astype(np.float64)


# ------------------------------------------------------ transport simplex


def transportation_simplex(supply, demand, cost):
    """Minimum-cost flow on the complete bipartite graph; (value, flow)."""
    s = np.asarray(supply, dtype=np.float64)
    d = np.asarray(demand, dtype=np.float64)
    if abs(s.sum() - d.sum()) > 1e-9:
        raise ValidationError("supply and demand totals differ")
    val, flow, _ = kernels.transport_simplex(s, d, np.asarray(cost, dtype=np.float64))
    return val, flow


def w1_hamming(p: StringDistribution, q: StringDistribution, cap: int = LP_CAP):
    """Exact W1 under Hamming cost with an optimal coupling."""
    if p.size != q.size or p.n != q.n:
        raise DimensionError("string distributions must share alphabet and length")
    if len(p) + len(q) > cap:
        raise CapacityError(f"combined support {len(p) + len(q)} exceeds {cap}; use a structured fast path")
    # for a metric cost the common mass min(p, q) can stay put; only the
    # positive and negative parts of p - q are transported
    keys = np.vstack([p.strings, q.strings])
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.ravel()
    pa = np.zeros(uniq.shape[0])
    qa = np.zeros(uniq.shape[0])
    np.add.at(pa, inv[: len(p)], p.probs)
    np.add.at(qa, inv[len(p) :], q.probs)
    common = np.minimum(pa, qa)
    src = np.flatnonzero(pa - common > 1e-15)
    dst = np.flatnonzero(qa - common > 1e-15)
    first = [uniq[common > 0]]
    second = [uniq[common > 0]]
    mass = [common[common > 0]]
    val = 0.0
    if src.size and dst.size:
        C = hamming_matrix(uniq[src], uniq[dst])
        val, flow = transportation_simplex((pa - common)[src], (qa - common)[dst], C)
        ii, jj = np.nonzero(flow > 0)
        first.append(uniq[src[ii]])
        second.append(uniq[dst[jj]])
        mass.append(flow[ii, jj])
    coupling = Coupling(np.vstack(first), np.vstack(second), np.concatenate(mass))
    return val, coupling


def w1_product_fastpath(site_pairs: Sequence[tuple]) -> float:
    return float(sum(total_variation(a, b) for a, b in site_pairs))


def string_total_variation(p: StringDistribution, q: StringDistribution) -> float:
    a, b = p.as_dict(), q.as_dict()
    keys = set(a) | set(b)
    return 0.5 * sum(abs(a.get(x, 0.0) - b.get(x, 0.0)) for x in keys)


# ------------------------------------------------------------ quantum W1


def local_dim(total: int, n: int) -> int:
    d = round(total ** (1.0 / n))
    for cand in (d - 1, d, d + 1):
        if cand >= 1 and cand**n == total:
            return cand
    raise DimensionError(f"dimension {total} does not factor as d^{n}")


def _diag_if_classical(m: np.ndarray):
    off = m - np.diag(np.diag(m))
    if m.shape[0] == 1 or float(np.max(np.abs(off))) < DIAG_TOL:
        return np.clip(np.real(np.diag(m)), 0.0, None)
    return None


def quantum_w1_sandwich(rho, sigma, n: int):
    """(lower, upper, exact) with lower = trace distance, upper = n times it;
    exact is the classical W1 when both states are diagonal."""
    from .qmat import trace_distance, _as_matrix

    a, b = _as_matrix(rho), _as_matrix(sigma)
    if a.shape != b.shape:
        raise DimensionError("state dimensions differ")
    d = local_dim(a.shape[0], n)
    td = trace_distance(a, b)
    exact = None
    da, db = _diag_if_classical(a), _diag_if_classical(b)
    if da is not None and db is not None:
        pa = StringDistribution.from_dense(d, n, da / da.sum())
        pb = StringDistribution.from_dense(d, n, db / db.sum())
        try:
            exact = w1_hamming(pa, pb)[0]
        except CapacityError:
            exact = None
    return td, n * td, exact


def entropy_continuity_bound(w: float, d: int, base: str | float = "e") -> float:
    """h2(w) + w ln(d^2 - 1), w being the normalised W1 distance."""
    if not 0.0 <= w <= 1.0:
        raise ValidationError("w must lie in [0, 1]")
    val = binary_entropy(w, "e") + (w * math.log(d * d - 1) if d > 1 else 0.0)
    return val if base in ("e", math.e) else val / math.log(base)


# ------------------------------------------------------- string channels


class StringChannel:
    """Classical channel X^n -> Y^n."""

    n: int
    nx: int
    ny: int

    def output(self, x: Sequence[int]) -> StringDistribution:
        raise NotImplementedError

    def dense(self) -> np.ndarray:
        total_in = self.nx**self.n
        if total_in > EXHAUSTIVE_CAP or self.ny**self.n > EXHAUSTIVE_CAP:
            raise CapacityError("channel too large for a dense table")
        out = np.zeros((total_in, self.ny**self.n))
        for idx, x in enumerate(itertools.product(range(self.nx), repeat=self.n)):
            o = self.output(x)
            out[idx, digits_to_index(o.strings, self.ny)] = o.probs
        return out

    def sample(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Outputs for a batch of inputs (T, n)."""
        raise NotImplementedError


def _check_stochastic(m: np.ndarray, tol: float = 1e-12):
    if np.any(m < -tol) or np.max(np.abs(m.sum(axis=1) - 1.0)) > tol * max(1, m.shape[1]):
        raise ValidationError("channel matrix must be row-stochastic")


class BlockChannel(StringChannel):
    """Product of channels acting on consecutive blocks of sites."""

    def __init__(self, blocks: Sequence[tuple], nx: int, ny: int):
        bl = []
        for size, mat in blocks:
            m = np.asarray(mat, dtype=np.float64)
            if m.shape != (nx**size, ny**size):
                raise DimensionError("block matrix shape mismatch")
            _check_stochastic(m)
            bl.append((int(size), m))
        self.blocks = tuple(bl)
        self.nx, self.ny = nx, ny
        self.n = sum(s for s, _ in bl)

    @classmethod
    def sites(cls, mats: Sequence) -> "BlockChannel":
        m0 = np.asarray(mats[0])
        return cls([(1, m) for m in mats], m0.shape[0], m0.shape[1])

    @classmethod
    def iid(cls, W, n: int) -> "BlockChannel":
        return cls.sites([np.asarray(W, dtype=np.float64)] * n)

    def partition(self):
        return tuple(s for s, _ in self.blocks)

    def is_deterministic(self) -> bool:
        return all(np.all((m == 0) | (m == 1)) for _, m in self.blocks)

    def output(self, x):
        law = np.ones(1)
        pos = 0
        for size, m in self.blocks:
            xi = int(digits_to_index(np.asarray(x[pos : pos + size])[None, :], self.nx)[0])
            law = np.kron(law, m[xi])
            pos += size
        return StringDistribution.from_dense(self.ny, self.n, law)

    def sample(self, x, rng):
        x = np.atleast_2d(x)
        out = np.zeros_like(x)
        pos = 0
        for size, m in self.blocks:
            xi = digits_to_index(x[:, pos : pos + size], self.nx)
            cdf = np.cumsum(m[xi], axis=1)
            u = rng.random(x.shape[0])[:, None]
            yi = np.minimum((u > cdf).sum(axis=1), m.shape[1] - 1)
            out[:, pos : pos + size] = index_to_digits(yi, size, self.ny)
            pos += size
        return out


class MixtureChannel(StringChannel):
    """Convex combination of block channels on a common partition."""

    def __init__(self, components: Sequence[tuple]):
        ws = np.array([w for w, _ in components], dtype=np.float64)
        if np.any(ws < 0) or abs(ws.sum() - 1.0) > 1e-12:
            raise ValidationError("mixture weights must form a distribution")
        chans = [c for _, c in components]
        if len({(c.n, c.nx, c.ny) for c in chans}) != 1:
            raise DimensionError("mixture components must share shapes")
        self.weights = ws
        self.components = tuple(chans)
        self.n, self.nx, self.ny = chans[0].n, chans[0].nx, chans[0].ny

    def output(self, x):
        acc = {}
        for w, c in zip(self.weights, self.components):
            if w == 0:
                continue
            for s, p in c.output(x).as_dict().items():
                acc[s] = acc.get(s, 0.0) + w * p
        keys = sorted(acc)
        return StringDistribution(self.ny, self.n, np.array(keys), [acc[k] for k in keys])

    def sample(self, x, rng):
        x = np.atleast_2d(x)
        pick = rng.choice(len(self.components), size=x.shape[0], p=self.weights)
        out = np.zeros_like(x)
        for j, c in enumerate(self.components):
            sel = pick == j
            if np.any(sel):
                out[sel] = c.sample(x[sel], rng)
        return out


class DenseChannel(StringChannel):
    def __init__(self, n: int, nx: int, ny: int, matrix):
        m = np.asarray(matrix, dtype=np.float64)
        if m.shape != (nx**n, ny**n):
            raise DimensionError("dense channel shape mismatch")
        _check_stochastic(m)
        self.n, self.nx, self.ny, self.matrix = n, nx, ny, m

    def output(self, x):
        xi = int(digits_to_index(np.asarray(x)[None, :], self.nx)[0])
        return StringDistribution.from_dense(self.ny, self.n, self.matrix[xi])

    def dense(self):
        return self.matrix

    def sample(self, x, rng):
        x = np.atleast_2d(x)
        xi = digits_to_index(x, self.nx)
        cdf = np.cumsum(self.matrix[xi], axis=1)
        u = rng.random(x.shape[0])[:, None]
        yi = np.minimum((u > cdf).sum(axis=1), self.matrix.shape[1] - 1)
        return index_to_digits(yi, self.n, self.ny)


def _as_blocks(ch):
    """Mixture view: list of (weight, BlockChannel) or None."""
    if isinstance(ch, BlockChannel):
        return [(1.0, ch)]
    if isinstance(ch, MixtureChannel) and all(isinstance(c, BlockChannel) for c in ch.components):
        return [(w, c) for w, c in zip(ch.weights, ch.components) if w > 0]
    return None


def _block_inputs(size: int, nx: int):
    return np.array(list(itertools.product(range(nx), repeat=size)), dtype=np.int64).reshape(-1, size)


def _block_pair_w1(size, ma, mb, nx, ny):
    """max over block inputs of W1 between the two block outputs."""
    outs = _block_inputs(size, ny)
    best = 0.0
    for xi in range(nx**size):
        pa, pb = ma[xi], mb[xi]
        ia, ib = np.flatnonzero(pa > 0), np.flatnonzero(pb > 0)
        if size == 1:
            val = 0.5 * float(np.abs(pa - pb).sum())
        else:
            val, _ = transportation_simplex(pa[ia], pb[ib], hamming_matrix(outs[ia], outs[ib]))
        best = max(best, val)
    return best


def club_distance(ch_a: StringChannel, ch_b: StringChannel, cap: int = EXHAUSTIVE_CAP) -> float:
    """max over inputs of the Hamming W1 distance between output laws."""
    if (ch_a.n, ch_a.nx, ch_a.ny) != (ch_b.n, ch_b.nx, ch_b.ny):
        raise DimensionError("channels must share n and alphabets")
    fast = _club_fastpath(ch_a, ch_b)
    if fast is not None:
        return fast
    if ch_a.nx**ch_a.n > cap:
        raise CapabilityError("unstructured channel pair above the exhaustive cap")
    return club_distance_exhaustive(ch_a, ch_b)


def club_distance_exhaustive(ch_a: StringChannel, ch_b: StringChannel) -> float:
    best = 0.0
    for x in itertools.product(range(ch_a.nx), repeat=ch_a.n):
        val, _ = w1_hamming(ch_a.output(x), ch_b.output(x))
        best = max(best, val)
    return best


def _club_fastpath(ch_a, ch_b):
    A, B = _as_blocks(ch_a), _as_blocks(ch_b)
    if A is None or B is None:
        return None
    parts = {c.partition() for _, c in A + B}
    if len(parts) != 1:
        return None
    nx, ny = ch_a.nx, ch_a.ny
    if len(A) == 1 and len(B) == 1:
        # product outputs: W1 is additive over blocks and so is the max
        return float(
            sum(_block_pair_w1(s, ma, mb, nx, ny) for (s, ma), (_, mb) in zip(A[0][1].blocks, B[0][1].blocks))
        )
    # mixture against a deterministic product: W1(mu, point a) = E_mu d_H(y, a)
    for mix, det in ((A, B), (B, A)):
        if len(det) == 1 and det[0][1].is_deterministic():
            D = det[0][1]
            total = 0.0
            for bi, (size, md) in enumerate(D.blocks):
                outs = _block_inputs(size, ny)
                target = np.argmax(md, axis=1)
                dist = np.count_nonzero(outs[None, :, :] != outs[target][:, None, :], axis=2)
                expected = np.zeros(nx**size)
                for w, c in mix:
                    expected += w * np.sum(c.blocks[bi][1] * dist, axis=1)
                total += float(expected.max())
            return total
    return None


def diamond_distance_classical(ch_a: StringChannel, ch_b: StringChannel) -> float:
    """Half the diamond norm; for classical channels the max-input TV."""
    if (ch_a.n, ch_a.nx, ch_a.ny) != (ch_b.n, ch_b.nx, ch_b.ny):
        raise DimensionError("channels must share n and alphabets")
    da, db = ch_a.dense(), ch_b.dense()
    return float(0.5 * np.abs(da - db).sum(axis=1).max())


def club_vs_diamond_check(ch_a: StringChannel, ch_b: StringChannel, tol: float = 1e-9) -> bool:
    return club_distance(ch_a, ch_b) <= ch_a.n * diamond_distance_classical(ch_a, ch_b) + tol


# ------------------------------------------------------ noise decomposition


@dataclass(frozen=True)
class NoiseChannelDecomposition:
    """Conditional law phi(noisy | clean) as {clean: {noisy: prob}}."""

    table: dict

    def apply(self, base: StringDistribution) -> dict:
        out = {}
        for y, p in base.as_dict().items():
            for yt, phi in self.table.get(y, {}).items():
                out[yt] = out.get(yt, 0.0) + phi * p
        return out


def coupling_to_noise_channel(coupling: Coupling, base: StringDistribution, tol: float = 1e-10) -> NoiseChannelDecomposition:
    """Phi(noisy | clean) = pi(noisy, clean) / base(clean)."""
    b = base.as_dict()
    second = {}
    for y, m in zip(map(tuple, coupling.second.tolist()), coupling.mass):
        second[y] = second.get(y, 0.0) + float(m)
    for y in set(b) | set(second):
        if abs(b.get(y, 0.0) - second.get(y, 0.0)) > tol:
            raise ValidationError("coupling's second marginal does not match the base law")
    table: dict = {}
    for yt, y, m in zip(map(tuple, coupling.first.tolist()), map(tuple, coupling.second.tolist()), coupling.mass):
        if b.get(y, 0.0) <= 0:
            continue
        row = table.setdefault(y, {})
        row[yt] = row.get(yt, 0.0) + float(m) / b[y]
    return NoiseChannelDecomposition(table)
