"""Finite-alphabet probability, entropies and the method of types.

All information quantities are in bits unless a ``base`` argument says
otherwise; ``to_bits`` / ``to_nats`` convert.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .errors import CapacityError, DimensionError, ValidationError

LN2 = math.log(2.0)
TYPE_CAP = 10**7
PROB_TOL = 1e-12


def to_bits(x_nats: float) -> float:
    return x_nats / LN2


def to_nats(x_bits: float) -> float:
    return x_bits * LN2


@dataclass(frozen=True)
class Alphabet:
    size: int

    def __post_init__(self):
        if int(self.size) < 1:
            raise ValidationError("alphabet size must be >= 1")


class Distribution:
    """Probability vector on {0, ..., |X|-1}. Immutable."""

    __slots__ = ("probs",)

    def __init__(self, probs: Iterable[float], tol: float = PROB_TOL):
        arr = np.array(list(probs) if not isinstance(probs, np.ndarray) else probs, dtype=np.float64).ravel()
        if arr.size < 1:
            raise ValidationError("empty distribution")
        if np.any(~np.isfinite(arr)) or np.any(arr < 0):
            raise ValidationError("probabilities must be finite and non-negative")
        if abs(float(arr.sum()) - 1.0) > tol:
            raise ValidationError(f"probabilities sum to {float(arr.sum()):.12g}, not 1")
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def __setattr__(self, key, value):
        raise AttributeError("Distribution is immutable")

    @property
    def size(self) -> int:
        return int(self.probs.size)

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(self.size)

    def __len__(self):
        return self.size

    def __getitem__(self, i):
        return float(self.probs[i])

    def __repr__(self):
        return f"Distribution({self.probs.tolist()!r})"

    def __eq__(self, other):
        return isinstance(other, Distribution) and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash(self.probs.tobytes())

    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)


def bernoulli(a: float) -> Distribution:
    """Law on {0, 1} with P(1) = a."""
    return Distribution([1.0 - a, a])


def uniform(k: int) -> Distribution:
    return Distribution(np.full(k, 1.0 / k))


def point_mass(x: int, k: int) -> Distribution:
    v = np.zeros(k)
    v[x] = 1.0
    return Distribution(v)


def _same_alphabet(p: Distribution, q: Distribution):
    if p.size != q.size:
        raise DimensionError(f"alphabet sizes differ: {p.size} vs {q.size}")


def shannon_entropy(p: Distribution, base: float | str = 2) -> float:
    v = p.probs[p.probs > 0]
    h = -float(np.sum(v * np.log(v)))
    h = max(h, 0.0)
    return h if base in ("e", math.e) else h / math.log(base)


def binary_entropy(w: float, base: float | str = 2) -> float:
    if not 0.0 <= w <= 1.0:
        raise ValidationError("w must lie in [0, 1]")
    if w in (0.0, 1.0):
        return 0.0
    h = -w * math.log(w) - (1 - w) * math.log(1 - w)
    return h if base in ("e", math.e) else h / math.log(base)


def relative_entropy(p: Distribution, q: Distribution, base: float | str = 2) -> float:
    _same_alphabet(p, q)
    mask = p.probs > 0
    if np.any(q.probs[mask] == 0):
        return math.inf
    pv, qv = p.probs[mask], q.probs[mask]
    d = max(float(np.sum(pv * (np.log(pv) - np.log(qv)))), 0.0)
    return d if base in ("e", math.e) else d / math.log(base)


def total_variation(p: Distribution, q: Distribution) -> float:
    _same_alphabet(p, q)
    return 0.5 * float(np.sum(np.abs(p.probs - q.probs)))


# ---------------------------------------------------------------- types


@dataclass(frozen=True)
class TypeVector:
    counts: tuple

    def __post_init__(self):
        c = tuple(int(x) for x in self.counts)
        if not c or any(x < 0 for x in c) or sum(c) < 1:
            raise ValidationError("type counts must be non-negative and sum to n >= 1")
        object.__setattr__(self, "counts", c)

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def size(self) -> int:
        return len(self.counts)

    def as_distribution(self) -> Distribution:
        return Distribution(np.array(self.counts, dtype=np.float64) / self.n)

    def frequencies(self) -> np.ndarray:
        return np.array(self.counts, dtype=np.float64) / self.n


def num_types(n: int, size: int) -> int:
    return math.comb(n + size - 1, size - 1)


def type_array(n: int, size: int, cap: int = TYPE_CAP) -> np.ndarray:
    """All n-types over an alphabet of the given size, as an int64 array
    of shape (count, size), in reverse-lexicographic order."""
    if n < 0 or size < 1:
        raise ValidationError("need n >= 0 and size >= 1")
    count = num_types(n, size)
    if count > cap:
        raise CapacityError(f"{count} types exceed the cap {cap}")
    # bottom-up over trailing coordinates: level[s] holds every type of the
    # last j symbols summing to s
    level = [np.array([[s]], dtype=np.int64) for s in range(n + 1)]
    for j in range(2, size + 1):
        sums = range(n, n + 1) if j == size else range(n + 1)
        nxt = [None] * (n + 1)
        for s in sums:
            parts = [
                np.concatenate([np.full((level[s - f].shape[0], 1), f, dtype=np.int64), level[s - f]], axis=1)
                for f in range(s, -1, -1)
            ]
            nxt[s] = np.concatenate(parts, axis=0)
        level = nxt
    return level[n]


def enumerate_types(n: int, alphabet: Alphabet | int, cap: int = TYPE_CAP) -> list[TypeVector]:
    if n < 1:
        raise ValidationError("n must be >= 1")
    size = alphabet.size if isinstance(alphabet, Alphabet) else int(alphabet)
    return [TypeVector(tuple(row)) for row in type_array(n, size, cap).tolist()]


def type_of(x: Sequence[int], size: int) -> TypeVector:
    arr = np.asarray(x, dtype=np.int64).ravel()
    if arr.size == 0:
        raise ValidationError("empty string")
    if arr.min() < 0 or arr.max() >= size:
        raise ValidationError("symbol out of range")
    return TypeVector(tuple(np.bincount(arr, minlength=size).tolist()))


def type_class_size(t: TypeVector) -> int:
    """Exact multinomial n! / prod (n t(x))!."""
    out = 1
    left = t.n
    for c in t.counts:
        out *= math.comb(left, c)
        left -= c
    return out


_LOGFACT = np.zeros(1)


def log_factorials(n: int) -> np.ndarray:
    """Table of ln k! for k = 0..n (grown on demand, entries from lgamma)."""
    global _LOGFACT
    if _LOGFACT.size <= n:
        size = max(n + 1, 2 * _LOGFACT.size)
        _LOGFACT = np.array([math.lgamma(k + 1.0) for k in range(size)])
    return _LOGFACT


def log_multinomial(counts) -> np.ndarray | float:
    """Natural log of n!/prod c! for a count vector or a (T, k) array."""
    c = np.asarray(counts, dtype=np.int64)
    lf = log_factorials(int(c.sum(axis=-1).max()) if c.size else 0)
    if c.ndim == 1:
        return float(lf[c.sum()] - lf[c].sum())
    return lf[c.sum(axis=1)] - lf[c].sum(axis=1)


def log_type_probability(counts, p: Distribution) -> np.ndarray:
    """Natural log of p^{(x)n}(T_t) for each row of a (T, k) count array."""
    c = np.atleast_2d(np.asarray(counts, dtype=np.int64))
    with np.errstate(divide="ignore", invalid="ignore"):
        logp = np.log(p.probs)
        # 0 * log 0 = 0, c > 0 with p = 0 gives -inf
        terms = np.where(c > 0, c * logp[None, :], 0.0)
    return log_multinomial(c) + terms.sum(axis=1)


def hypergeometric_marginal(t_n: TypeVector, k: int, s_k: TypeVector) -> float:
    prob = hypergeometric_marginal_exact(t_n, k, s_k)
    return float(prob)


def hypergeometric_marginal_exact(t_n: TypeVector, k: int, s_k: TypeVector) -> Fraction:
    n = t_n.n
    if k > n or k < 1:
        raise ValidationError("need 1 <= k <= n")
    if s_k.n != k or s_k.size != t_n.size:
        raise DimensionError("s_k must be a k-type on the same alphabet")
    num = 1
    for a, b in zip(t_n.counts, s_k.counts):
        if b > a:
            return Fraction(0)
        num *= math.comb(a, b)
    return Fraction(num, math.comb(n, k))


def lambda_bound(k: int, n: int) -> float:
    if not 1 <= k < n:
        raise ValidationError("need 1 <= k < n")
    return (1.0 - k / n) ** (-k)


def sanov_tail_bound(k: int, alphabet: Alphabet | int, D: float) -> float:
    if D < 0:
        raise ValidationError("D must be >= 0")
    size = alphabet.size if isinstance(alphabet, Alphabet) else int(alphabet)
    log2b = (size - 1) * math.log2(k + 1) - k * D
    return 1.0 if log2b >= 0 else 2.0**log2b


# ---------------------------------------------------------------- balls


@dataclass(frozen=True)
class InfinityBall:
    center: Distribution
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValidationError("radius must be >= 0")

    def bounds(self):
        r = min(self.radius, 1.0)
        lo = np.clip(self.center.probs - r, 0.0, 1.0)
        hi = np.clip(self.center.probs + r, 0.0, 1.0)
        return lo, hi

    def contains(self, r, tol: float = 1e-12) -> bool:
        v = r.probs if isinstance(r, Distribution) else np.asarray(r, dtype=np.float64)
        return bool(np.max(np.abs(v - self.center.probs)) <= self.radius + tol)


def ball_projection(ball: InfinityBall, q: Distribution, tol: float = 1e-12):
    """Minimiser of D(r||q) over the simplex intersected with the ball.

    The optimality conditions give r(x) = clip(c q(x), lo(x), hi(x)) for a
    scalar c fixed by normalisation; c is located by bisection on log c.
    Returns None when every feasible r has infinite divergence.
    """
    _same_alphabet(ball.center, q)
    lo, hi = ball.bounds()
    qv = q.probs
    zero_q = qv == 0
    if np.any(lo[zero_q] > 0):
        return None
    cap = hi.copy()
    cap[zero_q] = 0.0
    if cap.sum() < 1.0 - 1e-15:
        return None

    pos = ~zero_q
    logq = np.full(qv.shape, -np.inf)
    logq[pos] = np.log(qv[pos])

    def mass(logc):
        # log space keeps subnormal q entries finite
        return np.clip(np.exp(np.minimum(logc + logq, 0.0)), lo, cap)

    # at the lower end every coordinate sits at lo (mass <= 1), at the upper
    # end every coordinate is capped (mass >= 1)
    a = -float(np.max(logq[pos])) - 800.0
    b = float(np.max(np.log(np.maximum(cap[pos], 1e-300)) - logq[pos])) + 1.0
    for _ in range(400):
        m = 0.5 * (a + b)
        if mass(m).sum() < 1.0:
            a = m
        else:
            b = m
        if b - a < tol:
            break
    r = mass(b)
    # remaining normalisation slack goes to coordinates strictly inside the box
    slack = 1.0 - r.sum()
    free = (r > lo) & (r < cap)
    if abs(slack) > 0 and np.any(free):
        r[free] += slack * r[free] / r[free].sum()
    return r


def ball_relative_entropy(ball: InfinityBall, q: Distribution, tol: float = 1e-9) -> float:
    """D(B||q) = min over r in simplex and ball of D(r||q), in bits."""
    if ball.contains(q):
        return 0.0
    r = ball_projection(ball, q, tol=min(tol, 1e-12))
    if r is None:
        return math.inf
    mask = r > 0
    d = float(np.sum(r[mask] * (np.log(r[mask]) - np.log(q.probs[mask]))))
    return max(d, 0.0) / LN2


def logsumexp(a) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    if a.size == 0:
        return -math.inf
    m = float(np.max(a))
    if m == -math.inf:
        return -math.inf
    if m == math.inf:
        return math.inf
    return m + math.log(float(np.sum(np.exp(a - m))))
