"""Fixed-length compression that survives almost-i.i.d. sources.

Classical: the accepted set of the universal Sanov test, indexed by
(type offset, lexicographic rank inside the type class). Quantum: the
spectral projector {E_n >= 1/n} of the Neyman-Pearson effect of rho^n
against the maximally mixed state.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import qmat
from .errors import CapabilityError, CapacityError, DimensionError, ValidationError
from .hypothesis import build_sanov_test, neyman_pearson_plan, type1_error
from .prob_core import (
    LN2,
    TYPE_CAP,
    Distribution,
    log_multinomial,
    log_type_probability,
    logsumexp,
    type_array,
    type_class_size,
    TypeVector,
)
from .sources import ClassicalSource, QuantumSource, SourceFamily

MAGIC = 0xA7
HEADER = struct.Struct(">BHBdI")  # magic, n, |X|, delta, M mod 2^32: 16 bytes


def log2_int(m: int) -> float:
    """log2 of a positive big integer to double precision."""
    if m < 1:
        raise ValidationError("need m >= 1")
    b = m.bit_length()
    if b <= 1000:
        return math.log2(m)
    shift = b - 64
    return shift + math.log2(m >> shift)


# ------------------------------------------------------------ ranking


def multiset_rank(x: Sequence[int], counts: Sequence[int]) -> int:
    """Lexicographic rank of x among all arrangements of its type."""
    c = list(counts)
    rem = sum(c)
    total = type_class_size(TypeVector(tuple(c)))
    rank = 0
    for s in x:
        # arrangements of the remaining symbols that start with a smaller one
        for a in range(s):
            if c[a]:
                rank += total * c[a] // rem
        total = total * c[s] // rem
        c[s] -= 1
        rem -= 1
    return rank


def multiset_unrank(rank: int, counts: Sequence[int]) -> list[int]:
    c = list(counts)
    rem = sum(c)
    total = type_class_size(TypeVector(tuple(c)))
    if not 0 <= rank < total:
        raise ValidationError("rank out of range")
    out = []
    for _ in range(sum(counts)):
        for a in range(len(c)):
            if not c[a]:
                continue
            block = total * c[a] // rem
            if rank < block:
                out.append(a)
                total = block
                c[a] -= 1
                rem -= 1
                break
            rank -= block
    return out


# ------------------------------------------------------------ classical


@dataclass
class ClassicalCode:
    p: Distribution
    delta: float
    n: int
    types: np.ndarray
    offsets: list
    M: int
    index: dict = field(repr=False)

    @property
    def size(self) -> int:
        return self.p.size

    @property
    def rate(self) -> float:
        return log2_int(self.M) / self.n

    @property
    def index_bits(self) -> int:
        return (self.M - 1).bit_length()

    @property
    def test(self):
        return build_sanov_test(self.p, self.delta, self.n)

    def contains(self, x) -> bool:
        return tuple(np.bincount(np.asarray(x, dtype=np.int64), minlength=self.size).tolist()) in self.index

    def encode(self, x) -> int:
        """Index in [0, M); strings outside the accepted set map to 0."""
        x = [int(s) for s in x]
        if len(x) != self.n:
            raise DimensionError("string length differs from n")
        t = tuple(np.bincount(np.asarray(x, dtype=np.int64), minlength=self.size).tolist())
        j = self.index.get(t)
        if j is None:
            return 0
        return self.offsets[j] + multiset_rank(x, t)

    def decode(self, m: int) -> list[int]:
        if not 0 <= m < self.M:
            raise ValidationError("message out of range")
        lo, hi = 0, len(self.offsets) - 1
        while lo < hi:
            mid = (lo + hi + 1) // 2
            if self.offsets[mid] <= m:
                lo = mid
            else:
                hi = mid - 1
        return multiset_unrank(m - self.offsets[lo], self.types[lo].tolist())

    def to_bytes(self, x) -> bytes:
        m = self.encode(x)
        nbytes = (self.index_bits + 7) // 8
        return HEADER.pack(MAGIC, self.n, self.size, self.delta, self.M % (1 << 32)) + m.to_bytes(nbytes, "big")

    def from_bytes(self, data: bytes) -> list[int]:
        if len(data) < HEADER.size:
            raise ValidationError("truncated header")
        magic, n, size, delta, mcheck = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise ValidationError("bad magic byte")
        if (size, n, delta, mcheck) != (self.size, self.n, self.delta, self.M % (1 << 32)):
            raise ValidationError("header does not match this code")
        body = data[HEADER.size :]
        if len(body) != (self.index_bits + 7) // 8:
            raise ValidationError("payload length mismatch")
        return self.decode(int.from_bytes(body, "big"))


def build_classical_code(p: Distribution, delta: float, n: int, cap: int = TYPE_CAP) -> ClassicalCode:
    if n > 0xFFFF or p.size > 0xFF:
        raise ValidationError("n and |X| must fit the wire header")
    test = build_sanov_test(p, delta, n)
    types = test.accepted_types(cap)
    offsets, total = [], 0
    for t in types.tolist():
        offsets.append(total)
        total += type_class_size(TypeVector(tuple(t)))
    if total < 1:
        raise CapabilityError("accepted set is empty")
    index = {tuple(t): j for j, t in enumerate(types.tolist())}
    return ClassicalCode(p, float(delta), n, types, offsets, total, index)


def classical_code_error(code: ClassicalCode, src, n: int | None = None) -> float:
    """Probability that the source emits a string outside A_n; the same
    computation as the universal test's type-I error."""
    return type1_error(code.test, src, code.n if n is None else n)


def rate_identity_check(code: ClassicalCode):
    """(log2(M)/n, log2|X| + (1/n) log2 Q^n(A_n)) with Q uniform."""
    lq = log_multinomial(code.types) - code.n * math.log(code.size)
    other = math.log2(code.size) + logsumexp(lq) / LN2 / code.n
    return code.rate, other


# -------------------------------------------------------------- quantum


@dataclass
class QuantumCode:
    rho: qmat.DensityMatrix
    eps: float
    n: int
    basis: np.ndarray  # single-site basis in which the code is diagonal
    path: str
    rank: int
    log2_beta: float  # log2 Tr[E_n tau^n]
    trace_rho_pi: float
    kept_types: np.ndarray | None = None  # diagonal path
    projector: np.ndarray | None = None  # dense path
    effect_scale: float | None = None

    @property
    def d(self) -> int:
        return self.rho.dim

    @property
    def rate(self) -> float:
        return log2_int(self.rank) / self.n if self.rank > 0 else 0.0

    def dense_projector(self) -> np.ndarray:
        if self.projector is not None:
            return self.projector
        D = self.d**self.n
        if D > qmat.MAX_DIM:
            raise CapacityError("projector too large to materialise")
        strs = np.array(np.unravel_index(np.arange(D), [self.d] * self.n)).T
        counts = np.stack([np.bincount(s, minlength=self.d) for s in strs])
        keep = {tuple(t) for t in self.kept_types.tolist()}
        diag = np.array([1.0 if tuple(c) in keep else 0.0 for c in counts.tolist()])
        U = qmat.kron_power(self.basis, self.n)
        return (U * diag[None, :]) @ U.conj().T

    def _range_and_complement(self):
        P = self.dense_projector()
        w, V = qmat.hermitian_eig(P)
        return V[:, w > 0.5], V[:, w <= 0.5]

    def encoder(self) -> qmat.KrausChannel:
        """omega -> V^dag Pi omega Pi V + Tr[(1 - Pi) omega] sigma_K on K_n."""
        Vk, Wc = self._range_and_complement()
        K = Vk.shape[1]
        ops = [Vk.conj().T]
        for k in range(K):
            e = np.zeros(K, dtype=np.complex128)
            e[k] = 1.0
            for j in range(Wc.shape[1]):
                ops.append(np.outer(e, Wc[:, j].conj()) / math.sqrt(K))
        return qmat.KrausChannel(ops)

    def decoder(self) -> qmat.KrausChannel:
        Vk, _ = self._range_and_complement()
        return qmat.KrausChannel([Vk])

    def coding_channel(self) -> qmat.KrausChannel:
        """Decoder after encoder, as one channel on the source space."""
        Vk, Wc = self._range_and_complement()
        K = Vk.shape[1]
        ops = [Vk @ Vk.conj().T]
        for k in range(K):
            for j in range(Wc.shape[1]):
                ops.append(np.outer(Vk[:, k], Wc[:, j].conj()) / math.sqrt(K))
        return qmat.KrausChannel(ops)


def _code_basis(rho: qmat.DensityMatrix):
    if rho.is_diagonal():
        return np.eye(rho.dim, dtype=np.complex128), rho.diagonal()
    w, U = rho.eig()
    return U, np.clip(w, 0.0, None)


def build_quantum_code(rho: qmat.DensityMatrix, eps: float, n: int, path: str = "auto") -> QuantumCode:
    """E_n = Neyman-Pearson effect of rho^n vs tau^n at level eps/2,
    T_n = {E_n >= 1/n}."""
    if not 0.0 < eps < 1.0:
        raise ValidationError("eps must lie in (0, 1)")
    d = rho.dim
    if path == "auto":
        path = "diagonal"
    if path == "dense":
        return _build_quantum_dense(rho, eps, n)
    if path != "diagonal":
        raise ValidationError("path must be auto, diagonal or dense")
    U, lam = _code_basis(rho)
    T = type_array(n, d)
    lm = log_multinomial(T)
    lp = log_type_probability(T, Distribution(lam / lam.sum()))
    lq = lm - n * math.log(d)
    weights, lbeta = neyman_pearson_plan(lp, lq, eps / 2.0)
    keep = weights >= 1.0 / n
    kept = T[keep]
    rank = sum(type_class_size(TypeVector(tuple(t))) for t in kept.tolist())
    tr = float(np.exp(lp[keep]).sum()) if np.any(keep) else 0.0
    return QuantumCode(rho, eps, n, U, "diagonal", rank, lbeta / LN2, min(1.0, tr), kept_types=kept)


def _build_quantum_dense(rho: qmat.DensityMatrix, eps: float, n: int) -> QuantumCode:
    d = rho.dim
    if d**n > qmat.MAX_DIM:
        raise CapacityError("dense path needs d^n <= 256")
    rn = qmat.DensityMatrix(qmat.kron_power(rho, n), check=False)
    tau = qmat.DensityMatrix.maximally_mixed(d**n)
    res = qmat.quantum_neyman_pearson(rn, tau, eps / 2.0)
    w, V = qmat.hermitian_eig(res.effect.matrix)
    Vk = V[:, w >= 1.0 / n - 1e-12]
    P = Vk @ Vk.conj().T
    tr = float(np.real(np.trace(rn.matrix @ P)))
    lb = math.log2(res.beta) if res.beta > 0 else -math.inf
    U, _ = _code_basis(rho)
    return QuantumCode(rho, eps, n, U, "dense", Vk.shape[1], lb, min(1.0, tr), projector=P)


def _source_trace_pi(code: QuantumCode, src) -> float:
    if isinstance(src, QuantumSource) and src.is_diagonal() and code.kept_types is not None:
        S = code.basis.conj().T @ src.basis
        if np.allclose(np.abs(S), np.eye(code.d), atol=1e-10):
            # same basis up to phases: Tr[rho_n Pi] is a type-law sum
            counts, logp = src.classical.type_law()
            keep = {tuple(t) for t in code.kept_types.tolist()}
            mask = np.array([tuple(c) in keep for c in counts.tolist()])
            return min(1.0, math.exp(logsumexp(logp[mask]))) if np.any(mask) else 0.0
    m = src.dense() if isinstance(src, QuantumSource) else src
    return float(np.real(np.trace(m.matrix @ code.dense_projector())))


def quantum_code_fidelity(code: QuantumCode, src, n: int | None = None):
    """(lower bound [Tr rho_n Pi]^2, exact entanglement fidelity or None)."""
    if isinstance(src, SourceFamily):
        src = src.at(code.n if n is None else n)
    if isinstance(src, QuantumSource) and src.n != code.n:
        raise DimensionError("source length differs from the code")
    t = _source_trace_pi(code, src)
    exact = None
    if code.d**code.n <= qmat.MAX_DIM:
        m = src.dense() if isinstance(src, QuantumSource) else src
        exact = qmat.entanglement_fidelity(m, code.coding_channel())
    return t * t, exact


def rank_bound_check(code: QuantumCode, tol: float = 1e-9) -> bool:
    """rk T_n <= n d^n Tr[E_n tau^n], equivalently
    rate <= log2 d - D_H/n + log2(n)/n."""
    if code.rank == 0:
        return True
    lhs = log2_int(code.rank)
    rhs = math.log2(code.n) + code.n * math.log2(code.d) + code.log2_beta
    rate_ok = code.rate <= math.log2(code.d) + code.log2_beta / code.n + math.log2(code.n) / code.n + tol
    return lhs <= rhs + tol and rate_ok
