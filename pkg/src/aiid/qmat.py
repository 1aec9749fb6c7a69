"""Dense finite-dimensional quantum layer.

States, effects, Kraus channels, entropies, entanglement fidelity, the
quantum Neyman-Pearson test and a lower-bound optimiser for the measured
relative entropy. Eigendecompositions go through the cyclic Jacobi kernel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .errors import DimensionError, ValidationError

HERM_TOL = 1e-10
SUPPORT_CUTOFF = 1e-10
MAX_DIM = 256


def _as_matrix(a) -> np.ndarray:
    if isinstance(a, (DensityMatrix, HermitianEffect)):
        return a.matrix
    return np.asarray(a, dtype=np.complex128)


def _check_hermitian(m: np.ndarray, tol: float = HERM_TOL):
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError("expected a square matrix")
    scale = max(1.0, float(np.max(np.abs(m))) if m.size else 1.0)
    if m.size and float(np.max(np.abs(m - m.conj().T))) > tol * scale:
        raise ValidationError("matrix is not Hermitian")


def hermitian_eig(A, tol: float = 1e-12):
    """Eigenvalues (descending) and unitary eigenvector columns of a
    Hermitian matrix, by cyclic Jacobi rotations."""
    m = _as_matrix(A)
    _check_hermitian(m)
    m = 0.5 * (m + m.conj().T)
    w, v, _ = kernels.jacobi_eigh(m, tol, 100)
    return np.asarray(w), np.asarray(v)


def _funm(m: np.ndarray, f) -> np.ndarray:
    w, v = hermitian_eig(m)
    return (v * f(w)[None, :]) @ v.conj().T


class DensityMatrix:
    """Hermitian, positive semidefinite, unit-trace matrix. Immutable."""

    __slots__ = ("matrix",)

    def __init__(self, matrix, tol: float = HERM_TOL, check: bool = True):
        m = np.array(matrix, dtype=np.complex128)
        if check:
            _check_hermitian(m, tol)
            if abs(np.trace(m).real - 1.0) > tol or abs(np.trace(m).imag) > tol:
                raise ValidationError("trace must be 1")
            w = np.linalg.eigvalsh(0.5 * (m + m.conj().T)) if m.shape[0] > 64 else hermitian_eig(m)[0]
            if w.min() < -tol:
                raise ValidationError("state has a negative eigenvalue")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __setattr__(self, key, value):
        raise AttributeError("DensityMatrix is immutable")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def diag(cls, probs) -> "DensityMatrix":
        return cls(np.diag(np.asarray(probs, dtype=np.complex128)))

    @classmethod
    def pure(cls, vec) -> "DensityMatrix":
        v = np.asarray(vec, dtype=np.complex128).ravel()
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def maximally_mixed(cls, d: int) -> "DensityMatrix":
        return cls(np.eye(d, dtype=np.complex128) / d)

    def is_diagonal(self, tol: float = 1e-12) -> bool:
        off = self.matrix - np.diag(np.diag(self.matrix))
        return float(np.max(np.abs(off))) < tol if self.dim > 1 else True

    def diagonal(self) -> np.ndarray:
        return np.clip(np.real(np.diag(self.matrix)), 0.0, None)

    def eig(self):
        return hermitian_eig(self.matrix)

    def __repr__(self):
        return f"DensityMatrix(dim={self.dim})"


class HermitianEffect:
    """Operator 0 <= E <= 1, the accepting element of a binary POVM."""

    __slots__ = ("matrix",)

    def __init__(self, matrix, tol: float = HERM_TOL, check: bool = True):
        m = np.array(matrix, dtype=np.complex128)
        if check:
            _check_hermitian(m, tol)
            w = hermitian_eig(m)[0] if m.shape[0] <= 64 else np.linalg.eigvalsh(m)
            if w.min() < -tol or w.max() > 1 + tol:
                raise ValidationError("effect spectrum must lie in [0, 1]")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    def __setattr__(self, key, value):
        raise AttributeError("HermitianEffect is immutable")

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class KrausChannel:
    kraus: tuple
    din: int
    dout: int

    def __init__(self, kraus: Sequence, tol: float = HERM_TOL, check: bool = True):
        ks = tuple(np.array(k, dtype=np.complex128) for k in kraus)
        if not ks:
            raise ValidationError("need at least one Kraus operator")
        dout, din = ks[0].shape
        if any(k.shape != (dout, din) for k in ks):
            raise DimensionError("Kraus operators must share a shape")
        if check:
            s = sum(k.conj().T @ k for k in ks)
            if float(np.max(np.abs(s - np.eye(din)))) > tol * max(1, len(ks)):
                raise ValidationError("Kraus operators are not trace preserving")
        object.__setattr__(self, "kraus", ks)
        object.__setattr__(self, "din", din)
        object.__setattr__(self, "dout", dout)

    @classmethod
    def identity(cls, d: int) -> "KrausChannel":
        return cls([np.eye(d)])

    @classmethod
    def replacement(cls, omega: "DensityMatrix", din: int) -> "KrausChannel":
        """Channel X -> Tr[X] omega."""
        w, v = omega.eig()
        ops = []
        for lam, vec in zip(w, v.T):
            if lam <= 0:
                continue
            for j in range(din):
                bra = np.zeros(din)
                bra[j] = 1.0
                ops.append(math.sqrt(lam) * np.outer(vec, bra))
        return cls(ops)


@dataclass(frozen=True)
class ProjectiveMeasurement:
    projectors: tuple
    labels: tuple

    def __init__(self, projectors: Sequence, labels: Sequence | None = None, tol: float = HERM_TOL, check: bool = True):
        ps = tuple(np.array(p, dtype=np.complex128) for p in projectors)
        d = ps[0].shape[0]
        if check:
            if float(np.max(np.abs(sum(ps) - np.eye(d)))) > tol * len(ps):
                raise ValidationError("projectors must sum to the identity")
            for i, a in enumerate(ps):
                for j, b in enumerate(ps):
                    target = a if i == j else np.zeros_like(a)
                    if float(np.max(np.abs(a @ b - target))) > 1e-8:
                        raise ValidationError("projectors must be orthogonal idempotents")
        object.__setattr__(self, "projectors", ps)
        object.__setattr__(self, "labels", tuple(labels) if labels is not None else tuple(range(len(ps))))

    @classmethod
    def from_basis(cls, U: np.ndarray) -> "ProjectiveMeasurement":
        U = np.asarray(U, dtype=np.complex128)
        return cls([np.outer(U[:, k], U[:, k].conj()) for k in range(U.shape[1])], check=False)

    @property
    def dim(self) -> int:
        return self.projectors[0].shape[0]

    def probabilities(self, rho) -> np.ndarray:
        m = _as_matrix(rho)
        p = np.array([np.real(np.trace(P @ m)) for P in self.projectors])
        return np.clip(p, 0.0, None)


# ------------------------------------------------------------ tensor helpers


def kron_all(mats: Sequence) -> np.ndarray:
    out = np.ones((1, 1), dtype=np.complex128)
    for m in mats:
        out = np.kron(out, _as_matrix(m))
    return out


def kron_power(m, n: int) -> np.ndarray:
    return kron_all([m] * n)


def ket(index: int, d: int) -> np.ndarray:
    v = np.zeros(d, dtype=np.complex128)
    v[index] = 1.0
    return v


# --------------------------------------------------------------- entropies


def von_neumann_entropy(rho: DensityMatrix) -> float:
    w = np.clip(hermitian_eig(rho.matrix)[0], 0.0, None)
    w = w[w > 0]
    return max(0.0, -float(np.sum(w * np.log2(w))))


def umegaki_relative_entropy(rho: DensityMatrix, sigma: DensityMatrix, cutoff: float = SUPPORT_CUTOFF) -> float:
    if rho.dim != sigma.dim:
        raise DimensionError("state dimensions differ")
    lr, vr = hermitian_eig(rho.matrix)
    ls, vs = hermitian_eig(sigma.matrix)
    # diagonal of rho in sigma's eigenbasis
    rho_in_s = np.real(np.einsum("ij,jk,ki->i", vs.conj().T, rho.matrix, vs))
    inside = ls > cutoff
    if float(np.sum(rho_in_s[~inside])) > cutoff:
        return math.inf
    pos = lr > 0
    term1 = float(np.sum(lr[pos] * np.log2(lr[pos])))
    term2 = float(np.sum(rho_in_s[inside] * np.log2(ls[inside])))
    return max(0.0, term1 - term2)


def trace_distance(rho, sigma) -> float:
    a, b = _as_matrix(rho), _as_matrix(sigma)
    if a.shape != b.shape:
        raise DimensionError("state dimensions differ")
    w = hermitian_eig(a - b)[0]
    return 0.5 * float(np.sum(np.abs(w)))


def partial_trace(rho, dims: Sequence[int], keep: Sequence[int]) -> DensityMatrix:
    """Reduced state on the subsystems listed in ``keep`` (order preserved)."""
    m = _as_matrix(rho)
    dims = [int(d) for d in dims]
    if int(np.prod(dims)) != m.shape[0]:
        raise DimensionError("dims do not factor the matrix")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise DimensionError("keep index out of range")
    nsys = len(dims)
    t = m.reshape(dims + dims)
    letters = "abcdefghijklmnopqrstuvwxyz"
    if 2 * nsys > len(letters) + 26:
        raise DimensionError("too many subsystems")
    alphabet = letters + letters.upper()
    row = [alphabet[i] for i in range(nsys)]
    col = [alphabet[nsys + i] if i in keep else alphabet[i] for i in range(nsys)]
    out = "".join(row[i] for i in keep) + "".join(col[i] for i in keep)
    red = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    dk = int(np.prod([dims[i] for i in keep])) if keep else 1
    return DensityMatrix(red.reshape(dk, dk), check=False)


def apply_channel(ch: KrausChannel, rho) -> DensityMatrix:
    m = _as_matrix(rho)
    if m.shape[0] != ch.din:
        raise DimensionError("channel input dimension mismatch")
    out = sum(k @ m @ k.conj().T for k in ch.kraus)
    return DensityMatrix(out, check=False)


def entanglement_fidelity(rho: DensityMatrix, ch: KrausChannel) -> float:
    """Sum over Kraus operators of |Tr(rho A_k)|^2."""
    if ch.din != rho.dim or ch.dout != rho.dim:
        raise DimensionError("channel must act on the state's space")
    return float(sum(abs(np.trace(rho.matrix @ k)) ** 2 for k in ch.kraus))


def canonical_purification(rho: DensityMatrix) -> np.ndarray:
    """Vector (sqrt(rho) (x) 1) sum_i |i>|i> on H (x) H."""
    root = _funm(rho.matrix, lambda w: np.sqrt(np.clip(w, 0.0, None)))
    d = rho.dim
    return np.kron(root, np.eye(d)) @ np.eye(d).reshape(d * d)


def entanglement_fidelity_purification(rho: DensityMatrix, ch: KrausChannel) -> float:
    """<psi| (Lambda (x) id)(|psi><psi|) |psi> built from the full output state."""
    if ch.din != rho.dim or ch.dout != rho.dim:
        raise DimensionError("channel must act on the state's space")
    d = rho.dim
    psi = canonical_purification(rho)
    proj = np.outer(psi, psi.conj())
    out = np.zeros((d * d, d * d), dtype=np.complex128)
    eye = np.eye(d)
    for k in ch.kraus:
        big = np.kron(k, eye)
        out += big @ proj @ big.conj().T
    return float(np.real(psi.conj() @ out @ psi))


# ------------------------------------------------------- hypothesis testing


@dataclass(frozen=True)
class NeymanPearsonResult:
    effect: HermitianEffect
    beta: float
    threshold: float

    @property
    def dh(self) -> float:
        return math.inf if self.beta <= 0 else -math.log2(self.beta)


def _positive_and_kernel(m: np.ndarray, tol: float):
    w, v = hermitian_eig(m)
    pos = v[:, w > tol]
    ker = v[:, np.abs(w) <= tol]
    return pos, ker


def quantum_neyman_pearson(rho: DensityMatrix, sigma: DensityMatrix, eps: float, iters: int = 200) -> NeymanPearsonResult:
    """Optimal effect for min Tr[sigma E] subject to Tr[rho E] >= 1 - eps.

    E = {rho - t sigma > 0} + f * (threshold eigenspace), with t found by
    bisection and the scalar f chosen so that Tr[rho E] = 1 - eps.
    """
    if not 0.0 <= eps < 1.0:
        raise ValidationError("eps must lie in [0, 1)")
    if rho.dim != sigma.dim:
        raise DimensionError("state dimensions differ")
    R, S = rho.matrix, sigma.matrix
    target = 1.0 - eps
    d = rho.dim

    def accepted_mass(t):
        pos, _ = _positive_and_kernel(R - t * S, 1e-13)
        return float(np.real(np.trace(pos.conj().T @ R @ pos))) if pos.size else 0.0

    # mass of rho outside supp(sigma) is free
    ls, vs = hermitian_eig(S)
    ker_s = vs[:, ls <= SUPPORT_CUTOFF]
    if ker_s.size:
        free = float(np.real(np.trace(ker_s.conj().T @ R @ ker_s)))
        if free >= target - 1e-15:
            f = min(1.0, target / free) if free > 0 else 0.0
            E = f * (ker_s @ ker_s.conj().T)
            return NeymanPearsonResult(HermitianEffect(E, check=False), 0.0, math.inf)

    lo, hi = 0.0, 1.0
    while accepted_mass(hi) > target and hi < 1e300:
        lo, hi = hi, hi * 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if accepted_mass(mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    t = hi
    # eigenvalues crossing zero between lo and hi form the threshold space
    scale = max(1.0, float(np.max(np.abs(S))) * max(1.0, t))
    ktol = max(1e-12 * scale, 4.0 * (hi - lo) * float(np.max(np.abs(S))))
    pos, ker = _positive_and_kernel(R - t * S, ktol)
    P = pos @ pos.conj().T if pos.size else np.zeros((d, d), dtype=np.complex128)
    K = ker @ ker.conj().T if ker.size else np.zeros((d, d), dtype=np.complex128)
    mass_p = float(np.real(np.trace(R @ P)))
    mass_k = float(np.real(np.trace(R @ K)))
    f = 0.0
    if mass_k > 0:
        f = min(1.0, max(0.0, (target - mass_p) / mass_k))
    E = P + f * K
    E = 0.5 * (E + E.conj().T)
    beta = max(0.0, float(np.real(np.trace(S @ E))))
    return NeymanPearsonResult(HermitianEffect(E, check=False), beta, t)


def hiai_petz_correction(h: int, d: int) -> float:
    if h < 1:
        raise ValidationError("h must be >= 1")
    return (d / h) * math.log2(h + 1)


# -------------------------------------------------- measured relative entropy


def _classical_re_bits(p: np.ndarray, q: np.ndarray) -> float:
    mask = p > 1e-300
    if np.any(q[mask] <= 0):
        return math.inf
    return max(0.0, float(np.sum(p[mask] * np.log2(p[mask] / q[mask]))))


def random_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / math.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph[None, :]


# Givens rotation candidates: a coarse sweep of angles plus finer local
# grids around the identity so repeated sweeps can polish the optimum.
_PHI = np.linspace(0.0, 2 * math.pi, 13)[:-1]
_THETA = np.concatenate(
    [np.linspace(0.0, math.pi / 2, 25)[:-1]]
    + [np.linspace(0.0, math.pi / 48 / 12**k, 13)[1:] for k in range(4)]
)
_TH, _PH = np.meshgrid(_THETA, _PHI, indexing="ij")
_C, _S, _E = np.cos(_TH).ravel(), np.sin(_TH).ravel(), np.exp(-1j * _PH).ravel()


def _xlogy(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(a > 1e-300, a * np.log2(np.where(a > 1e-300, a, 1.0) / np.where(b > 0, b, 1e-300)), 0.0)
        out = np.where((a > 1e-300) & (b <= 0), np.inf, out)
    return out


def _coordinate_ascent(R: np.ndarray, S: np.ndarray, U: np.ndarray, tol: float, max_sweeps: int = 50):
    R = U.conj().T @ R @ U
    S = U.conj().T @ S @ U
    U = U.copy()
    d = R.shape[0]
    val = _classical_re_bits(np.real(np.diag(R)), np.real(np.diag(S)))
    for _ in range(max_sweeps):
        start = val
        for p in range(d - 1):
            for q in range(p + 1, d):
                rpp, rqq, rpq = R[p, p].real, R[q, q].real, R[p, q]
                spp, sqq, spq = S[p, p].real, S[q, q].real, S[p, q]
                cs2 = 2 * _C * _S
                ap = _C**2 * rpp + _S**2 * rqq + cs2 * np.real(_E * rpq)
                bp = _C**2 * spp + _S**2 * sqq + cs2 * np.real(_E * spq)
                aq = rpp + rqq - ap
                bq = spp + sqq - bp
                contrib = _xlogy(ap, bp) + _xlogy(aq, bq)
                base = _xlogy(np.array([rpp]), np.array([spp]))[0] + _xlogy(np.array([rqq]), np.array([sqq]))[0]
                k = int(np.argmax(contrib))
                if not contrib[k] > base + 1e-14:
                    continue
                c, s, e = _C[k], _S[k], _E[k]
                V = np.array([[c, -s * np.conj(e)], [s * e, c]], dtype=np.complex128)
                idx = [p, q]
                for M in (R, S):
                    M[:, idx] = M[:, idx] @ V
                    M[idx, :] = V.conj().T @ M[idx, :]
                U[:, idx] = U[:, idx] @ V
        val = _classical_re_bits(np.clip(np.real(np.diag(R)), 0, None), np.clip(np.real(np.diag(S)), 0, None))
        if not math.isfinite(val) or val - start < tol:
            break
    return val, U


def optimize_measurement(rho: DensityMatrix, sigma: DensityMatrix, restarts: int = 32, tol: float = 1e-10, seed: int = 0):
    """Best projective measurement found by multi-restart coordinate ascent.

    Returns (value in bits, basis as unitary columns). The value is the
    classical relative entropy of the outcome laws, hence a lower bound
    on the measured relative entropy.
    """
    if rho.dim != sigma.dim:
        raise DimensionError("state dimensions differ")
    rng = np.random.default_rng(seed)
    d = rho.dim
    starts = [rho.eig()[1], sigma.eig()[1], hermitian_eig(rho.matrix + math.sqrt(2) * sigma.matrix)[1]]
    while len(starts) < max(restarts, 1):
        starts.append(random_unitary(d, rng))
    best_val, best_U = -1.0, starts[0]
    for U0 in starts[: max(restarts, 3)]:
        val, U = _coordinate_ascent(rho.matrix, sigma.matrix, U0, tol)
        if val > best_val:
            best_val, best_U = val, U
        if best_val == math.inf:
            break
    return best_val, best_U


def measured_relative_entropy_lb(rho: DensityMatrix, sigma: DensityMatrix, restarts: int = 32, tol: float = 1e-10, seed: int = 0) -> float:
    return optimize_measurement(rho, sigma, restarts, tol, seed)[0]


# ------------------------------------------------------------ random objects


def random_density(d: int, rng: np.random.Generator, rank: int | None = None) -> DensityMatrix:
    r = d if rank is None else rank
    g = rng.normal(size=(d, r)) + 1j * rng.normal(size=(d, r))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m).real, check=False)


def random_channel(d: int, rng: np.random.Generator, nkraus: int = 3, dout: int | None = None) -> KrausChannel:
    do = d if dout is None else dout
    g = rng.normal(size=(nkraus * do, d)) + 1j * rng.normal(size=(nkraus * do, d))
    q, _ = np.linalg.qr(g)
    return KrausChannel([q[k * do : (k + 1) * do, :] for k in range(nkraus)])
