"""Channel coding over i.i.d. and almost-i.i.d. channel processes.

Capacity and Holevo quantity by alternating maximisation, the smoothed
Gallager function and its exponent, random codebooks decoded with the
delta-smoothed maximum likelihood rule, and Monte Carlo error estimates
with per-trial seeds so runs are reproducible trial by trial.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels, qmat
from .errors import CapabilityError, CapacityError, DimensionError, ProtocolError, ValidationError
from .sources import ChannelProcess
from .transport import BlockChannel, MixtureChannel, digits_to_index, index_to_digits

ROW_TOL = 1e-12
GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _stochastic(W) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise DimensionError("channel matrix must be 2-D")
    if np.any(W < 0) or np.max(np.abs(W.sum(axis=1) - 1.0)) > ROW_TOL * max(1, W.shape[1]):
        raise ValidationError("rows of W must be probability vectors")
    return W


@dataclass(frozen=True)
class DMC:
    W: np.ndarray

    def __init__(self, W):
        object.__setattr__(self, "W", _stochastic(W))

    @property
    def nx(self) -> int:
        return self.W.shape[0]

    @property
    def ny(self) -> int:
        return self.W.shape[1]


def bsc(p: float) -> np.ndarray:
    return np.array([[1.0 - p, p], [p, 1.0 - p]])


def _w(W) -> np.ndarray:
    return W.W if isinstance(W, DMC) else _stochastic(W)


def _kl_rows(W: np.ndarray, q: np.ndarray) -> np.ndarray:
    """D(W(.|x) || q) in bits for every x."""
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(W > 0, W * np.log2(W / q[None, :]), 0.0)
    return t.sum(axis=1)


def mutual_information(P, W) -> float:
    W = _w(W)
    P = np.asarray(P, dtype=np.float64)
    return float(P @ _kl_rows(W, P @ W))


def capacity_dmc(W, tol: float = 1e-9, max_iter: int = 100000):
    """Blahut-Arimoto. Returns (C in bits, optimal input law)."""
    W = _w(W)
    nx = W.shape[0]
    P = np.full(nx, 1.0 / nx)
    prev = -1.0
    for _ in range(max_iter):
        d = _kl_rows(W, P @ W)
        lower = float(P @ d)
        upper = float(d.max())
        if upper - lower < tol or abs(lower - prev) < tol * 1e-3:
            break
        prev = lower
        P = P * np.exp2(d - d.max())
        P /= P.sum()
    C = mutual_information(P, W)
    return min(max(C, 0.0), math.log2(min(W.shape))), P


# ------------------------------------------------------------ exponents


def gallager_modified(W, P, rho: float, delta: float) -> float:
    """E_G(rho, P, delta) = -log2 sum_y (sum_x P(x) (W(y|x) + delta)^(1/(1+rho)))^(1+rho)."""
    if not 0.0 <= rho <= 1.0:
        raise ValidationError("rho must lie in [0, 1]")
    if delta < 0:
        raise ValidationError("delta must be non-negative")
    W = _w(W)
    P = np.asarray(P, dtype=np.float64)
    a = (W + delta) ** (1.0 / (1.0 + rho))
    return float(-math.log2(np.sum((P @ a) ** (1.0 + rho))))


def _best_input(W: np.ndarray, rho: float, delta: float, P0=None, iters: int = 300):
    """Minimise F(P) = sum_y (P a)_y^(1+rho) over the simplex; F is convex,
    so exponentiated gradient with backtracking converges."""
    nx = W.shape[0]
    a = (W + delta) ** (1.0 / (1.0 + rho))
    P = np.full(nx, 1.0 / nx) if P0 is None else np.asarray(P0, dtype=np.float64).copy()
    if nx == 1:
        return P, float(np.sum(a[0] ** (1.0 + rho)))

    def F(p):
        return float(np.sum((p @ a) ** (1.0 + rho)))

    f = F(P)
    step = 1.0
    for _ in range(iters):
        g = (1.0 + rho) * (a @ ((P @ a) ** rho))
        g = g / max(f, 1e-300)
        # duality gap of the linearisation is a stopping rule for convex F
        if float(P @ g - g.min()) < 1e-13:
            break
        while True:
            Q = P * np.exp(-step * (g - g.min()))
            Q /= Q.sum()
            fq = F(Q)
            if fq <= f or step < 1e-12:
                break
            step *= 0.5
        if fq > f:
            break
        P, f = Q, fq
        step = min(step * 2.0, 1e3)
    return P, f


def _eg_opt(W, rho, delta, P0=None):
    P, f = _best_input(W, rho, delta, P0)
    return -math.log2(f), P


def _golden_max(fun, lo, hi, tol=1e-7):
    a, b = lo, hi
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc[0] >= fd[0]:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = fun(d)
    return (c, fc) if fc[0] >= fd[0] else (d, fd)


def exponent_bound(W, r: float, delta: float = 0.0, grid: int = 64):
    """max over rho in [0,1] and P of E_G(rho, P, delta) - rho r, floored at 0.

    Returns (value, argmax rho, argmax P). The golden-section polish around
    the best grid point assumes unimodality in rho, which holds at delta = 0
    and is a heuristic otherwise.
    """
    if r < 0:
        raise ValidationError("rate must be non-negative")
    W = _w(W)
    rhos = np.linspace(0.0, 1.0, grid)
    best = (-math.inf, 0.0, None)
    vals = []
    P = None
    for rho in rhos:
        e, P = _eg_opt(W, float(rho), delta, P)
        v = e - rho * r
        vals.append(v)
        if v > best[0]:
            best = (v, float(rho), P)
    j = int(np.argmax(vals))
    lo, hi = rhos[max(j - 1, 0)], rhos[min(j + 1, grid - 1)]
    Pj = best[2]

    def fun(rho):
        e, Pr = _eg_opt(W, rho, delta, Pj)
        return e - rho * r, Pr

    rho_star, (v, Pr) = _golden_max(fun, float(lo), float(hi))
    if v > best[0]:
        best = (v, rho_star, Pr)
    if best[0] <= 0.0:
        return 0.0, 0.0, best[2]
    return best


def r_delta(W, delta: float, grid: int = 64) -> float:
    """Smallest rate at which exponent_bound vanishes, i.e.
    sup over rho in (0,1], P of E_G(rho, P, delta) / rho, floored at 0.

    At delta = 0 the ratio is non-increasing in rho and its limit at 0 is
    the capacity, which is returned directly.
    """
    W = _w(W)
    if delta == 0.0:
        return capacity_dmc(W)[0]
    rhos = np.concatenate([np.geomspace(1e-4, 1.0 / grid, 8)[:-1], np.linspace(1.0 / grid, 1.0, grid)])
    vals = []
    P = None
    for rho in rhos:
        e, P = _eg_opt(W, float(rho), delta, P)
        vals.append(e / rho)
    j = int(np.argmax(vals))
    lo, hi = rhos[max(j - 1, 0)], rhos[min(j + 1, len(rhos) - 1)]

    def fun(rho):
        e, _ = _eg_opt(W, rho, delta)
        return (e / rho,)

    _, (v,) = _golden_max(fun, float(lo), float(hi))
    return max(0.0, float(max(v, max(vals))))


def gallager_bound(W, n: int, M: int, P=None, grid: int = 64) -> float:
    """Random-coding bound min_rho (M-1)^rho 2^(-n E_0(rho, P)) on the
    ensemble-average ML error."""
    W = _w(W)
    if P is None:
        P = capacity_dmc(W)[1]
    best = 1.0
    for rho in np.linspace(0.0, 1.0, grid):
        e = gallager_modified(W, P, float(rho), 0.0)
        best = min(best, 2.0 ** (rho * math.log2(max(M - 1, 1)) - n * e))
    return float(best)


# ------------------------------------------------------------ codebooks


@dataclass(frozen=True)
class Codebook:
    n: int
    M: int
    words: np.ndarray = field(repr=False)
    P: np.ndarray = field(repr=False)
    seed: object = None

    def __post_init__(self):
        if self.M < 2:
            raise ValidationError("a codebook needs at least two messages")
        if self.words.shape != (self.M, self.n):
            raise DimensionError("codeword array must be (M, n)")

    @property
    def rate(self) -> float:
        return math.log2(self.M) / self.n

    def encode(self, m: int) -> np.ndarray:
        return self.words[m]

    def fingerprint(self) -> str:
        return hashlib.sha256(self.words.tobytes() + str(self.words.shape).encode()).hexdigest()


def random_codebook(P, n: int, M: int, seed) -> Codebook:
    """Codewords i.i.d. from P; seed is an int or a numpy SeedSequence."""
    P = np.asarray(P, dtype=np.float64)
    if np.any(P < 0) or abs(P.sum() - 1.0) > 1e-9:
        raise ValidationError("P must be a probability vector")
    if P.size > 256:
        raise CapacityError("input alphabet must fit a byte")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(P)
    words = np.minimum(np.searchsorted(cdf, rng.random((M, n)), side="right"), P.size - 1).astype(np.uint8)
    return Codebook(n, M, words, P, seed)


def _log_metric(W: np.ndarray, delta: float) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(W + delta)


def smoothed_ml_decode(codebook: Codebook, delta: float, y, W) -> int:
    """argmax_m sum_i log(W(y_i|x_mi) + delta); ties go to the smallest m."""
    W = _w(W)
    y = np.asarray(y, dtype=np.uint8).reshape(1, -1)
    if y.shape[1] != codebook.n:
        raise DimensionError("received word has the wrong length")
    return int(kernels.ml_decode_batch(codebook.words[None], y, _log_metric(W, delta))[0])


def decode_batch(books: np.ndarray, ys: np.ndarray, delta: float, W) -> np.ndarray:
    """Vectorised decoder. books is (M, n) shared or (T, M, n) per trial."""
    books = np.asarray(books, dtype=np.uint8)
    if books.ndim == 2:
        books = books[None]
    return kernels.ml_decode_batch(books, np.asarray(ys, dtype=np.uint8), _log_metric(_w(W), delta))


def wilson_interval(k: int, n: int, z: float = 1.959963984540054):
    if n == 0:
        return 0.0, 1.0
    ph = k / n
    den = 1.0 + z * z / n
    c = (ph + z * z / (2 * n)) / den
    h = z * math.sqrt(ph * (1 - ph) / n + z * z / (4 * n * n)) / den
    # the endpoints are exact at k = 0 and k = n
    return (0.0 if k == 0 else max(0.0, c - h)), (1.0 if k == n else min(1.0, c + h))


# ------------------------------------------------------------ simulation


def _trial_seeds(master: int, trials: int, stream: int) -> np.ndarray:
    """Per-trial 64-bit seeds from hash(master, trial, stream)."""
    out = np.empty(trials, dtype=np.uint64)
    for t in range(trials):
        out[t] = np.random.SeedSequence([master, t, stream]).generate_state(1, np.uint64)[0]
    return out


def _sample_with_uniforms(ch, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Channel outputs for inputs x (T, n) driven by uniforms u (T, n + 1):
    u[:, 0] picks a mixture component, u[:, 1 + pos] drives the block that
    starts at site pos."""
    if isinstance(ch, MixtureChannel):
        cw = np.cumsum(ch.weights)
        pick = np.minimum(np.searchsorted(cw, u[:, 0], side="right"), len(cw) - 1)
        out = np.zeros_like(x)
        for j, c in enumerate(ch.components):
            sel = pick == j
            if np.any(sel):
                out[sel] = _sample_with_uniforms(c, x[sel], u[sel])
        return out
    if isinstance(ch, BlockChannel):
        out = np.zeros_like(x)
        pos = 0
        for size, m in ch.blocks:
            xi = digits_to_index(x[:, pos : pos + size], ch.nx)
            cdf = np.cumsum(m[xi], axis=1)
            yi = np.minimum((u[:, 1 + pos][:, None] >= cdf).sum(axis=1), m.shape[1] - 1)
            out[:, pos : pos + size] = index_to_digits(yi, size, ch.ny)
            pos += size
        return out
    raise CapabilityError("process cannot be sampled from uniforms")


def _noise(ch, x: np.ndarray, seeds: np.ndarray) -> np.ndarray:
    n = x.shape[1]
    u = np.stack([np.random.default_rng(int(s)).random(n + 1) for s in seeds]) if len(seeds) else np.zeros((0, n + 1))
    return _sample_with_uniforms(ch, x, u)


@dataclass
class SimulationResult:
    n: int
    M: int
    delta: float
    trials: int
    errors: int
    ci: tuple
    records: list = field(default_factory=list, repr=False)

    @property
    def rate(self) -> float:
        return math.log2(self.M) / self.n

    @property
    def error_rate(self) -> float:
        return self.errors / self.trials if self.trials else 0.0

    @property
    def stderr(self) -> float:
        p = self.error_rate
        return math.sqrt(p * (1 - p) / self.trials) if self.trials else 0.0

    def summary(self) -> dict:
        return {
            "rate": self.rate,
            "n": self.n,
            "M": self.M,
            "delta": self.delta,
            "trials": self.trials,
            "errors": self.errors,
            "error": self.error_rate,
            "ci_low": self.ci[0],
            "ci_high": self.ci[1],
        }


def simulate_error(codebook: Codebook, delta: float, process: ChannelProcess, trials: int, seed: int, W=None, keep_records: bool = False) -> SimulationResult:
    """Stratified messages (trial mod M) through the process at length n,
    decoded with the smoothed ML rule for W (default: the process base)."""
    W = process.base if W is None else _w(W)
    ch = process.at(codebook.n)
    msgs = np.arange(trials) % codebook.M
    seeds = _trial_seeds(seed, trials, 1)
    x = codebook.words[msgs].astype(np.int64)
    y = _noise(ch, x, seeds)
    dec = decode_batch(codebook.words, y, delta, W)
    ok = dec == msgs
    errors = int(trials - ok.sum())
    recs = []
    if keep_records:
        recs = [
            {"trial": t, "message": int(msgs[t]), "noise_seed": int(seeds[t]), "decoded": int(dec[t]), "correct": bool(ok[t])}
            for t in range(trials)
        ]
    return SimulationResult(codebook.n, codebook.M, delta, trials, errors, wilson_interval(errors, trials), recs)


# ------------------------------------------------------ shared randomness


class Party:
    """One end of the protocol. Both ends hold only W, the rate, n and the
    master seed; the codebook for trial t is regenerated locally."""

    def __init__(self, W, r: float, n: int, master: int, P=None):
        self.W = _w(W)
        self.n = n
        self.M = max(2, int(round(2.0 ** (r * n))))
        self.master = int(master)
        self.P = capacity_dmc(self.W)[1] if P is None else np.asarray(P, dtype=np.float64)

    def codebook(self, trial: int) -> Codebook:
        return random_codebook(self.P, self.n, self.M, np.random.SeedSequence([self.master, trial, 0]))

    def books(self, trials: int) -> np.ndarray:
        return np.stack([self.codebook(t).words for t in range(trials)])


def _digest(books: np.ndarray) -> str:
    return hashlib.sha256(books.tobytes()).hexdigest()


@dataclass
class ProtocolTranscript:
    summary: dict
    records: list = field(repr=False)


def shared_randomness_protocol(W, process: ChannelProcess, r: float, n: int, master: int, trials: int = 10000, delta: float = 0.05, receiver_seed: int | None = None) -> ProtocolTranscript:
    """Fresh random code per use drawn from shared randomness; the code
    depends only on W, never on the process it is run over."""
    sender = Party(W, r, n, master)
    receiver = Party(W, r, n, master if receiver_seed is None else receiver_seed)
    tx_books = sender.books(trials)
    rx_books = receiver.books(trials)
    if _digest(tx_books) != _digest(rx_books):
        raise ProtocolError("sender and receiver derived different codebooks")
    msgs = np.arange(trials) % sender.M
    seeds = _trial_seeds(master, trials, 1)
    x = tx_books[np.arange(trials), msgs].astype(np.int64)
    y = _noise(process.at(n), x, seeds)
    dec = decode_batch(rx_books, y, delta, receiver.W)
    ok = dec == msgs
    errors = int(trials - ok.sum())
    lo, hi = wilson_interval(errors, trials)
    records = [
        {"trial": t, "message": int(msgs[t]), "noise_seed": int(seeds[t]), "decoded": int(dec[t]), "correct": bool(ok[t])}
        for t in range(trials)
    ]
    summary = {
        "process": process.kind,
        "rate": math.log2(sender.M) / n,
        "target_rate": r,
        "n": n,
        "M": sender.M,
        "delta": delta,
        "trials": trials,
        "errors": errors,
        "error": errors / trials,
        "ci_low": lo,
        "ci_high": hi,
        "codebook_digest": _digest(tx_books),
    }
    return ProtocolTranscript(summary, records)


def reliability_floor(M: int, n: int) -> float:
    """(M-1)/(M n): with probability 1/n every output is replaced, after
    which the decoder can do no better than guess."""
    return (M - 1) / (M * n)


# --------------------------------------------------------------- Z scheme


@dataclass
class ZSchemeResult:
    n: int
    trials: int
    bits: int
    block_errors: int
    bit_errors: int


def z_channel_scheme(n: int, trials: int, seed: int, parity: bool = True) -> ZSchemeResult:
    """Send w_i on site 2i-1 and 0 on site 2i; read w_i = Y_{2i-1} xor Y_{2i}.
    With parity=False the receiver reads Y_{2i-1} alone (negative control)."""
    from .sources import make_channel_process

    if n < 1:
        raise ValidationError("n must be positive")
    m = n // 2
    proc = make_channel_process("z_correlated")
    rng = np.random.default_rng(seed)
    w = rng.integers(0, 2, size=(trials, m))
    x = np.zeros((trials, n), dtype=np.int64)
    x[:, 0 : 2 * m : 2] = w
    y = proc.at(n).sample(x, rng)
    if parity:
        what = y[:, 0 : 2 * m : 2] ^ y[:, 1 : 2 * m : 2]
    else:
        what = y[:, 0 : 2 * m : 2]
    wrong = what != w
    return ZSchemeResult(n, trials, m, int(np.any(wrong, axis=1).sum()), int(wrong.sum()))


# --------------------------------------------------------------- cq layer


@dataclass(frozen=True)
class CqChannel:
    states: tuple

    def __init__(self, states: Sequence):
        st = tuple(s if isinstance(s, qmat.DensityMatrix) else qmat.DensityMatrix(s) for s in states)
        if len({s.dim for s in st}) != 1:
            raise DimensionError("output states must share a dimension")
        object.__setattr__(self, "states", st)

    @property
    def nx(self) -> int:
        return len(self.states)

    @property
    def dim(self) -> int:
        return self.states[0].dim

    def output(self, x: Sequence[int]) -> np.ndarray:
        return qmat.kron_all([self.states[i].matrix for i in x])


def holevo_quantity(cq: CqChannel, tol: float = 1e-9, max_iter: int = 100000):
    """Arimoto-type ascent P(x) ~ P(x) 2^{D(rho_x || rho_P)}; stops when the
    gap max_x D(rho_x||rho_P) - chi falls below tol."""
    if cq.dim > 64:
        raise CapacityError("state dimension above 64")
    k = cq.nx
    P = np.full(k, 1.0 / k)
    S = np.array([qmat.von_neumann_entropy(s) for s in cq.states])
    mats = np.stack([s.matrix for s in cq.states])
    chi = 0.0
    for _ in range(max_iter):
        avg = qmat.DensityMatrix(np.tensordot(P, mats, axes=1), check=False)
        Sav = qmat.von_neumann_entropy(avg)
        chi = Sav - float(P @ S)
        # D(rho_x || avg) = -S(rho_x) - Tr rho_x log avg
        w, V = qmat.hermitian_eig(avg.matrix)
        logw = np.where(w > qmat.SUPPORT_CUTOFF, np.log2(np.clip(w, qmat.SUPPORT_CUTOFF, None)), 0.0)
        L = (V * logw[None, :]) @ V.conj().T
        D = np.array([-S[i] - float(np.real(np.trace(mats[i] @ L))) for i in range(k)])
        if float(D.max()) - chi < tol:
            break
        P = P * np.exp2(D - D.max())
        P /= P.sum()
    return max(chi, 0.0), P


def converse_bound(chi: float, eps: float) -> float:
    """(chi + g(eps)) / (1 - eps), g(e) = (e+1) log2(e+1) - e log2 e."""
    if not 0.0 <= eps < 1.0:
        raise ValidationError("eps must lie in [0, 1)")
    g = (eps + 1) * math.log2(eps + 1) - (eps * math.log2(eps) if eps > 0 else 0.0)
    return (chi + g) / (1.0 - eps)


@dataclass
class BootstrapResult:
    k: int
    rate: float
    W: np.ndarray
    prior: np.ndarray
    mutual_information: float


def induced_dmc(cq: CqChannel, k: int, encoder, decoder) -> np.ndarray:
    """W_k(zhat | z) = Tr[D_zhat rho_{E(z)}], with encoder an (|Z|, k) array
    of input strings and decoder a ProjectiveMeasurement or list of effects
    on the k-fold output space."""
    if cq.dim**k > 64:
        raise CapacityError("d^k above 64")
    enc = np.asarray(encoder, dtype=np.int64)
    if enc.ndim != 2 or enc.shape[1] != k:
        raise DimensionError("encoder must list one k-string per message")
    effects = decoder.projectors if isinstance(decoder, qmat.ProjectiveMeasurement) else [np.asarray(e) for e in decoder]
    if effects[0].shape[0] != cq.dim**k:
        raise DimensionError("decoder acts on the wrong space")
    W = np.empty((enc.shape[0], len(effects)))
    for z, xs in enumerate(enc):
        rho = cq.output(xs)
        W[z] = [max(0.0, float(np.real(np.trace(E @ rho)))) for E in effects]
    return W / W.sum(axis=1, keepdims=True)


def cq_bootstrap_rate(cq: CqChannel, k: int, encoder=None, decoder=None) -> BootstrapResult:
    """(1/k) capacity of the classical channel seen through the inner code.
    Defaults: every k-string as a message, and a measurement in the
    eigenbasis of the average output."""
    if encoder is None:
        encoder = np.array(np.unravel_index(np.arange(cq.nx**k), [cq.nx] * k)).T if k > 0 else None
    if decoder is None:
        avg = sum(s.matrix for s in cq.states) / cq.nx
        _, U = qmat.hermitian_eig(avg)
        decoder = qmat.ProjectiveMeasurement.from_basis(qmat.kron_power(U, k))
    W = induced_dmc(cq, k, encoder, decoder)
    C, P = capacity_dmc(W)
    return BootstrapResult(k, C / k, W, P, mutual_information(P, W))
