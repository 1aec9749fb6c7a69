import itertools
import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import linprog

from aiid import qmat
from aiid.errors import CapacityError, DimensionError, ValidationError
from aiid.prob_core import Distribution
from aiid.transport import (
    BlockChannel,
    DenseChannel,
    MixtureChannel,
    StringDistribution,
    club_distance,
    club_distance_exhaustive,
    club_vs_diamond_check,
    coupling_to_noise_channel,
    diamond_distance_classical,
    digits_to_index,
    entropy_continuity_bound,
    hamming_matrix,
    index_to_digits,
    quantum_w1_sandwich,
    string_total_variation,
    w1_hamming,
    w1_product_fastpath,
)

seeds = st.integers(0, 2**32 - 1)
F = np.array([[0.0, 1.0], [1.0, 0.0]])
I2 = np.eye(2)


def lp_w1(p, q):
    C = hamming_matrix(p.strings, q.strings)
    m, k = C.shape
    A = sp.vstack([sp.kron(sp.eye(m), np.ones((1, k))), sp.kron(np.ones((1, m)), sp.eye(k))])
    return linprog(C.ravel(), A_eq=A, b_eq=np.concatenate([p.probs, q.probs]), method="highs").fun


def test_digits_roundtrip():
    idx = np.arange(27)
    d = index_to_digits(idx, 3, 3)
    assert d[5].tolist() == [0, 1, 2]
    assert np.array_equal(digits_to_index(d, 3), idx)


def test_string_distribution_checks():
    with pytest.raises(ValidationError):
        StringDistribution(2, 2, [[0, 0], [1, 1]], [0.5, 0.6])
    with pytest.raises(ValidationError):
        StringDistribution(2, 2, [[0, 2]], [1.0])
    p = StringDistribution.point([1, 0, 1], 2)
    assert p.as_dict() == {(1, 0, 1): 1.0}


def test_w1_examples():
    a, b = StringDistribution.point([0, 0, 0], 2), StringDistribution.point([1, 0, 1], 2)
    v, c = w1_hamming(a, b)
    assert v == pytest.approx(2.0)
    assert c.cost() == pytest.approx(2.0)
    assert w1_hamming(a, a)[0] == 0.0
    with pytest.raises(DimensionError):
        w1_hamming(a, StringDistribution.point([0, 0], 2))
    big = StringDistribution.from_dense(2, 12, np.full(4096, 1 / 4096))
    with pytest.raises(CapacityError):
        w1_hamming(big, big)


@given(seeds)
def test_w1_matches_lp(seed):
    rng = np.random.default_rng(seed)
    n, sz = int(rng.integers(1, 4)), int(rng.integers(2, 4))
    a = rng.dirichlet(np.ones(sz**n))
    a[rng.random(a.size) < 0.3] = 0
    a[0] += 0.1
    a /= a.sum()
    b = rng.dirichlet(np.ones(sz**n))
    P, Q = StringDistribution.from_dense(sz, n, a), StringDistribution.from_dense(sz, n, b)
    v, c = w1_hamming(P, Q)
    assert v == pytest.approx(lp_w1(P, Q), abs=1e-9)
    assert c.cost() == pytest.approx(v, abs=1e-9)
    ma, mb = c.marginals(sz)
    assert string_total_variation(ma, P) < 1e-9 and string_total_variation(mb, Q) < 1e-9
    assert string_total_variation(P, Q) - 1e-12 <= v <= n * string_total_variation(P, Q) + 1e-9


@given(seeds)
def test_w1_product_is_sum_of_tv(seed):
    rng = np.random.default_rng(seed)
    n, k = int(rng.integers(1, 5)), int(rng.integers(2, 4))
    A = [Distribution(rng.dirichlet(np.ones(k))) for _ in range(n)]
    B = [Distribution(rng.dirichlet(np.ones(k))) for _ in range(n)]
    v, _ = w1_hamming(StringDistribution.product(A), StringDistribution.product(B))
    assert v == pytest.approx(w1_product_fastpath(list(zip(A, B))), abs=1e-9)


@given(seeds)
def test_w1_triangle(seed):
    rng = np.random.default_rng(seed)
    laws = [StringDistribution.from_dense(2, 3, rng.dirichlet(np.ones(8))) for _ in range(3)]
    ab, bc, ac = (w1_hamming(laws[i], laws[j])[0] for i, j in ((0, 1), (1, 2), (0, 2)))
    assert ac <= ab + bc + 1e-9


def _diag(rng, d, n):
    return qmat.DensityMatrix.diag(rng.dirichlet(np.ones(d**n)))


@given(seeds)
def test_w1_sandwich(seed):
    rng = np.random.default_rng(seed)
    n, d = int(rng.integers(1, 4)), int(rng.integers(2, 4))
    a, b = _diag(rng, d, n), _diag(rng, d, n)
    lo, hi, exact = quantum_w1_sandwich(a, b, n)
    assert lo - 1e-9 <= exact <= hi + 1e-9
    assert lo == pytest.approx(qmat.trace_distance(a, b))


def test_sandwich_nondiagonal(rng):
    a, b = qmat.random_density(4, rng), qmat.random_density(4, rng)
    lo, hi, exact = quantum_w1_sandwich(a, b, 2)
    assert exact is None and hi == pytest.approx(2 * lo)
    with pytest.raises(DimensionError):
        quantum_w1_sandwich(qmat.random_density(6, rng), qmat.random_density(6, rng), 2)


def test_entropy_continuity():
    assert entropy_continuity_bound(0.0, 2) == 0.0
    v = entropy_continuity_bound(0.1, 2)
    h = -(0.1 * math.log(0.1) + 0.9 * math.log(0.9))
    assert v == pytest.approx(h + 0.1 * math.log(3))
    assert entropy_continuity_bound(0.1, 2, 2) == pytest.approx(v / math.log(2))
    with pytest.raises(ValidationError):
        entropy_continuity_bound(1.5, 2)


@pytest.mark.parametrize("n", range(1, 11))
def test_club_single_flip(n):
    a = BlockChannel.sites([F] + [I2] * (n - 1))
    assert club_distance(a, BlockChannel.iid(I2, n)) == 1.0
    if n <= 5:
        assert club_distance_exhaustive(a, BlockChannel.iid(I2, n)) == pytest.approx(1.0)


def test_club_mixture_fastpath():
    R0 = np.array([[1.0, 0.0], [1.0, 0.0]])
    for n in (3, 6):
        mix = MixtureChannel([(1 - 1 / n, BlockChannel.iid(I2, n)), (1 / n, BlockChannel.iid(R0, n))])
        fast = club_distance(mix, BlockChannel.iid(I2, n))
        assert fast == pytest.approx(1.0)
        assert fast == pytest.approx(club_distance_exhaustive(mix, BlockChannel.iid(I2, n)), abs=1e-9)


def _random_channel(rng, n, k=2):
    return DenseChannel(n, k, k, rng.dirichlet(np.ones(k**n), size=k**n))


@given(seeds)
def test_club_le_n_diamond(seed):
    rng = np.random.default_rng(seed)
    a, b = _random_channel(rng, 2), _random_channel(rng, 2)
    assert club_vs_diamond_check(a, b)
    dia = diamond_distance_classical(a, b)
    assert dia - 1e-9 <= club_distance(a, b) <= 2 * dia + 1e-9


@given(seeds)
def test_club_product_fastpath_matches_exhaustive(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    Wa = [rng.dirichlet(np.ones(2), size=2) for _ in range(n)]
    Wb = [rng.dirichlet(np.ones(2), size=2) for _ in range(n)]
    a, b = BlockChannel.sites(Wa), BlockChannel.sites(Wb)
    assert club_distance(a, b) == pytest.approx(club_distance_exhaustive(a, b), abs=1e-9)


def test_block_channel_dense_and_sample(rng):
    W = np.array([[0.9, 0.1], [0.2, 0.8]])
    ch = BlockChannel.iid(W, 2)
    assert np.allclose(ch.dense(), np.kron(W, W))
    x = np.zeros((20000, 2), dtype=np.int64)
    y = ch.sample(x, rng)
    assert abs(y.mean() - 0.1) < 0.01
    with pytest.raises(ValidationError):
        BlockChannel.iid(np.array([[0.5, 0.4], [0, 1]]), 2)


def test_noise_decomposition(rng):
    base = StringDistribution.from_dense(2, 2, rng.dirichlet(np.ones(4)))
    noisy = StringDistribution.from_dense(2, 2, rng.dirichlet(np.ones(4)))
    _, c = w1_hamming(noisy, base)
    phi = coupling_to_noise_channel(c, base)
    out = phi.apply(base)
    for x, p in noisy.as_dict().items():
        assert out.get(x, 0.0) == pytest.approx(p, abs=1e-9)
    for row in phi.table.values():
        assert sum(row.values()) == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        coupling_to_noise_channel(c, noisy)
