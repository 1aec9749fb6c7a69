import math

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given
from hypothesis import strategies as st

from aiid import qmat
from aiid.errors import DimensionError, ValidationError
from aiid.prob_core import Distribution, relative_entropy, total_variation
from aiid.qmat import DensityMatrix, KrausChannel

seeds = st.integers(0, 2**32 - 1)


def ket(v):
    return DensityMatrix.pure(v)


def test_hermitian_eig_examples(rng):
    w, v = qmat.hermitian_eig(np.eye(3))
    assert np.allclose(w, 1)
    w, _ = qmat.hermitian_eig(np.diag([1.0, 3.0]))
    assert np.allclose(w, [3, 1])
    X = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    A = X + X.conj().T
    w, v = qmat.hermitian_eig(A)
    assert np.linalg.norm(v @ np.diag(w) @ v.conj().T - A) < 1e-9
    assert np.allclose(v.conj().T @ v, np.eye(8), atol=1e-10)
    assert np.allclose(w, np.sort(sla.eigvalsh(A))[::-1], atol=1e-9)
    with pytest.raises(ValidationError):
        qmat.hermitian_eig(np.array([[0, 1], [0, 0]]))


def test_density_validation():
    with pytest.raises(ValidationError):
        DensityMatrix(np.diag([0.6, 0.6]))
    with pytest.raises(ValidationError):
        DensityMatrix(np.diag([1.5, -0.5]))
    rho = DensityMatrix.diag([0.9, 0.1])
    with pytest.raises(AttributeError):
        rho.matrix = None


def test_entropy_examples():
    assert qmat.von_neumann_entropy(ket([1, 1])) == pytest.approx(0.0, abs=1e-12)
    assert qmat.von_neumann_entropy(DensityMatrix.maximally_mixed(4)) == pytest.approx(2.0)
    h = -(0.9 * math.log2(0.9) + 0.1 * math.log2(0.1))
    assert qmat.von_neumann_entropy(DensityMatrix.diag([0.9, 0.1])) == pytest.approx(h, abs=1e-12)
    assert h == pytest.approx(0.4690, abs=1e-4)


@given(seeds)
def test_entropy_range(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 6))
    s = qmat.von_neumann_entropy(qmat.random_density(d, rng))
    assert -1e-12 <= s <= math.log2(d) + 1e-12


def test_umegaki_examples(rng):
    r = DensityMatrix.diag([0.2, 0.8])
    assert qmat.umegaki_relative_entropy(r, r) == pytest.approx(0.0, abs=1e-12)
    assert qmat.umegaki_relative_entropy(ket([1, 0]), ket([0, 1])) == math.inf
    p, q = np.array([0.1, 0.3, 0.6]), np.array([0.5, 0.25, 0.25])
    val = qmat.umegaki_relative_entropy(DensityMatrix.diag(p), DensityMatrix.diag(q))
    assert val == pytest.approx(relative_entropy(Distribution(p), Distribution(q)), abs=1e-9)
    # logm oracle on a full-rank random pair
    a, b = qmat.random_density(3, rng), qmat.random_density(3, rng)
    ref = np.real(np.trace(a.matrix @ (sla.logm(a.matrix) - sla.logm(b.matrix)))) / math.log(2)
    assert qmat.umegaki_relative_entropy(a, b) == pytest.approx(ref, abs=1e-8)
    with pytest.raises(DimensionError):
        qmat.umegaki_relative_entropy(a, DensityMatrix.maximally_mixed(2))


def test_trace_distance_examples():
    r = DensityMatrix.diag([0.3, 0.7])
    assert qmat.trace_distance(r, r) == pytest.approx(0.0, abs=1e-14)
    assert qmat.trace_distance(ket([1, 0]), ket([0, 1])) == pytest.approx(1.0)
    p, q = np.array([0.1, 0.3, 0.6]), np.array([0.5, 0.25, 0.25])
    assert qmat.trace_distance(DensityMatrix.diag(p), DensityMatrix.diag(q)) == pytest.approx(
        total_variation(Distribution(p), Distribution(q))
    )


def test_partial_trace(rng):
    a, b = qmat.random_density(2, rng), qmat.random_density(3, rng)
    ab = DensityMatrix(np.kron(a.matrix, b.matrix))
    assert np.allclose(qmat.partial_trace(ab, [2, 3], [0]).matrix, a.matrix)
    assert np.allclose(qmat.partial_trace(ab, [2, 3], [1]).matrix, b.matrix)
    assert np.allclose(qmat.partial_trace(ab, [2, 3], [0, 1]).matrix, ab.matrix)
    bell = ket([1, 0, 0, 1])
    assert np.allclose(qmat.partial_trace(bell, [2, 2], [1]).matrix, np.eye(2) / 2)
    rho = qmat.random_density(8, rng)
    T = rho.matrix.reshape(2, 2, 2, 2, 2, 2)
    ref = np.einsum("ijkabk->ijab", T).reshape(4, 4)
    assert np.allclose(qmat.partial_trace(rho, [2, 2, 2], [0, 1]).matrix, ref)
    # composition: drop site 2 then site 1 equals dropping both
    two = qmat.partial_trace(qmat.partial_trace(rho, [2, 2, 2], [0, 1]), [2, 2], [0])
    assert np.allclose(two.matrix, qmat.partial_trace(rho, [2, 2, 2], [0]).matrix)
    with pytest.raises(DimensionError):
        qmat.partial_trace(rho, [2, 3], [0])


def test_channels(rng):
    rho = qmat.random_density(3, rng)
    assert np.allclose(qmat.apply_channel(KrausChannel.identity(3), rho).matrix, rho.matrix)
    omega = DensityMatrix.diag([0.25, 0.75])
    rep = KrausChannel.replacement(omega, 3)
    assert np.allclose(qmat.apply_channel(rep, rho).matrix, omega.matrix, atol=1e-12)
    for _ in range(10):
        ch = qmat.random_channel(3, rng)
        out = qmat.apply_channel(ch, rho)
        assert abs(np.trace(out.matrix) - 1) < 1e-10
        DensityMatrix(out.matrix)
    with pytest.raises(ValidationError):
        KrausChannel([np.eye(2) * 0.5])


def test_entanglement_fidelity_examples():
    assert qmat.entanglement_fidelity(DensityMatrix.diag([0.3, 0.7]), KrausChannel.identity(2)) == pytest.approx(1.0)
    # replacement to I/2 with A_ij = |i><j| / sqrt 2
    ops = [np.outer(np.eye(2)[i], np.eye(2)[j]) / math.sqrt(2) for i in range(2) for j in range(2)]
    ch = KrausChannel(ops)
    half = DensityMatrix.maximally_mixed(2)
    assert qmat.entanglement_fidelity(half, ch) == pytest.approx(0.25)
    assert qmat.entanglement_fidelity_purification(half, ch) == pytest.approx(0.25)


@given(seeds)
def test_entanglement_fidelity_two_routes(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 9))
    rho = qmat.random_density(d, rng)
    ch = qmat.random_channel(d, rng, nkraus=int(rng.integers(1, 4)))
    a = qmat.entanglement_fidelity(rho, ch)
    b = qmat.entanglement_fidelity_purification(rho, ch)
    assert abs(a - b) < 1e-9
    assert -1e-12 <= a <= 1 + 1e-12


def test_canonical_purification(rng):
    rho = qmat.random_density(3, rng)
    psi = qmat.canonical_purification(rho)
    assert np.linalg.norm(psi) == pytest.approx(1.0)
    red = qmat.partial_trace(DensityMatrix(np.outer(psi, psi.conj())), [3, 3], [0])
    assert np.allclose(red.matrix, rho.matrix, atol=1e-10)


def test_neyman_pearson_examples():
    r = DensityMatrix.diag([0.3, 0.7])
    res = qmat.quantum_neyman_pearson(r, r, 0.1)
    assert res.beta == pytest.approx(0.9, abs=1e-9)
    res = qmat.quantum_neyman_pearson(ket([1, 0]), ket([0, 1]), 0.1)
    assert res.beta == pytest.approx(0.0, abs=1e-12)
    assert res.dh == math.inf or res.dh > 30
    with pytest.raises(ValidationError):
        qmat.quantum_neyman_pearson(r, r, 1.0)


def _classical_np(p, q, eps):
    # LP oracle: min q.e subject to p.e >= 1 - eps, 0 <= e <= 1
    from scipy.optimize import linprog

    res = linprog(q, A_ub=[-p], b_ub=[-(1 - eps)], bounds=[(0, 1)] * len(p), method="highs")
    return res.fun


@given(seeds, st.floats(0.01, 0.9))
def test_neyman_pearson_matches_lp(seed, eps):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(4))
    res = qmat.quantum_neyman_pearson(DensityMatrix.diag(p), DensityMatrix.diag(q), eps)
    assert res.beta == pytest.approx(_classical_np(p, q, eps), abs=1e-9)
    assert np.real(np.trace(np.diag(p) @ res.effect.matrix)) == pytest.approx(1 - eps, abs=1e-9)


def test_neyman_pearson_monotone(rng):
    rho, sigma = qmat.random_density(3, rng), qmat.random_density(3, rng)
    betas = [qmat.quantum_neyman_pearson(rho, sigma, e).beta for e in (0.0, 0.05, 0.1, 0.3, 0.6)]
    assert all(b <= a + 1e-9 for a, b in zip(betas, betas[1:]))


def test_measured_relative_entropy(rng):
    r = DensityMatrix.diag([0.2, 0.8])
    assert qmat.measured_relative_entropy_lb(r, r) == pytest.approx(0.0, abs=1e-12)
    a, b = DensityMatrix.diag([0.1, 0.3, 0.6]), DensityMatrix.diag([0.5, 0.25, 0.25])
    assert qmat.measured_relative_entropy_lb(a, b) == pytest.approx(qmat.umegaki_relative_entropy(a, b), abs=1e-6)
    # |0> mixed with I/2 against |+>-mixture: grid over real measurement axes
    rho = DensityMatrix(0.8 * ket([1, 0]).matrix + 0.1 * np.eye(2))
    plus = ket([1, 1]).matrix
    sigma = DensityMatrix(0.7 * plus + 0.15 * np.eye(2))
    best = 0.0
    for th in np.linspace(0, math.pi, 1000):
        u = np.array([math.cos(th / 2), math.sin(th / 2)])
        U = np.stack([u, np.array([-u[1], u[0]])], axis=1)
        pr = np.real(np.einsum("ki,ij,jk->k", U.T, rho.matrix, U))
        ps = np.real(np.einsum("ki,ij,jk->k", U.T, sigma.matrix, U))
        best = max(best, float(np.sum(pr * np.log2(pr / ps))))
    lb = qmat.measured_relative_entropy_lb(rho, sigma)
    assert lb >= best - 1e-6
    assert lb <= qmat.umegaki_relative_entropy(rho, sigma) + 1e-9


@given(seeds)
def test_data_processing(seed):
    rng = np.random.default_rng(seed)
    rho, sigma = qmat.random_density(3, rng), qmat.random_density(3, rng)
    M = qmat.ProjectiveMeasurement.from_basis(qmat.random_unitary(3, rng))
    p, q = M.probabilities(rho), M.probabilities(sigma)
    mask = p > 0
    d = float(np.sum(p[mask] * np.log2(p[mask] / q[mask])))
    assert d <= qmat.umegaki_relative_entropy(rho, sigma) + 1e-8


def test_hiai_petz():
    assert qmat.hiai_petz_correction(1, 2) == pytest.approx(2.0)
    assert qmat.hiai_petz_correction(3, 2) == pytest.approx(4 / 3)
    vals = [qmat.hiai_petz_correction(h, 2) for h in (1, 10, 100, 10**4, 10**6)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert vals[-1] < 1e-4


def test_projective_measurement_checks():
    with pytest.raises(ValidationError):
        qmat.ProjectiveMeasurement([np.diag([1.0, 0.0])])
    M = qmat.ProjectiveMeasurement([np.diag([1.0, 0.0]), np.diag([0.0, 1.0])], labels=["a", "b"])
    assert M.labels == ("a", "b")
    assert np.allclose(M.probabilities(DensityMatrix.diag([0.3, 0.7])), [0.3, 0.7])
