import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from aiid import qmat
from aiid.compression import (
    HEADER,
    build_classical_code,
    build_quantum_code,
    classical_code_error,
    log2_int,
    multiset_rank,
    multiset_unrank,
    quantum_code_fidelity,
    rank_bound_check,
    rate_identity_check,
)
from aiid.errors import CapacityError, DimensionError, ValidationError
from aiid.prob_core import Distribution, bernoulli
from aiid.sources import gamma_family, iid_quantum, iid_source, make_defect_mixture, make_gamma_eta_sigma
from aiid.transport import index_to_digits

counts_st = st.lists(st.integers(0, 3), min_size=1, max_size=4).filter(lambda c: 0 < sum(c) <= 8)


def test_log2_int():
    assert log2_int(1) == 0.0
    assert log2_int(1024) == 10.0
    big = 3**5000
    assert log2_int(big) == pytest.approx(5000 * math.log2(3), rel=1e-12)
    with pytest.raises(ValidationError):
        log2_int(0)


@given(counts_st)
def test_multiset_rank_is_lex_position(counts):
    base = [s for s, c in enumerate(counts) for _ in range(c)]
    perms = sorted(set(itertools.permutations(base)))
    for r, x in enumerate(perms):
        assert multiset_rank(list(x), counts) == r
        assert multiset_unrank(r, counts) == list(x)
    with pytest.raises(ValidationError):
        multiset_unrank(len(perms), counts)


def test_multiset_rank_large():
    counts = [600, 400]
    rng = np.random.default_rng(1)
    x = rng.permutation([0] * 600 + [1] * 400).tolist()
    r = multiset_rank(x, counts)
    assert 0 <= r < math.comb(1000, 400)
    assert multiset_unrank(r, counts) == x


@pytest.mark.parametrize("p,delta,n", [(0.3, 0.05, 10), (0.11, 0.04, 12), (0.5, 0.1, 9)])
def test_classical_code_exhaustive(p, delta, n):
    P = bernoulli(p)
    code = build_classical_code(P, delta, n)
    strs = index_to_digits(np.arange(2**n), n, 2)
    accepted = [s for s in strs.tolist() if code.contains(s)]
    assert code.M == len(accepted)
    msgs = [code.encode(s) for s in accepted]
    assert sorted(msgs) == list(range(code.M))
    for s, m in zip(accepted, msgs):
        assert code.decode(m) == s
    law = iid_source(P.probs, n).dense()
    outside = sum(law[i] for i, s in enumerate(strs.tolist()) if not code.contains(s))
    assert classical_code_error(code, iid_source(P.probs, n)) == pytest.approx(outside, abs=1e-12)
    rate, other = rate_identity_check(code)
    assert rate == pytest.approx(other, abs=1e-10)


def test_classical_fallback_and_checks():
    code = build_classical_code(bernoulli(0.1), 0.02, 20)
    outside = [1] * 20
    assert not code.contains(outside)
    assert code.encode(outside) == 0
    with pytest.raises(DimensionError):
        code.encode([0] * 19)
    with pytest.raises(ValidationError):
        code.decode(code.M)


def test_full_acceptance_case():
    p = Distribution([0.2, 0.3, 0.5])
    code = build_classical_code(p, 0.5, 30)
    assert code.M == 3**30
    assert code.rate == pytest.approx(math.log2(3))
    assert classical_code_error(code, iid_source(p.probs, 30)) == 0.0
    assert rate_identity_check(code) == pytest.approx((math.log2(3), math.log2(3)), abs=1e-10)


def test_wire_format_roundtrip(rng):
    p = bernoulli(0.11)
    code = build_classical_code(p, 0.0085, 2000)
    x = iid_source(p.probs, 2000).sample(rng, 1)[0]
    blob = code.to_bytes(x)
    assert len(blob) == HEADER.size + (code.index_bits + 7) // 8
    assert blob[0] == 0xA7
    back = code.from_bytes(blob)
    assert back == (x.tolist() if code.contains(x) else code.decode(0))
    with pytest.raises(ValidationError):
        code.from_bytes(blob[:10])
    with pytest.raises(ValidationError):
        code.from_bytes(b"\x00" + blob[1:])
    with pytest.raises(ValidationError):
        code.from_bytes(blob + b"\x00")
    other = build_classical_code(p, 0.01, 2000)
    with pytest.raises(ValidationError):
        other.from_bytes(blob)


def test_defect_family_error_small():
    p = bernoulli(0.11)
    n = 2000
    code = build_classical_code(p, 0.0085, n)
    assert classical_code_error(code, make_defect_mixture(p.probs, 0, n)) <= 0.1


@pytest.mark.parametrize("n", [2, 4, 6])
def test_quantum_dense_equals_diagonal(n):
    rho = qmat.DensityMatrix.diag([0.9, 0.1])
    a = build_quantum_code(rho, 0.1, n, "diagonal")
    b = build_quantum_code(rho, 0.1, n, "dense")
    assert a.rank == b.rank
    assert np.linalg.norm(a.dense_projector() - b.dense_projector()) < 1e-9
    assert a.trace_rho_pi == pytest.approx(b.trace_rho_pi, abs=1e-9)


def test_quantum_nondiagonal_state():
    U = qmat.random_unitary(2, np.random.default_rng(3))
    rho = qmat.DensityMatrix(U @ np.diag([0.8, 0.2]) @ U.conj().T)
    a = build_quantum_code(rho, 0.2, 5, "diagonal")
    b = build_quantum_code(rho, 0.2, 5, "dense")
    assert a.rank == b.rank
    assert np.linalg.norm(a.dense_projector() - b.dense_projector()) < 1e-8


def test_quantum_channels_and_fidelity(rng):
    rho = qmat.DensityMatrix.diag([0.85, 0.15])
    code = build_quantum_code(rho, 0.2, 4)
    enc, dec, full = code.encoder(), code.decoder(), code.coding_channel()
    omega = qmat.random_density(16, rng)
    via = qmat.apply_channel(dec, qmat.apply_channel(enc, omega))
    assert np.allclose(via.matrix, qmat.apply_channel(full, omega).matrix, atol=1e-10)
    src = iid_quantum(rho, 4)
    lb, exact = quantum_code_fidelity(code, src)
    assert exact >= lb - 1e-10
    assert rank_bound_check(code)
    g = quantum_code_fidelity(code, gamma_family().at(4))
    assert g[0] == pytest.approx(1.0)


@given(st.floats(0.55, 0.99), st.floats(0.05, 0.5), st.integers(2, 7))
def test_quantum_rank_bound(lam, eps, n):
    code = build_quantum_code(qmat.DensityMatrix.diag([lam, 1 - lam]), eps, n)
    assert rank_bound_check(code)
    assert 0 <= code.rate <= 1 + 1e-12


def test_quantum_validation():
    rho = qmat.DensityMatrix.diag([0.9, 0.1])
    with pytest.raises(ValidationError):
        build_quantum_code(rho, 0.0, 4)
    with pytest.raises(ValidationError):
        build_quantum_code(rho, 0.1, 4, "sparse")
    with pytest.raises(CapacityError):
        build_quantum_code(rho, 0.1, 9, "dense")
    code = build_quantum_code(rho, 0.1, 4)
    with pytest.raises(DimensionError):
        quantum_code_fidelity(code, make_gamma_eta_sigma("gamma", None, None, 5))


def test_roundtrip_sampled_strings(rng):
    p = bernoulli(0.11)
    n = 2000
    code = build_classical_code(p, 0.0085, n)
    xs = iid_source(p.probs, n).sample(rng, 10**4)
    seen = 0
    for x in xs:
        if code.contains(x):
            assert code.decode(code.encode(x)) == x.tolist()
            seen += 1
    assert seen > 9000


def test_mismatched_source_error_near_one():
    code = build_classical_code(bernoulli(0.11), 0.0085, 1000)
    assert classical_code_error(code, iid_source(bernoulli(0.5).probs, 1000)) > 1 - 1e-12


def test_rate_identity_ternary():
    code = build_classical_code(Distribution([0.5, 0.3, 0.2]), 0.02, 500)
    rate, other = rate_identity_check(code)
    assert abs(rate - other) <= 1e-10


def test_quantum_trivial_states():
    pure = build_quantum_code(qmat.DensityMatrix.diag([1.0, 0.0]), 0.1, 50)
    assert pure.rank == 1 and pure.rate == 0.0
    mixed = build_quantum_code(qmat.DensityMatrix.maximally_mixed(2), 0.1, 50)
    assert mixed.rank == 2**50 and mixed.rate == pytest.approx(1.0)


def test_quantum_rate_monotone_in_eps():
    rho = qmat.DensityMatrix.diag([0.9, 0.1])
    rates = [build_quantum_code(rho, e, 200).rate for e in (0.02, 0.05, 0.1, 0.2, 0.4)]
    assert all(b <= a + 1e-12 for a, b in zip(rates, rates[1:]))


def test_encoder_trace_preserving(rng):
    code = build_quantum_code(qmat.DensityMatrix.diag([0.8, 0.2]), 0.2, 4)
    enc = code.encoder()
    total = sum(k.conj().T @ k for k in enc.kraus)
    assert np.allclose(total, np.eye(16), atol=1e-10)
    P = code.dense_projector()
    assert np.allclose(P @ P, P, atol=1e-12)
