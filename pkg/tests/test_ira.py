import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emcdma.ira import (IRA_PROFILE, CodeConstructionError, DegreeProfile, SumProductDecoder, build_code,
                        decode, encode, load_ensemble, save_ensemble)


def gf2_dense(code):
    return code.H.toarray().astype(np.int64)


def test_published_profile_reads_typo_as_degree_7():
    lam = dict(IRA_PROFILE.lam)
    assert lam[7] == pytest.approx(0.06126)
    assert sum(lam.values()) == pytest.approx(1.0, abs=1e-12)
    assert (IRA_PROFILE.d_v, IRA_PROFILE.d_c) == (8, 7)


def test_profile_validation():
    with pytest.raises(ValueError):
        DegreeProfile(lam=((3, 0.5),), rho=((6, 1.0),))
    with pytest.raises(ValueError):
        DegreeProfile(lam=((0, 1.0),), rho=((6, 1.0),))


def test_node_fractions_convert_edge_perspective():
    p = DegreeProfile(lam=((2, 0.5), (4, 0.5)), rho=((6, 1.0),))
    nf = p.node_fractions("lam")
    assert nf[2] == pytest.approx(2 / 3)
    assert nf[4] == pytest.approx(1 / 3)


def test_shape_and_generator(code_2000):
    c = code_2000
    assert c.H.shape == (1000, 2000)
    assert not ((c.G.astype(np.int64) @ gf2_dense(c).T) % 2).any()
    assert np.array_equal(c.G[:, :1000], np.eye(1000, dtype=np.uint8))


def test_h2_dual_diagonal(code_2200):
    H2 = code_2200.H2.toarray()
    M = H2.shape[0]
    expected = np.eye(M, dtype=np.uint8) + np.eye(M, k=-1, dtype=np.uint8)
    assert np.array_equal(H2, expected)


def test_degree_histograms(code_2000):
    col = np.asarray(code_2000.H1.sum(axis=0)).ravel()
    vals, counts = np.unique(col, return_counts=True)
    # variable-node perspective of the profile, with the parity nodes taking degrees 1 and 2
    assert dict(zip(vals.tolist(), counts.tolist())) == {3: 720, 7: 56, 8: 224}
    row = np.asarray(code_2000.H.sum(axis=1)).ravel()
    vals, counts = np.unique(row, return_counts=True)
    target = IRA_PROFILE.node_fractions("rho")
    for d, n in zip(vals, counts):
        assert abs(n - target[d] * 1000) <= 1.5


def test_no_four_cycles(code_2000):
    H = gf2_dense(code_2000)
    overlap = H @ H.T
    np.fill_diagonal(overlap, 0)
    assert overlap.max() <= 1


def test_deterministic_given_seed():
    a = build_code(200, 400, seed=3)
    b = build_code(200, 400, seed=3)
    assert (a.H != b.H).nnz == 0


def test_encode_matches_dense_oracle(code_2200, rng):
    for _ in range(5):
        m = rng.integers(0, 2, 1000)
        assert np.array_equal(encode(m, code_2200), (m @ code_2200.G.astype(np.int64)) % 2)


def test_encode_zero_and_length(code_2000):
    assert not encode(np.zeros(1000, dtype=np.uint8), code_2000).any()
    with pytest.raises(ValueError):
        encode(np.zeros(999), code_2000)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_codewords_satisfy_parity(seed):
    code = _small()
    m = np.random.default_rng(seed).integers(0, 2, code.K)
    b = encode(m, code)
    assert code.is_codeword(b)
    assert np.array_equal(b[:code.K], m)


_cache = {}


def _small():
    if "c" not in _cache:
        _cache["c"] = build_code(100, 200, seed=1)
    return _cache["c"]


def test_toy_code_builds():
    toy = build_code(4, 8, DegreeProfile(lam=((3, 1.0),), rho=((5, 1.0),)), seed=1)
    assert np.array_equal(toy.G[:, :4], np.eye(4, dtype=np.uint8))
    assert not ((toy.G.astype(int) @ toy.H.toarray().T) % 2).any()


def test_infeasible_profile_raises():
    with pytest.raises(CodeConstructionError):
        build_code(4, 6, DegreeProfile(lam=((9, 1.0),), rho=((3, 1.0),)))


def test_decode_noiseless_one_iteration(code_2000, rng):
    m = rng.integers(0, 2, 1000)
    b = encode(m, code_2000)
    post, hard, ok = decode(20.0 * (1 - 2.0 * b), code_2000, 1)
    assert ok and np.array_equal(hard, b)


def test_decode_all_zero_llrs(code_2000):
    post, hard, ok = decode(np.zeros(2000), code_2000, 3)
    assert not post.any() and ok


def test_decoder_codeword_symmetry(code_2000, rng):
    # flipping the input signs along a codeword flips the posteriors the same way
    llr = rng.normal(0, 3, 2000)
    b = encode(rng.integers(0, 2, 1000), code_2000)
    s = 1 - 2.0 * b
    p1, _, _ = decode(llr, code_2000, 4)
    p2, _, _ = decode(llr * s, code_2000, 4)
    assert np.allclose(p2, p1 * s)


def test_stateful_single_iterations_equal_batch(code_2000, rng):
    llr = rng.normal(2, 2, 2000)
    dec = SumProductDecoder(code_2000)
    for _ in range(5):
        post = dec.iterate(llr, 1)
    batch, _, _ = decode(llr, code_2000, 5)
    assert np.allclose(post, batch)


def test_toy_ml_agrees_with_bp():
    code = build_code(4, 8, DegreeProfile(lam=((3, 1.0),), rho=((5, 1.0),)), seed=1)
    words = np.array([encode(np.array(m), code) for m in itertools.product((0, 1), repeat=4)])
    b = words[5]
    llr = 8.0 * (1 - 2.0 * b)
    llr[2] = -np.sign(llr[2]) * 2.0
    ml = words[np.argmax(words.dot(-llr) * 0 + ((1 - 2.0 * words) * llr).sum(axis=1))]
    _, hard, ok = decode(llr, code, 5)
    assert ok and np.array_equal(hard, ml) and np.array_equal(ml, b)


def test_ensemble_roundtrip(tmp_path):
    code = build_code(60, 120, seed=4)
    p = tmp_path / "ens.txt"
    save_ensemble(code, p)
    assert p.read_text().splitlines()[0] == "60 120 4"
    back = load_ensemble(p)
    assert (back.H != code.H).nnz == 0
    assert np.array_equal(back.G, code.G)
