import numpy as np
import pytest

import seqnet


@pytest.fixture(scope="module")
def pair():
    return seqnet.synth_pair(n_places=150, d=16, sigma=0.3, seed=4)


def test_synth_shapes(pair):
    ref, qry = pair
    assert ref.descriptors.shape == (150, 16)
    assert ref.positions.shape == (150, 2)
    assert ref.geometry == "planar"
    assert len(qry) > 0


def test_synth_rejects_bad_spec():
    with pytest.raises(seqnet.SeqNetError, match="InvalidSpec"):
        seqnet.synth_pair(sigma=-1)


def test_forward_is_unit_norm_and_matches_affine_case():
    rng = np.random.default_rng(0)
    m = seqnet.init_model(8, 8, 3, 5, seed=1)
    y = m.forward(rng.normal(size=(5, 8)))
    assert abs(np.linalg.norm(y) - 1.0) < 1e-12

    s1 = seqnet.init_model(6, 4, 1, 1, seed=2)
    x = rng.normal(size=(1, 6))
    s = s1.kernel[:, 0, :] @ x[0] + s1.bias
    np.testing.assert_allclose(s1.forward(x), s / np.linalg.norm(s), atol=1e-12)


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(1)
    m = seqnet.init_model(5, 5, 3, 5, seed=3)
    x = rng.normal(size=(5, 5))
    u = rng.normal(size=5)
    _, _, d_input = m.backward(x, u)
    h = 1e-5
    for idx in [(0, 0), (2, 3), (4, 4)]:
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        numeric = (m.forward(xp) @ u - m.forward(xm) @ u) / (2 * h)
        assert abs(numeric - d_input[idx]) < 1e-6


def test_retrieval_and_hvpr(pair):
    ref, qry = pair
    top = seqnet.retrieve_topk(ref.descriptors, ref.descriptors, K=3)
    assert [row[0] for row in top["ranked_frames"]] == list(range(150))
    assert top["comparison_count"] == 150 * 150

    m = seqnet.init_model(16, 16, 1, 5, seed=1, identity_init=True)
    ref_seq, ref_c = seqnet.extract(m, ref)
    qry_seq, qry_c = seqnet.extract(m, qry)
    assert ref_seq.shape == (len(ref) - 4, 16)
    hv = seqnet.hvpr_match(ref_seq, ref_c, qry_seq, qry_c, ref.descriptors, qry.descriptors, K=10, L_m=5, L_d=5)
    assert hv["comparison_count"] == len(qry_c) * (len(ref_c) + 10 * 5)


def test_train_and_evaluate(pair, tmp_path):
    ref, qry = pair
    s1, log1 = seqnet.train(ref, qry, L_d=1, w=1, epochs=2, n_neg=4, seed=1)
    s5, log5 = seqnet.train(ref, qry, epochs=2, n_neg=4, seed=2)
    assert len(log5) == 2 and log5[0]["lr"] == pytest.approx(1e-4)
    reports = seqnet.evaluate(ref, qry, s1=s1, sequential=s5, K=10, radius=4.0)
    names = [r["method"] for r in reports]
    assert names[-1] == "hvpr"
    for r in reports:
        assert r["recall"][1] <= r["recall"][5] <= r["recall"][20]

    path = tmp_path / "s5.sqnm"
    s5.save(str(path))
    assert seqnet.load_model(str(path)) == s5

    with pytest.raises(seqnet.SeqNetError, match="epochz"):
        seqnet.train(ref, qry, epochz=3)
