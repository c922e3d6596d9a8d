import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ciralkit.corpus import Document
from ciralkit.encoder import EncoderConfig
from ciralkit.train import (
    TRAINING_METADATA,
    ToyEncoder,
    Triple,
    TripleFormatError,
    _loss_grads,
    contrastive_ce_loss,
    grad_check,
    read_triples,
    round_robin,
    round_robin_by_lang,
    sgd_demo,
    triple_loss,
    triple_loss_grad,
    triple_scores,
    write_triples,
)


def test_equal_scores_give_ln2():
    for s in (-3.0, 0.0, 0.5, 17.25):
        assert abs(contrastive_ce_loss(s, s) - math.log(2)) <= 1e-12


@settings(max_examples=300)
@given(st.floats(-30, 30), st.floats(-30, 30), st.floats(-50, 50))
def test_shift_invariance(a, b, c):
    assert abs(contrastive_ce_loss(a + c, b + c) - contrastive_ce_loss(a, b)) <= 1e-12


def test_matches_naive_softmax_and_is_stable():
    for a, b in ((1.0, 2.0), (5.0, -1.0), (0.1, 0.3)):
        naive = -math.log(math.exp(a) / (math.exp(a) + math.exp(b)))
        assert contrastive_ce_loss(a, b) == pytest.approx(naive, abs=1e-12)
    assert contrastive_ce_loss(1000.0, 0.0) == pytest.approx(0.0, abs=1e-12)
    assert contrastive_ce_loss(0.0, 1000.0) == pytest.approx(1000.0)


@given(st.floats(-20, 20), st.floats(-20, 20))
def test_score_gradients_by_central_differences(a, b):
    h = 1e-6
    gp, gn = _loss_grads(a, b)
    assert gp == pytest.approx((contrastive_ce_loss(a + h, b) - contrastive_ce_loss(a - h, b)) / (2 * h), abs=1e-6)
    assert gn == pytest.approx((contrastive_ce_loss(a, b + h) - contrastive_ce_loss(a, b - h)) / (2 * h), abs=1e-6)
    assert gp + gn == pytest.approx(0.0, abs=1e-15)


def _random_triples(n, seed=0, vocab=300):
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(vocab)]

    def text(lo, hi):
        return " ".join(rng.choice(words, size=int(rng.integers(lo, hi))))

    return [Triple(text(2, 8), text(10, 60), text(10, 60)) for _ in range(n)]


def test_grad_check_20_triples():
    enc = ToyEncoder.init(128, seed=0)
    results = [grad_check(enc, t, epsilon=1e-5, seed=i) for i, t in enumerate(_random_triples(20))]
    assert all(r.checked > 0 for r in results)
    assert max(r.max_rel_error for r in results) < 1e-4


def test_grad_check_small_dim_all_entries():
    enc = ToyEncoder.init(8, scale=0.5, seed=3)
    cfg = EncoderConfig(dim=8, query_len=6)
    for t in _random_triples(5, seed=1, vocab=20):
        r = grad_check(enc, t, cfg, n_entries=64)
        assert r.checked + r.skipped_ties == 64
        assert r.max_rel_error < 1e-4


def test_padding_rows_contribute_to_scores():
    enc = ToyEncoder.init(16, seed=0)
    cfg_short, cfg_long = EncoderConfig(dim=16, query_len=4), EncoderConfig(dim=16, query_len=12)
    t = Triple("alpha", "alpha beta", "gamma delta")
    assert triple_scores(enc, t, cfg_short) != triple_scores(enc, t, cfg_long)


def test_loss_grad_consistent_with_loss():
    enc = ToyEncoder.init(32, seed=2)
    t = _random_triples(1, seed=5)[0]
    cfg = EncoderConfig(dim=32)
    loss, grad = triple_loss_grad(enc, t, cfg)
    assert loss == triple_loss(enc, t, cfg)
    assert grad.shape == (32, 32)


def test_sgd_demo_reduces_loss():
    enc = ToyEncoder.init(32, seed=0)
    triples = _random_triples(6, seed=7, vocab=40)
    hist = sgd_demo(enc, triples, lr=0.5, steps=15, cfg=EncoderConfig(dim=32))
    assert hist[-1] < hist[0]


def test_triples_round_trip(tmp_path):
    ts = [Triple("q one", "pos\ttext\nwith  breaks", "neg"), Triple("q2", "p", "n")]
    assert write_triples(ts, tmp_path / "t.tsv") == 2
    back = list(read_triples(tmp_path / "t.tsv"))
    assert back == [Triple("q one", "pos text with breaks", "neg"), Triple("q2", "p", "n")]


@pytest.mark.parametrize("content, line", [("a\tb\n", 1), ("a\tb\tc\n\tb\tc\n", 2)])
def test_malformed_triples(tmp_path, content, line):
    (tmp_path / "t.tsv").write_text(content, encoding="utf-8")
    with pytest.raises(TripleFormatError, match=f"line {line}"):
        list(read_triples(tmp_path / "t.tsv"))


def test_round_robin():
    assert list(round_robin([[1, 2, 3], [], ["a"], (x for x in "xy")])) == [1, "a", "x", 2, "y", 3]
    docs = [Document(f"{lang}{i}", "t", lang) for lang in ("en", "ha", "ha", "sw") for i in range(2)]
    docs = [Document(f"d{i}", "t", d.lang) for i, d in enumerate(docs)]
    order = [d.lang for d in round_robin_by_lang(docs)]
    assert order[:3] == ["ha", "sw", "en"]
    assert sorted(d.docid for d in round_robin_by_lang(docs)) == sorted(d.docid for d in docs)
    assert [d.docid for d in round_robin_by_lang(docs, order=("sw",))][0] == "d6"


def test_training_metadata():
    assert TRAINING_METADATA["mlm"]["steps"] == 200_000
    assert TRAINING_METADATA["mlm"]["learning_rate"] == 1e-5
    assert TRAINING_METADATA["mlm"]["batch_size"] == 48
    assert TRAINING_METADATA["retrieval"]["learning_rate"] == 5e-6
    assert TRAINING_METADATA["retrieval"]["batch_size"] == 64


def test_toy_encoder_validation():
    with pytest.raises(ValueError):
        ToyEncoder(np.ones((2, 3)))
    with pytest.raises(ValueError):
        ToyEncoder(np.full((2, 2), np.nan))
