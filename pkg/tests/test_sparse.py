import math

import pytest
from hypothesis import given, settings, strategies as st

from ciralkit.corpus import Collection, Document
from ciralkit.sparse import (
    BM25Params,
    RM3Params,
    SparseIndex,
    bm25_search,
    build_sparse,
    rm3_expand,
    rm3_search,
    weighted_search,
)

# d1: the cat sat (3)   d2: the cat cat ran (4)   d3: a dog ran (3); avgdl = 10/3
DOCS = [("d1", "The cat sat."), ("d2", "the cat, cat ran"), ("d3", "A dog ran")]


@pytest.fixture
def index():
    return build_sparse(Collection.from_docs(Document(i, t, "en") for i, t in DOCS))


def _norm(dl):
    return 0.9 * (1 - 0.4 + 0.4 * dl / (10 / 3))


def test_bm25_hand_values(index):
    idf_cat = math.log((3 - 2 + 0.5) / (2 + 0.5) + 1)
    d1 = idf_cat * 1 * 1.9 / (1 + _norm(3))
    d2 = idf_cat * 2 * 1.9 / (2 + _norm(4))
    got = dict(bm25_search(index, ["cat"], 10))
    assert got.keys() == {"d1", "d2"}
    assert got["d1"] == pytest.approx(d1, abs=1e-6)
    assert got["d2"] == pytest.approx(d2, abs=1e-6)
    # literal check of the arithmetic above
    assert d1 == pytest.approx(0.47908, abs=1e-5)
    assert d2 == pytest.approx(0.60095, abs=1e-5)


def test_bm25_multi_term_sum(index):
    idf_ran = math.log((3 - 2 + 0.5) / (2 + 0.5) + 1)
    idf_dog = math.log((3 - 1 + 0.5) / (1 + 0.5) + 1)
    d3 = idf_ran * 1.9 / (1 + _norm(3)) + idf_dog * 1.9 / (1 + _norm(3))
    got = dict(bm25_search(index, ["dog", "ran"], 10))
    assert got["d3"] == pytest.approx(d3, abs=1e-6)
    assert bm25_search(index, ["dog", "ran"], 1)[0][0] == "d3"


def test_idf_floor_at_zero():
    # a term in every document of a 1-doc corpus: ln(0.5/1.5 + 1) > 0, never negative
    idx = build_sparse(Collection.from_docs([Document("x", "w w", "en")]))
    assert idx.idf("w") == pytest.approx(math.log(0.5 / 1.5 + 1))
    assert idx.idf("absent") == pytest.approx(math.log(1.5 / 0.5 + 1))
    for t in ("w", "absent"):
        assert idx.idf(t) >= 0


def test_ties_break_by_docid():
    idx = build_sparse(Collection.from_docs([Document(d, "same words", "en") for d in ("c", "a", "b")]))
    assert [d for d, _ in bm25_search(idx, ["same"], 3)] == ["a", "b", "c"]


def test_empty_and_unknown_queries(index):
    assert bm25_search(index, [], 5) == []
    assert bm25_search(index, ["zebra"], 5) == []
    with pytest.raises(ValueError):
        bm25_search(index, ["cat"], 0)


def test_rm3_hand_values(index):
    fb = dict(bm25_search(index, ["cat"], 2))
    w1 = fb["d1"] / (fb["d1"] + fb["d2"])
    w2 = fb["d2"] / (fb["d1"] + fb["d2"])
    rel = {"cat": w2 * 2 / 4 + w1 / 3, "the": w2 / 4 + w1 / 3, "ran": w2 / 4, "sat": w1 / 3}
    want = {t: 0.5 * r for t, r in rel.items()}
    want["cat"] += 0.5
    got = dict(rm3_expand(index, ["cat"], fb_docs=2, fb_terms=4, orig_weight=0.5))
    assert got.keys() == want.keys()
    for t in want:
        assert got[t] == pytest.approx(want[t], abs=1e-9)
    assert sum(got.values()) == pytest.approx(1.0, abs=1e-9)


def test_rm3_truncates_and_renormalizes(index):
    got = dict(rm3_expand(index, ["cat"], fb_docs=2, fb_terms=1, orig_weight=0.3))
    # the heaviest relevance-model term is "cat" itself, so it takes all the expansion mass
    assert got == pytest.approx({"cat": 1.0})


def test_rm3_identity_at_orig_weight_one(index):
    q = ["cat", "ran", "cat"]
    assert dict(rm3_expand(index, q, orig_weight=1.0)) == pytest.approx({"cat": 0.5, "ran": 0.5})
    uniform = weighted_search(index, [("cat", 0.5), ("ran", 0.5)], 10)
    got = rm3_search(index, q, 10, RM3Params(10, 10, 1.0))
    assert got == uniform
    assert [d for d, _ in got] == [d for d, _ in bm25_search(index, ["cat", "ran"], 10)]


def test_rm3_no_feedback_falls_back(index):
    assert rm3_expand(index, ["zebra"]) == [("zebra", 1.0)]
    assert rm3_expand(index, []) == []


def test_rm3_rejects_bad_params(index):
    for kwargs in ({"fb_docs": 0}, {"fb_terms": 0}, {"orig_weight": 1.5}):
        with pytest.raises(ValueError):
            rm3_expand(index, ["cat"], **kwargs)


def test_save_load_round_trip(index, tmp_path):
    index.save(tmp_path / "i.json")
    back = SparseIndex.load(tmp_path / "i.json")
    assert bm25_search(back, ["cat", "ran"], 3) == bm25_search(index, ["cat", "ran"], 3)
    assert back.params == index.params


# -- property tests against a direct formula --------------------------------

words = st.sampled_from(list("abcdefgh"))
corpora = st.lists(st.lists(words, min_size=1, max_size=12), min_size=1, max_size=8)


def _oracle(docs, query, k1=0.9, b=0.4):
    n = len(docs)
    avg = sum(map(len, docs)) / n
    out = {}
    for i, d in enumerate(docs):
        s = 0.0
        for t in query:
            df = sum(t in x for x in docs)
            tf = d.count(t)
            if not tf:
                continue
            idf = max(0.0, math.log((n - df + 0.5) / (df + 0.5) + 1))
            s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len(d) / avg))
        if s > 0:
            out[f"d{i}"] = s
    return out


@settings(max_examples=200, deadline=None)
@given(corpora, st.lists(words, min_size=1, max_size=4))
def test_bm25_matches_direct_formula(docs, query):
    idx = build_sparse(Collection.from_docs(Document(f"d{i}", " ".join(d), "en") for i, d in enumerate(docs)))
    want = _oracle(docs, query)
    got = bm25_search(idx, query, len(docs))
    assert dict(got) == pytest.approx(want, abs=1e-9)
    assert [s for _, s in got] == sorted((s for _, s in got), reverse=True)


@settings(max_examples=200, deadline=None)
@given(corpora, st.lists(words, min_size=1, max_size=4), st.floats(0, 1), st.integers(1, 5), st.integers(1, 10))
def test_rm3_weights_are_a_distribution(docs, query, w, fb_docs, fb_terms):
    idx = build_sparse(Collection.from_docs(Document(f"d{i}", " ".join(d), "en") for i, d in enumerate(docs)))
    got = rm3_expand(idx, query, fb_docs, fb_terms, w)
    assert all(v > 0 for _, v in got)
    assert sum(v for _, v in got) == pytest.approx(1.0, abs=1e-9)


def _scores(ds, term, params=None):
    idx = build_sparse(Collection.from_docs(Document(f"d{i}", " ".join(d), "en") for i, d in enumerate(ds)), params)
    return dict(bm25_search(idx, [term], len(ds)))


@settings(max_examples=500, deadline=None)
@given(corpora, words, st.lists(words, min_size=1, max_size=30))
def test_adding_a_doc_with_the_term_never_raises_other_scores_without_length_norm(docs, term, extra):
    # with b=0 only the idf factor moves, and idf falls when N and df both grow by one
    p = BM25Params(0.9, 0.0)
    before, after = _scores(docs, term, p), _scores(docs + [extra + [term]], term, p)
    for docid, s in before.items():
        assert after[docid] <= s + 1e-12


def test_adding_a_long_doc_can_raise_scores_under_length_norm():
    # the new document lifts the average length, which outweighs the idf drop
    docs = [["a"]] * 8
    before = _scores(docs, "a")["d0"]
    after = _scores(docs + [["a"] + ["z"] * 30], "a")["d0"]
    assert after > before
