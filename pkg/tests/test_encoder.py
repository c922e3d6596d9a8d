import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ciralkit.encoder import (
    MASK,
    EncoderConfig,
    HashProvider,
    TableProvider,
    as_unit,
    encode_doc,
    encode_query,
    hash_embed,
    load_embedding_table,
    write_embedding_table,
)

CFG = EncoderConfig()


def test_defaults():
    assert (CFG.dim, CFG.query_len, CFG.doc_maxlen, CFG.mask_symbol) == (128, 32, 180, MASK)


def test_query_is_padded_to_query_len():
    p = HashProvider()
    Q = encode_query(p, "who won the race", CFG)
    assert Q.shape == (32, 128) and Q.dtype == np.float32
    assert np.array_equal(Q[4], p.embed(MASK))
    assert np.array_equal(Q[-1], p.embed(MASK))
    long_q = encode_query(p, " ".join(f"w{i}" for i in range(50)), CFG)
    assert long_q.shape == (32, 128)
    assert np.array_equal(long_q[31], p.embed("w31"))


def test_doc_truncation_and_empty_doc():
    p = HashProvider()
    D = encode_doc(p, " ".join(f"w{i}" for i in range(300)), CFG)
    assert D.shape == (180, 128)
    empty = encode_doc(p, "  !! ", CFG)
    assert empty.shape == (1, 128)
    assert np.array_equal(empty[0], p.embed(MASK))


def test_hash_embed_is_deterministic_and_unit():
    a, b = hash_embed("kano", 128, 0), hash_embed("kano", 128, 0)
    assert np.array_equal(a, b)
    assert a.dtype == np.float32
    assert abs(np.linalg.norm(a.astype(np.float64)) - 1) < 1e-6
    assert not np.array_equal(a, hash_embed("kano", 128, 1))
    assert not np.array_equal(a, hash_embed("lagos", 128, 0))


@settings(max_examples=100)
@given(st.text(min_size=1, max_size=20), st.integers(1, 300))
def test_rows_are_unit_norm(term, dim):
    v = hash_embed(term, dim)
    assert v.shape == (dim,)
    assert abs(np.linalg.norm(v.astype(np.float64)) - 1) < 1e-6


def test_as_unit_rejects_zero_and_keeps_unit_float32():
    with pytest.raises(ValueError):
        as_unit(np.zeros(4))
    v = hash_embed("x")
    assert as_unit(v) is v or np.array_equal(as_unit(v), v)
    assert np.allclose(as_unit(np.array([3.0, 4.0])), [0.6, 0.8])


def test_table_round_trip_is_bit_exact(tmp_path):
    table = {w: hash_embed(w, 16, 3) for w in ("a", "b", MASK)}
    table["raw"] = np.array([2.0] + [0.0] * 15)
    write_embedding_table(table, tmp_path / "t.txt")
    prov = load_embedding_table(tmp_path / "t.txt", seed=3)
    assert prov.dim == 16 and len(prov) == 4
    for w in ("a", "b", MASK):
        assert np.array_equal(prov.embed(w), table[w])
    assert np.array_equal(prov.embed("raw"), np.eye(16, dtype=np.float32)[0])
    # unknown terms fall back to the seeded hash vectors
    assert np.array_equal(prov.embed("zzz"), hash_embed("zzz", 16, 3))


def test_table_rejects_inconsistent_rows(tmp_path):
    (tmp_path / "t.txt").write_text("a 1 0 0\nb 1 0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="line 2"):
        load_embedding_table(tmp_path / "t.txt")
    with pytest.raises(ValueError):
        TableProvider({"a": np.ones(3)}, dim=4)


def test_provider_dim_mismatch():
    with pytest.raises(ValueError, match="dim"):
        encode_query(HashProvider(64), "x", CFG)


@pytest.mark.parametrize("kwargs", [{"dim": 0}, {"query_len": 0}, {"doc_maxlen": -1}, {"mask_symbol": "a b"}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        EncoderConfig(**kwargs)
