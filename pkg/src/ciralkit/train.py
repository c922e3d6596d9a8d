"""Contrastive training machinery that runs without a GPU.

The real encoder is replaced by :class:`ToyEncoder`, a learned linear map
over hashed term vectors followed by row normalization. That is enough to
exercise the padded-query MaxSim scoring path, the two-way cross-entropy
loss, and its analytic gradient end to end.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence, TypeVar

import numpy as np

from .corpus import LANGS, Document
from .encoder import EncoderConfig, doc_terms, hash_embed, query_terms

T = TypeVar("T")

# Published fine-tuning settings, kept for run manifests; nothing here trains a transformer.
TRAINING_METADATA = {
    "mlm": {"steps": 200_000, "learning_rate": 1e-5, "batch_size": 48, "max_seq_len": 512,
            "languages": list(LANGS), "schedule": "round-robin"},
    "retrieval": {"steps": 200_000, "learning_rate": 5e-6, "batch_size": 64,
                  "query_len": 32, "loss": "two-way cross-entropy"},
}

TIE_GAP = 1e-6


class TripleFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Triple:
    query_text: str
    pos_text: str
    neg_text: str

    def __post_init__(self) -> None:
        if not (self.query_text and self.pos_text and self.neg_text):
            raise TripleFormatError("triple fields must be non-empty")


def read_triples(path: str | Path) -> Iterator[Triple]:
    """Stream ``query<TAB>positive<TAB>negative`` lines."""
    with open(path, encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise TripleFormatError(f"{path}: line {lineno}: expected 3 fields, got {len(fields)}")
            try:
                yield Triple(*fields)
            except TripleFormatError as exc:
                raise TripleFormatError(f"{path}: line {lineno}: {exc}") from exc


def write_triples(triples: Iterable[Triple], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for t in triples:
            fh.write("\t".join(_one_line(x) for x in (t.query_text, t.pos_text, t.neg_text)) + "\n")
            n += 1
    return n


def _one_line(text: str) -> str:
    return " ".join(text.split())


def contrastive_ce_loss(s_pos: float, s_neg: float) -> float:
    """``-log softmax(s_pos | s_pos, s_neg)``, stable for large score gaps."""
    m = max(s_pos, s_neg)
    return m - s_pos + math.log(math.exp(s_pos - m) + math.exp(s_neg - m))


def _loss_grads(s_pos: float, s_neg: float) -> tuple[float, float]:
    p_neg = 1.0 / (1.0 + math.exp(s_pos - s_neg))
    return -p_neg, p_neg


class ToyEncoder:
    """Token vector ``normalize(W @ h(term))`` for a fixed hashed ``h``."""

    def __init__(self, W: np.ndarray, seed: int = 0) -> None:
        W = np.asarray(W, dtype=np.float64)
        if W.ndim != 2 or W.shape[0] != W.shape[1]:
            raise ValueError("W must be square")
        if not np.all(np.isfinite(W)):
            raise ValueError("W must be finite")
        self.W = W
        self.seed = seed
        self._h: dict[str, np.ndarray] = {}

    @classmethod
    def init(cls, dim: int = 128, scale: float = 0.1, seed: int = 0) -> "ToyEncoder":
        rng = np.random.default_rng(seed)
        return cls(np.eye(dim) + scale * rng.standard_normal((dim, dim)) / math.sqrt(dim), seed)

    @property
    def dim(self) -> int:
        return self.W.shape[0]

    def raw(self, terms: Sequence[str]) -> np.ndarray:
        rows = []
        for t in terms:
            h = self._h.get(t)
            if h is None:
                h = self._h[t] = hash_embed(t, self.dim, self.seed).astype(np.float64)
            rows.append(h)
        return np.stack(rows)

    def forward(self, terms: Sequence[str], W: np.ndarray | None = None):
        W = self.W if W is None else W
        H = self.raw(terms)
        U = H @ W.T
        norms = np.maximum(np.linalg.norm(U, axis=1, keepdims=True), 1e-12)
        return H, U, norms, U / norms


def _texts(t: Triple, cfg: EncoderConfig) -> tuple[list[str], list[str], list[str]]:
    # duplicate document terms give identical rows; dropping them leaves MaxSim unchanged
    # and keeps argmax ties between identical rows out of the gradient check
    pos = list(dict.fromkeys(doc_terms(t.pos_text, cfg)))
    neg = list(dict.fromkeys(doc_terms(t.neg_text, cfg)))
    return query_terms(t.query_text, cfg), pos, neg


def _score(Eq: np.ndarray, Ed: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    sims = Eq @ Ed.T
    best = np.argmax(sims, axis=1)
    if sims.shape[1] > 1:
        top2 = np.sort(sims, axis=1)[:, -2:]
        gaps = top2[:, 1] - top2[:, 0]
    else:
        gaps = np.full(len(sims), np.inf)
    return float(sims[np.arange(len(sims)), best].sum()), best, gaps


def _cfg_for(enc: ToyEncoder, cfg: EncoderConfig | None) -> EncoderConfig:
    cfg = cfg or EncoderConfig(dim=enc.dim)
    if cfg.dim != enc.dim:
        raise ValueError("encoder and config dimensions differ")
    return cfg


def triple_loss(enc: ToyEncoder, t: Triple, cfg: EncoderConfig | None = None, W: np.ndarray | None = None) -> float:
    cfg = _cfg_for(enc, cfg)
    q, p, n = _texts(t, cfg)
    Eq = enc.forward(q, W)[3]
    s_pos = _score(Eq, enc.forward(p, W)[3])[0]
    s_neg = _score(Eq, enc.forward(n, W)[3])[0]
    return contrastive_ce_loss(s_pos, s_neg)


def triple_scores(enc: ToyEncoder, t: Triple, cfg: EncoderConfig | None = None) -> tuple[float, float]:
    cfg = _cfg_for(enc, cfg)
    q, p, n = _texts(t, cfg)
    Eq = enc.forward(q)[3]
    return _score(Eq, enc.forward(p)[3])[0], _score(Eq, enc.forward(n)[3])[0]


def _backprop_rows(H, U, norms, E, dE) -> np.ndarray:
    """dL/dW for rows ``E = normalize(H W^T)`` given ``dL/dE``."""
    radial = np.sum(E * dE, axis=1, keepdims=True)
    dU = np.where(norms > 1e-12, (dE - radial * E) / norms, dE / 1e-12)
    return dU.T @ H


def triple_loss_grad(
    enc: ToyEncoder, t: Triple, cfg: EncoderConfig | None = None
) -> tuple[float, np.ndarray]:
    """Loss and its analytic gradient with respect to ``enc.W``."""
    cfg = _cfg_for(enc, cfg)
    q, p, n = _texts(t, cfg)
    Hq, Uq, Nq, Eq = enc.forward(q)
    fwd_p, fwd_n = enc.forward(p), enc.forward(n)
    s_pos, best_p, _ = _score(Eq, fwd_p[3])
    s_neg, best_n, _ = _score(Eq, fwd_n[3])
    g_pos, g_neg = _loss_grads(s_pos, s_neg)

    dEq = g_pos * fwd_p[3][best_p] + g_neg * fwd_n[3][best_n]
    dEp = np.zeros_like(fwd_p[3])
    np.add.at(dEp, best_p, g_pos * Eq)
    dEn = np.zeros_like(fwd_n[3])
    np.add.at(dEn, best_n, g_neg * Eq)

    grad = _backprop_rows(Hq, Uq, Nq, Eq, dEq)
    grad += _backprop_rows(*fwd_p, dEp)
    grad += _backprop_rows(*fwd_n, dEn)
    return contrastive_ce_loss(s_pos, s_neg), grad


def _assignments(enc: ToyEncoder, t: Triple, cfg: EncoderConfig, W: np.ndarray):
    q, p, n = _texts(t, cfg)
    Eq = enc.forward(q, W)[3]
    _, bp, gp = _score(Eq, enc.forward(p, W)[3])
    _, bn, gn = _score(Eq, enc.forward(n, W)[3])
    return np.concatenate([bp, bn]), float(min(gp.min(), gn.min()))


@dataclass
class GradCheck:
    max_rel_error: float
    checked: int
    skipped_ties: int


def grad_check(
    enc: ToyEncoder,
    t: Triple,
    cfg: EncoderConfig | None = None,
    epsilon: float = 1e-5,
    n_entries: int = 64,
    seed: int = 0,
    floor: float = 1e-7,
) -> GradCheck:
    """Compare the analytic gradient with central differences on sampled entries of W.

    An entry is skipped when either perturbed point changes a MaxSim argmax
    or brings the top two similarities of some query row within ``TIE_GAP``;
    MaxSim is not differentiable there. Relative error is
    ``|a - n| / max(|a|, |n|, floor)``.
    """
    cfg = _cfg_for(enc, cfg)
    _, grad = triple_loss_grad(enc, t, cfg)
    base, _ = _assignments(enc, t, cfg, enc.W)
    rng = np.random.default_rng(seed)
    d = enc.dim
    flat = rng.choice(d * d, size=min(n_entries, d * d), replace=False)
    worst, checked, skipped = 0.0, 0, 0
    for idx in flat:
        i, j = divmod(int(idx), d)
        values = []
        stable = True
        for sign in (1.0, -1.0):
            W = enc.W.copy()
            W[i, j] += sign * epsilon
            assign, gap = _assignments(enc, t, cfg, W)
            if gap < TIE_GAP or not np.array_equal(assign, base):
                stable = False
                break
            values.append(triple_loss(enc, t, cfg, W))
        if not stable:
            skipped += 1
            continue
        numeric = (values[0] - values[1]) / (2 * epsilon)
        analytic = grad[i, j]
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
        worst = max(worst, err)
        checked += 1
    return GradCheck(float(worst), checked, skipped)


def sgd_demo(
    enc: ToyEncoder, triples: Sequence[Triple], lr: float = 0.05, steps: int = 20, cfg: EncoderConfig | None = None
) -> list[float]:
    """Full-batch gradient descent on W; returns the mean loss before each step."""
    cfg = _cfg_for(enc, cfg)
    history = []
    for _ in range(steps):
        total, grad = 0.0, np.zeros_like(enc.W)
        for t in triples:
            loss, g = triple_loss_grad(enc, t, cfg)
            total += loss
            grad += g
        history.append(total / len(triples))
        enc.W = enc.W - lr * grad / len(triples)
    return history


def round_robin(streams: Sequence[Iterable[T]]) -> Iterator[T]:
    """Take one item from each live stream in turn until all are exhausted."""
    live = [iter(s) for s in streams]
    while live:
        still = []
        for it in live:
            try:
                item = next(it)
            except StopIteration:
                continue
            still.append(it)
            yield item
        live = still


def round_robin_by_lang(docs: Iterable[Document], order: Sequence[str] = LANGS) -> Iterator[Document]:
    """Group documents by language (keeping their order) and interleave in ``order``.

    Languages missing from ``order`` follow, in first-seen order.
    """
    by_lang: dict[str, list[Document]] = {lang: [] for lang in order}
    for doc in docs:
        by_lang.setdefault(doc.lang, []).append(doc)
    return round_robin(list(by_lang.values()))
