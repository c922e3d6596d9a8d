"""Command-line entry point: ``ciralkit <subcommand> [options]``.

Every command that writes an output also writes ``<output>.manifest.json``
recording inputs (with content hashes), the resolved settings, their hash,
the seed and library versions. Outputs are staged and moved into place only
on success.

Exit codes: 0 success, 1 usage error, 2 data error, 3 external-service failure.
"""

from __future__ import annotations

import argparse
import contextlib
import hashlib
import json
import logging
import os
import platform
import shlex
import shutil
import sys
import tempfile
import time
from pathlib import Path
from typing import Any, Callable, Iterator

import networkx
import numpy as np
import requests

from . import __version__
from .config import ConfigError, config_hash, load_config
from .corpus import CorpusError, load_jsonl, tokenize, write_jsonl
from .encoder import EncoderConfig, HashProvider, load_embedding_table, write_embedding_table
from .evaluation import RunFile, TrecFormatError, evaluate, read_qrels, read_run, write_qrels, write_run
from .jhpolo.generate import (
    ExtractiveMockClient,
    HttpChatClient,
    MockChatClient,
    TransportError,
    generate_examples,
    read_examples,
    write_jsonl as write_records,
)
from .jhpolo.mining import MiningParams, mine_pairs, read_pairs, write_pairs
from .jhpolo.prompt import ResponseParseError
from .jhpolo.qc import HttpScorer, QcParams, StubScorer, SubprocessScorer, apply_qc
from .plaid import IndexFormatError, build_plaid, load_index, save_index
from .search import ExactSearcher, SearchParams, recall_against, search_plaid
from .sparse import BM25Params, RM3Params, SparseIndex, bm25_search, build_sparse, rm3_search
from .synthetic import make_corpus
from .train import (
    ToyEncoder,
    Triple,
    TripleFormatError,
    grad_check,
    read_triples,
    sgd_demo,
    write_triples,
)

logger = logging.getLogger("ciralkit")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_EXTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# name -> (config section, config key, type, help)
OPTIONS: dict[str, tuple[str | None, str, Any, str]] = {
    "corpus": ("paths", "corpus", str, "JSONL corpus"),
    "sparse_index": ("paths", "sparse_index", str, "BM25 index file"),
    "plaid_index": ("paths", "plaid_index", str, "compressed late-interaction index directory"),
    "embeddings": ("paths", "embeddings", str, "embedding table (term v1 ... vd); hashed vectors if absent"),
    "queries": ("paths", "queries", str, "queries TSV (qid<TAB>text)"),
    "qrels": ("paths", "qrels", str, "TREC qrels"),
    "pairs": ("paths", "pairs", str, "mined pairs JSONL"),
    "examples": ("paths", "examples", str, "generated examples JSONL"),
    "triples": ("paths", "triples", str, "training triples TSV"),
    "k1": ("bm25", "k1", float, "BM25 k1"),
    "b": ("bm25", "b", float, "BM25 b"),
    "fb_docs": ("rm3", "fb_docs", int, "RM3 feedback documents"),
    "fb_terms": ("rm3", "fb_terms", int, "RM3 expansion terms"),
    "orig_weight": ("rm3", "orig_weight", float, "RM3 weight of the original query"),
    "dim": ("encoder", "dim", int, "token vector dimension"),
    "query_len": ("encoder", "query_len", int, "padded query length"),
    "doc_maxlen": ("encoder", "doc_maxlen", int, "document truncation length"),
    "k_centroids": ("index", "k_centroids", int, "number of centroids (0 = 4*sqrt(tokens))"),
    "iters": ("index", "iters", int, "Lloyd iterations"),
    "k": ("search", "k", int, "results per query"),
    "n_probe": ("search", "n_probe", int, "centroids probed per query token"),
    "n_candidates": ("search", "n_candidates", int, "documents reranked (0 = max(4k, 100))"),
    "min_query_doc_chars": ("mining", "min_query_doc_chars", int, "minimum query-document length"),
    "top_k": ("mining", "top_k", int, "candidates considered per query document"),
    "max_score_ratio": ("mining", "max_score_ratio", float, "maximum candidate/query BM25 ratio"),
    "max_lcs_frac": ("mining", "max_lcs_frac", float, "maximum shared-substring fraction"),
    "min_non_lcs_chars": ("mining", "min_non_lcs_chars", int, "minimum characters outside the shared substring"),
    "min_cand_chars": ("mining", "min_cand_chars", int, "minimum candidate length"),
    "matching": ("mining", "matching", str, "pair selection: max or greedy"),
    "workers": ("mining", "workers", int, "mining processes"),
    "margin": ("qc", "margin", float, "minimum positive-minus-negative scorer margin"),
    "scorer": ("qc", "scorer", str, "stub | cmd:<command line> | http(s)://url"),
    "llm_url": ("llm", "url", str, "chat-completion endpoint"),
    "llm_model": ("llm", "model", str, "model name"),
    "max_retries": ("llm", "max_retries", int, "retries per pair on transport errors"),
    "base_delay": ("llm", "base_delay", float, "initial backoff in seconds"),
    "concurrency": ("llm", "concurrency", int, "concurrent chat requests"),
    "rate_limit": ("llm", "rate_limit", float, "requests per second (0 = unlimited)"),
}


def _add_options(p: argparse.ArgumentParser, names: list[str]) -> None:
    for name in names:
        _, _, typ, help_text = OPTIONS[name]
        p.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None, help=help_text)


def _resolve(args: argparse.Namespace, cfg: dict[str, Any], names: list[str]) -> dict[str, Any]:
    out = {}
    for name in names:
        section, key, _, _ = OPTIONS[name]
        value = getattr(args, name, None)
        if value is None:
            value = cfg[section][key] if section else cfg[key]
        out[name] = value
    return out


def _need(settings: dict[str, Any], *names: str) -> None:
    for name in names:
        if not settings.get(name):
            raise UsageError(f"--{name.replace('_', '-')} is required (flag or config)")
        if OPTIONS[name][0] == "paths" and not Path(settings[name]).exists():
            raise DataError(f"{settings[name]}: no such file or directory")


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    if path.is_dir():
        for child in sorted(p for p in path.rglob("*") if p.is_file()):
            h.update(child.relative_to(path).as_posix().encode())
            h.update(child.read_bytes())
    else:
        h.update(path.read_bytes())
    return h.hexdigest()


@contextlib.contextmanager
def staged(target: str | Path, is_dir: bool = False) -> Iterator[Path]:
    """Yield a temporary path next to ``target``; move it into place on success."""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    if is_dir:
        tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    else:
        fd, name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
        os.close(fd)
        tmp = Path(name)
    try:
        yield tmp
    except BaseException:
        if is_dir:
            shutil.rmtree(tmp, ignore_errors=True)
        else:
            tmp.unlink(missing_ok=True)
        raise
    if is_dir and target.exists():
        shutil.rmtree(target)
    os.replace(tmp, target)


class Context:
    def __init__(self, command: str, args: argparse.Namespace, cfg: dict[str, Any], settings: dict[str, Any]):
        self.command = command
        self.args = args
        self.cfg = cfg
        self.seed = int(args.seed if args.seed is not None else cfg["seed"])
        self.settings = dict(settings, seed=self.seed)
        self.inputs: list[str] = []

    def input(self, path: str | Path) -> Path:
        self.inputs.append(str(path))
        return Path(path)

    def manifest(self, output: str | Path, extra: dict[str, Any] | None = None) -> None:
        settings = {"command": self.command, **self.settings}
        record = {
            "command": self.command,
            "argv": sys.argv[1:],
            "settings": settings,
            "config_hash": config_hash(settings),
            "seed": self.seed,
            "inputs": {p: _sha256(Path(p)) for p in self.inputs},
            "output": str(output),
            "versions": {
                "ciralkit": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "networkx": networkx.__version__,
            },
            "created": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
        }
        if self.command in ("index-plaid", "grad-check"):
            record["training_metadata"] = self.cfg["training"]
        if extra:
            record.update(extra)
        Path(f"{output}.manifest.json").write_text(json.dumps(record, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_queries(path: Path) -> list[tuple[str, str]]:
    queries = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line:
                continue
            qid, sep, text = line.partition("\t")
            if not sep or not qid:
                raise DataError(f"{path}: line {lineno}: expected 'qid<TAB>text'")
            queries.append((qid, text))
    return queries


def _encoder_cfg(s: dict[str, Any]) -> EncoderConfig:
    return EncoderConfig(s["dim"], s["query_len"], s["doc_maxlen"])


def _provider(ctx: Context, s: dict[str, Any], dim: int):
    if s.get("embeddings"):
        provider = load_embedding_table(ctx.input(s["embeddings"]), seed=ctx.seed)
        if provider.dim != dim:
            raise DataError(f"embedding table has dim {provider.dim}, expected {dim}")
        return provider
    return HashProvider(dim, ctx.seed)


def _write_run(results: dict[str, list[tuple[str, float]]], out: str, tag: str) -> None:
    with staged(out) as tmp:
        write_run(RunFile.from_results(results, tag), tmp)


# -- commands ---------------------------------------------------------------


def cmd_synth(ctx: Context) -> int:
    a = ctx.args
    sc = make_corpus(n_docs=a.docs, n_topics=a.topics, n_queries=a.num_queries, seed=ctx.seed)
    with staged(a.out_dir, is_dir=True) as tmp:
        write_jsonl(sc.collection, tmp / "corpus.jsonl")
        write_embedding_table(sc.embeddings, tmp / "embeddings.txt")
        (tmp / "queries.tsv").write_text("".join(f"{q}\t{t}\n" for q, t in sc.queries), encoding="utf-8")
        write_qrels(sc.qrels, tmp / "qrels.txt")
    ctx.manifest(a.out_dir)
    print(f"wrote {len(sc.collection)} documents and {len(sc.queries)} queries to {a.out_dir}")
    return EXIT_OK


def cmd_ingest(ctx: Context) -> int:
    src = ctx.input(ctx.args.input)
    collection = load_jsonl(src)
    with staged(ctx.args.out) as tmp:
        write_jsonl(collection, tmp)
    ctx.manifest(ctx.args.out, {"documents": len(collection)})
    print(f"ingested {len(collection)} documents")
    return EXIT_OK


def cmd_index_sparse(ctx: Context) -> int:
    s = ctx.settings
    _need(s, "corpus")
    collection = load_jsonl(ctx.input(s["corpus"]))
    index = build_sparse(collection, BM25Params(s["k1"], s["b"]))
    with staged(ctx.args.out) as tmp:
        index.save(tmp)
    ctx.manifest(ctx.args.out, {"documents": index.doc_count, "terms": len(index.postings)})
    print(f"indexed {index.doc_count} documents, {len(index.postings)} terms")
    return EXIT_OK


def cmd_index_plaid(ctx: Context) -> int:
    s = ctx.settings
    _need(s, "corpus")
    collection = load_jsonl(ctx.input(s["corpus"]))
    cfg = _encoder_cfg(s)
    provider = _provider(ctx, s, cfg.dim)
    source = f"table:{_sha256(Path(s['embeddings']))}" if s.get("embeddings") else f"hash:{ctx.seed}"
    index = build_plaid(
        collection, provider, cfg, k=s["k_centroids"] or None, seed=ctx.seed, iters=s["iters"],
        extra={"embeddings": source},
    )
    with staged(ctx.args.out, is_dir=True) as tmp:
        save_index(index, tmp)
    ctx.manifest(ctx.args.out, {"documents": len(index.docids), "tokens": index.num_tokens,
                                "centroids": index.num_centroids, "alpha": index.alpha})
    print(f"indexed {len(index.docids)} documents, {index.num_tokens} tokens, "
          f"{index.num_centroids} centroids, alpha={index.alpha:.6f}")
    return EXIT_OK


def _sparse_queries(ctx: Context) -> tuple[SparseIndex, list[tuple[str, str]]]:
    s = ctx.settings
    _need(s, "sparse_index", "queries")
    index = SparseIndex.load(ctx.input(s["sparse_index"]))
    return index, read_queries(ctx.input(s["queries"]))


def cmd_search_bm25(ctx: Context) -> int:
    index, queries = _sparse_queries(ctx)
    k = ctx.settings["k"]
    results = {qid: bm25_search(index, tokenize(text), k) for qid, text in queries}
    _write_run(results, ctx.args.out, ctx.args.tag or "bm25")
    ctx.manifest(ctx.args.out)
    return EXIT_OK


def cmd_search_rm3(ctx: Context) -> int:
    index, queries = _sparse_queries(ctx)
    s = ctx.settings
    params = RM3Params(s["fb_docs"], s["fb_terms"], s["orig_weight"])
    results = {qid: rm3_search(index, tokenize(text), s["k"], params) for qid, text in queries}
    _write_run(results, ctx.args.out, ctx.args.tag or "bm25-rm3")
    ctx.manifest(ctx.args.out)
    return EXIT_OK


def cmd_search_plaid(ctx: Context) -> int:
    s = ctx.settings
    _need(s, "plaid_index", "queries")
    index = load_index(ctx.input(s["plaid_index"]))
    source = index.extra.get("embeddings", "")
    if source.startswith("table:") and not s.get("embeddings"):
        raise UsageError("index was built from an embedding table; pass --embeddings")
    if source.startswith("hash:") and not s.get("embeddings") and int(source[5:]) != ctx.seed:
        raise UsageError(f"index used hashed vectors with seed {source[5:]}; pass --seed {source[5:]}")
    provider = _provider(ctx, s, index.dim)
    params = SearchParams(s["k"], s["n_probe"], s["n_candidates"] or None)
    queries = read_queries(ctx.input(s["queries"]))
    results = {qid: search_plaid(index, provider, text, params) for qid, text in queries}
    extra = {}
    if ctx.args.compare_exact:
        collection = load_jsonl(ctx.input(ctx.args.compare_exact))
        exact = ExactSearcher(collection, provider, index.cfg)
        recalls = [recall_against(exact.search(text, s["k"]), results[qid]) for qid, text in queries]
        mean = sum(recalls) / len(recalls) if recalls else 0.0
        extra["recall_vs_exact"] = mean
        print(f"recall@{s['k']}_vs_exact\t{mean:.4f}")
    _write_run(results, ctx.args.out, ctx.args.tag or "plaid")
    ctx.manifest(ctx.args.out, extra)
    return EXIT_OK


def cmd_search_exact(ctx: Context) -> int:
    s = ctx.settings
    _need(s, "corpus", "queries")
    collection = load_jsonl(ctx.input(s["corpus"]))
    cfg = _encoder_cfg(s)
    searcher = ExactSearcher(collection, _provider(ctx, s, cfg.dim), cfg)
    queries = read_queries(ctx.input(s["queries"]))
    results = {qid: searcher.search(text, s["k"]) for qid, text in queries}
    _write_run(results, ctx.args.out, ctx.args.tag or "exact")
    ctx.manifest(ctx.args.out)
    return EXIT_OK


def _mining_params(s: dict[str, Any]) -> MiningParams:
    return MiningParams(
        s["min_query_doc_chars"], s["top_k"], s["max_score_ratio"], s["max_lcs_frac"],
        s["min_non_lcs_chars"], s["min_cand_chars"], s["matching"],
    )


def cmd_mine_pairs(ctx: Context) -> int:
    s = ctx.settings
    _need(s, "corpus")
    collection = load_jsonl(ctx.input(s["corpus"]))
    if s.get("sparse_index"):
        index = SparseIndex.load(ctx.input(s["sparse_index"]))
        if index.docids != collection.docids:
            raise DataError("sparse index does not match the corpus")
    else:
        index = build_sparse(collection, BM25Params(s["k1"], s["b"]))
    pairs = mine_pairs(index, collection, _mining_params(s), workers=s["workers"])
    with staged(ctx.args.out) as tmp:
        write_pairs(pairs, tmp)
    ctx.manifest(ctx.args.out, {"pairs": len(pairs)})
    print(f"mined {len(pairs)} pairs")
    return EXIT_OK


def cmd_gen_queries(ctx: Context) -> int:
    s = ctx.settings
    _need(s, "pairs", "corpus")
    collection = load_jsonl(ctx.input(s["corpus"]))
    pairs = read_pairs(ctx.input(s["pairs"]))
    missing = [p.pair_id for p in pairs if p.doc_a not in collection or p.doc_b not in collection]
    if missing:
        raise DataError(f"pairs reference unknown documents: {missing[:3]}")
    if ctx.args.mock == "extractive":
        client = ExtractiveMockClient()
    elif ctx.args.mock:
        client = MockChatClient(ctx.input(ctx.args.mock).read_text(encoding="utf-8"))
    else:
        url = s["llm_url"] or os.environ.get("CIRAL_LLM_URL")
        model = s["llm_model"] or os.environ.get("CIRAL_LLM_MODEL")
        if not url or not model:
            raise UsageError("no chat endpoint: pass --mock, or set llm url/model (config or CIRAL_LLM_URL/CIRAL_LLM_MODEL)")
        client = HttpChatClient(url, model, os.environ.get("CIRAL_LLM_KEY"), rate_limit=s["rate_limit"] or None)
    result = generate_examples(
        client, pairs, collection, max_retries=s["max_retries"], base_delay=s["base_delay"],
        concurrency=s["concurrency"],
    )
    out = ctx.args.out
    with staged(out) as tmp:
        write_records(result.examples, tmp)
    write_records(result.failures, f"{out}.failures.jsonl")
    write_records(result.raw, f"{out}.raw.jsonl")
    ctx.manifest(out, {"pairs": len(pairs), "examples": len(result.examples), "failures": len(result.failures)})
    print(f"generated {len(result.examples)} examples from {len(pairs)} pairs ({len(result.failures)} failed)")
    transport = [f for f in result.failures if f["stage"] == "transport"]
    if pairs and len(transport) == len(pairs):
        logger.error("every chat request failed")
        return EXIT_EXTERNAL
    return EXIT_OK


def _scorer(spec: str):
    if spec == "stub":
        return StubScorer()
    if spec.startswith("cmd:"):
        return SubprocessScorer(shlex.split(spec[4:]))
    if spec.startswith(("http://", "https://")):
        return HttpScorer(spec)
    raise UsageError(f"unknown scorer {spec!r}")


def cmd_qc(ctx: Context) -> int:
    s = ctx.settings
    _need(s, "examples", "corpus")
    collection = load_jsonl(ctx.input(s["corpus"]))
    examples = read_examples(ctx.input(s["examples"]))
    qc = QcParams(frozenset(ctx.cfg["qc"]["banned_words"]), s["margin"])
    scorer = _scorer(s["scorer"])
    try:
        report = apply_qc(examples, collection, scorer, qc)
    finally:
        if isinstance(scorer, SubprocessScorer):
            scorer.close()
    with staged(ctx.args.out) as tmp:
        write_records(report.kept, tmp)
    rejected = [dict(vars(e), reason="banned word") for e in report.banned]
    rejected += [dict(vars(e), reason="margin") for e in report.low_margin]
    write_records(rejected, f"{ctx.args.out}.rejected.jsonl")
    ctx.manifest(ctx.args.out, {"kept": len(report.kept), "banned": len(report.banned),
                                "low_margin": len(report.low_margin)})
    print(f"kept {len(report.kept)} of {len(examples)} "
          f"(banned words: {len(report.banned)}, margin: {len(report.low_margin)})")
    return EXIT_OK


def cmd_make_triples(ctx: Context) -> int:
    s = ctx.settings
    _need(s, "examples", "corpus")
    collection = load_jsonl(ctx.input(s["corpus"]))
    examples = read_examples(ctx.input(s["examples"]))
    if ctx.args.sample and ctx.args.sample < len(examples):
        # uniform without replacement, file order kept
        rng = np.random.default_rng(ctx.seed)
        keep = sorted(rng.choice(len(examples), size=ctx.args.sample, replace=False).tolist())
        examples = [examples[i] for i in keep]
    try:
        triples = [Triple(e.query, collection.get(e.pos).text, collection.get(e.neg).text) for e in examples]
    except KeyError as exc:
        raise DataError(f"example references unknown document {exc}") from exc
    with staged(ctx.args.out) as tmp:
        n = write_triples(triples, tmp)
    ctx.manifest(ctx.args.out, {"triples": n})
    print(f"wrote {n} triples")
    return EXIT_OK


def cmd_grad_check(ctx: Context) -> int:
    s = ctx.settings
    _need(s, "triples")
    a = ctx.args
    triples = list(read_triples(ctx.input(s["triples"])))
    if not triples:
        raise DataError("no triples to check")
    rng = np.random.default_rng(ctx.seed)
    picked = sorted(rng.choice(len(triples), size=min(a.n, len(triples)), replace=False).tolist())
    cfg = EncoderConfig(s["dim"], s["query_len"], s["doc_maxlen"])
    enc = ToyEncoder.init(cfg.dim, seed=ctx.seed)
    rows = []
    for i in picked:
        r = grad_check(enc, triples[i], cfg, epsilon=a.epsilon, n_entries=a.entries, seed=ctx.seed + i)
        rows.append({"triple": i, "max_rel_error": r.max_rel_error, "checked": r.checked, "skipped_ties": r.skipped_ties})
    worst = max(r["max_rel_error"] for r in rows)
    report: dict[str, Any] = {"epsilon": a.epsilon, "tolerance": a.tolerance, "max_rel_error": worst,
                              "passed": worst < a.tolerance, "triples": rows}
    if a.demo_steps:
        report["demo_losses"] = sgd_demo(enc, [triples[i] for i in picked], steps=a.demo_steps, cfg=cfg)
    print(f"max_rel_error\t{worst:.3e}\t{'PASS' if worst < a.tolerance else 'FAIL'}")
    if a.out:
        with staged(a.out) as tmp:
            tmp.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        ctx.manifest(a.out)
    return EXIT_OK if worst < a.tolerance else EXIT_DATA


def cmd_eval(ctx: Context) -> int:
    a = ctx.args
    run = read_run(ctx.input(a.run))
    qrels = read_qrels(ctx.input(a.qrels))
    metrics = a.metric or ["ndcg@20", "r@100", "judged@20"]
    try:
        results = evaluate(run, qrels, metrics, gain=a.gain)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    lines = []
    for name, res in results.items():
        lines += [f"{topic}\t{name}\t{value:.4f}" for topic, value in sorted(res.per_topic.items())]
    lines += [f"all\t{name}\t{res.mean:.4f}" for name, res in results.items()]
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if a.out:
        with staged(a.out) as tmp:
            tmp.write_text(text, encoding="utf-8")
        ctx.manifest(a.out)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

COMMANDS: dict[str, tuple[Callable[[Context], int], list[str], str]] = {
    "synth": (cmd_synth, [], "write a seeded synthetic corpus, embeddings, queries and qrels"),
    "ingest": (cmd_ingest, [], "validate and normalize a JSONL corpus"),
    "index-sparse": (cmd_index_sparse, ["corpus", "k1", "b"], "build a BM25 index"),
    "index-plaid": (cmd_index_plaid, ["corpus", "embeddings", "dim", "query_len", "doc_maxlen",
                                      "k_centroids", "iters"], "build the compressed token index"),
    "search-bm25": (cmd_search_bm25, ["sparse_index", "queries", "k"], "BM25 retrieval"),
    "search-rm3": (cmd_search_rm3, ["sparse_index", "queries", "k", "fb_docs", "fb_terms", "orig_weight"],
                   "BM25 with RM3 expansion"),
    "search-plaid": (cmd_search_plaid, ["plaid_index", "queries", "embeddings", "k", "n_probe", "n_candidates"],
                     "approximate MaxSim over the compressed index"),
    "search-exact": (cmd_search_exact, ["corpus", "queries", "embeddings", "dim", "query_len", "doc_maxlen", "k"],
                     "brute-force MaxSim"),
    "mine-pairs": (cmd_mine_pairs, ["corpus", "sparse_index", "k1", "b", "min_query_doc_chars", "top_k",
                                    "max_score_ratio", "max_lcs_frac", "min_non_lcs_chars", "min_cand_chars",
                                    "matching", "workers"], "select document pairs for example generation"),
    "gen-queries": (cmd_gen_queries, ["pairs", "corpus", "llm_url", "llm_model", "max_retries", "base_delay",
                                      "concurrency", "rate_limit"], "prompt the chat model for each pair"),
    "qc": (cmd_qc, ["examples", "corpus", "margin", "scorer"], "banned-word and score-margin filters"),
    "make-triples": (cmd_make_triples, ["examples", "corpus"], "examples -> query/pos/neg TSV"),
    "grad-check": (cmd_grad_check, ["triples", "dim", "query_len", "doc_maxlen"],
                   "finite-difference check of the contrastive loss gradient"),
    "eval": (cmd_eval, [], "nDCG@k, R@k and Judged@k"),
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ciralkit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, options, help_text) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", help="TOML config file; flags override it")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--log-level", default="WARNING")
        _add_options(p, options)
        if name.startswith("search-"):
            p.add_argument("--out", required=True, help="TREC run output")
            p.add_argument("--tag", default=None)
        elif name == "synth":
            p.add_argument("--out-dir", required=True)
            p.add_argument("--docs", type=int, default=500)
            p.add_argument("--topics", type=int, default=20)
            p.add_argument("--num-queries", type=int, default=20)
        elif name == "ingest":
            p.add_argument("--input", required=True)
            p.add_argument("--out", required=True)
        elif name == "eval":
            p.add_argument("--run", required=True)
            p.add_argument("--qrels", required=True)
            p.add_argument("--metric", action="append", help="ndcg@k, r@k or judged@k; repeatable")
            p.add_argument("--gain", choices=["linear", "exponential"], default="linear")
            p.add_argument("--out", default=None)
        elif name == "grad-check":
            p.add_argument("--n", type=int, default=20, help="triples to check")
            p.add_argument("--epsilon", type=float, default=1e-5)
            p.add_argument("--entries", type=int, default=64, help="parameter entries sampled per triple")
            p.add_argument("--tolerance", type=float, default=1e-4)
            p.add_argument("--demo-steps", type=int, default=0)
            p.add_argument("--out", default=None)
        else:
            p.add_argument("--out", required=True)
        if name == "make-triples":
            p.add_argument("--sample", type=int, default=0, metavar="N",
                           help="keep a seeded random subset of N examples (0 keeps all)")
        if name == "search-plaid":
            p.add_argument("--compare-exact", metavar="CORPUS", default=None,
                           help="also run exact search over CORPUS and report recall against it")
        if name == "gen-queries":
            p.add_argument("--mock", metavar="BODY_JSON", default=None,
                           help="answer every prompt with this chat-completion body; "
                                "'extractive' builds queries from each document's own words")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    func, options, _ = COMMANDS[args.command]
    try:
        cfg = load_config(args.config)
        settings = _resolve(args, cfg, options)
        ctx = Context(args.command, args, cfg, settings)
        return func(ctx)
    except (UsageError, ConfigError) as exc:
        print(f"ciralkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TransportError, requests.RequestException) as exc:
        print(f"ciralkit {args.command}: external service failed: {exc}", file=sys.stderr)
        return EXIT_EXTERNAL
    except (DataError, CorpusError, TrecFormatError, IndexFormatError, TripleFormatError,
            ResponseParseError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"ciralkit {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
