"""Knowledge base construction, persistence, and per-patient evidence ranking.

A build runs: clinical terms -> concept expansion -> templated queries ->
PubMed retrieval (plus one optional mined hop) -> sentence dedup -> LDA
training -> per-sentence topic vectors and groups -> embeddings. The result
is a directory of sentences.jsonl / embeddings.jsonl / model.json /
manifest.json whose content hash is stable across rebuilds.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .. import __version__
from ..clinical import derive_terms
from ..numerics import ContractViolation, Rng
from .embed import BuiltinEmbedder, FileEmbeddingProvider, embed_sentences
from .entrez import EntrezClient, Sentence, fetch_abstracts
from .lda import (
    DEFAULT_ALPHA,
    DEFAULT_BETA,
    DEFAULT_ITERS,
    DEFAULT_TOPICS,
    TopicModel,
    infer_theta,
    topic_filter,
    train_lda,
)
from .queries import build_queries, multi_hop_expand
from .text import hash64, preprocess_text
from .umls import UmlsClient, expand_concepts

log = logging.getLogger(__name__)

DEFAULT_C = 10
DEFAULT_TOPIC_THRESHOLD = 0.2
HOP_SENTENCE_POOL = 50  # hop-1 sentences mined for hop-2 terms


@dataclass
class KbSentence:
    hash: int
    pmid: str
    text: str
    tokens: list
    cleaned: str
    theta: np.ndarray
    group: int
    order: int  # retrieval order, used for ranking tie-breaks


@dataclass
class KnowledgeBase:
    sentences: list  # of KbSentence
    embeddings: np.ndarray  # (n, dim), row i belongs to sentences[i]
    model: TopicModel
    dim: int
    embed_doc_freq: dict
    embed_n_docs: int
    seed: int
    meta: dict = field(default_factory=dict)

    def sentence_thetas(self):
        return [(s, s.theta) for s in self.sentences]

    def builtin_embedder(self) -> BuiltinEmbedder:
        return BuiltinEmbedder.from_stats(self.dim, self.embed_doc_freq,
                                          self.embed_n_docs)


@dataclass
class KnowledgeMatrix:
    rows: np.ndarray  # (c, dim)
    provenance: list  # (pmid, sentence hash, similarity) per real row
    n_real: int

    @property
    def padded(self) -> bool:
        return self.n_real < self.rows.shape[0]


def rank_top_c(query_embedding: np.ndarray, candidates, c: int = DEFAULT_C) -> KnowledgeMatrix:
    """Cosine-rank candidate (sentence, embedding) pairs; zero rows pad to c.

    Ties break by pmid then retrieval order, so permuting the candidate list
    never changes the result.
    """
    if not candidates:
        raise ContractViolation("rank_top_c: no candidates")
    dim = candidates[0][1].shape[0]
    q = np.asarray(query_embedding, dtype=np.float64)
    if q.shape[0] != dim:
        raise ContractViolation("rank_top_c: query embedding dimension mismatch")
    qn = np.linalg.norm(q)
    scored = []
    for sentence, vec in candidates:
        vn = np.linalg.norm(vec)
        sim = float(q @ vec / (qn * vn)) if qn > 0 and vn > 0 else 0.0
        pmid_key = int(sentence.pmid) if sentence.pmid.isdigit() else 0
        scored.append((-sim, pmid_key, sentence.order, sentence, vec, sim))
    scored.sort(key=lambda row: row[:3])
    rows = np.zeros((c, dim))
    provenance = []
    for i, (_, _, _, sentence, vec, sim) in enumerate(scored[:c]):
        rows[i] = vec
        provenance.append((sentence.pmid, sentence.hash, sim))
    return KnowledgeMatrix(rows=rows, provenance=provenance,
                           n_real=min(len(scored), c))


def pool_knowledge(matrix: KnowledgeMatrix):
    """Mean over non-padded rows. Returns (vector, no_knowledge flag)."""
    if matrix.n_real == 0:
        return np.zeros(matrix.rows.shape[1]), True
    return matrix.rows[:matrix.n_real].mean(axis=0), False


# ---------------------------------------------------------------------------
# building
# ---------------------------------------------------------------------------

def patient_query_set(record, umls_client: UmlsClient, max_queries: int = 20,
                      include_falls_rule: bool = False):
    terms = derive_terms(record, include_falls_rule=include_falls_rule)
    concepts = expand_concepts(terms, umls_client)
    return build_queries(concepts, max_queries=max_queries), terms


def build_kb(patients, umls_client: UmlsClient, entrez_client: EntrezClient,
             topics: int = DEFAULT_TOPICS, alpha: float = DEFAULT_ALPHA,
             beta: float = DEFAULT_BETA, lda_iters: int = DEFAULT_ITERS,
             dim: int = 768, seed: int = 0, max_hops: int = 2,
             k_per_query: int = 10, embedding_file=None,
             include_falls_rule: bool = False) -> KnowledgeBase:
    """Full offline-capable build. ``embedding_file`` switches the sentence
    embedding source from the builtin hasher to an exported JSONL."""
    all_queries = []
    seen_query_text = set()
    for record in patients:
        queries, _ = patient_query_set(record, umls_client,
                                       include_falls_rule=include_falls_rule)
        for q in queries:
            if q.text not in seen_query_text:
                seen_query_text.add(q.text)
                all_queries.append(q)
    docs = fetch_abstracts(all_queries, entrez_client, k_per_query=k_per_query)

    if max_hops >= 2:
        pool = []
        for doc in docs:
            pool.extend(doc.sentences)
        hop2 = multi_hop_expand(pool[:HOP_SENTENCE_POOL], all_queries,
                                umls_client, max_hops=max_hops, hop=2)
        if hop2:
            hop_docs = fetch_abstracts(hop2, entrez_client, k_per_query=k_per_query)
            seen_pmids = {d.pmid for d in docs}
            docs.extend(d for d in hop_docs if d.pmid not in seen_pmids)
            all_queries.extend(hop2)

    sentences = []
    seen_hash = set()
    for doc in docs:
        for s in doc.sentences:
            h = hash64(s.cleaned)
            if h in seen_hash:
                continue
            seen_hash.add(h)
            sentences.append(KbSentence(
                hash=h, pmid=doc.pmid, text=s.raw, tokens=s.tokens,
                cleaned=s.cleaned, theta=np.array([]), group=0,
                order=len(sentences)))
    if not sentences:
        raise ContractViolation("build_kb: retrieval produced no sentences")

    trained = train_lda([s.tokens for s in sentences], t=topics, alpha=alpha,
                        beta=beta, iters=lda_iters, rng=Rng(seed))
    for i, s in enumerate(sentences):
        s.theta = trained.doc_thetas[i]
        s.group = int(np.argmax(s.theta))

    token_lists = [s.tokens for s in sentences]
    if embedding_file is not None:
        provider = FileEmbeddingProvider(embedding_file)
        plain = [Sentence(raw=s.text, tokens=s.tokens, cleaned=s.cleaned)
                 for s in sentences]
        embeddings = embed_sentences(plain, provider)
        dim = provider.dim
        embedder = BuiltinEmbedder(dim=dim).fit(token_lists)
    else:
        embedder = BuiltinEmbedder(dim=dim).fit(token_lists)
        embeddings = np.stack([embedder.embed(s.tokens) for s in sentences])

    return KnowledgeBase(
        sentences=sentences, embeddings=embeddings, model=trained.model,
        dim=dim, embed_doc_freq=embedder.doc_freq, embed_n_docs=embedder.n_docs,
        seed=seed,
        meta={"n_queries": len(all_queries), "n_docs": len(docs),
              "max_hops": max_hops})


def patient_knowledge(kb: KnowledgeBase, record, c: int = DEFAULT_C,
                      threshold: float = DEFAULT_TOPIC_THRESHOLD,
                      metric: str = "cosine", include_falls_rule: bool = False,
                      query_embedder=None):
    """Topic-filter the KB against the patient's combined term query, then
    rank the survivors by embedding similarity into a C x D matrix.

    Returns (KnowledgeMatrix, pooled vector, no_knowledge flag, query text).
    """
    terms = derive_terms(record, include_falls_rule=include_falls_rule)
    surfaces = []
    for t in terms:
        if t.term not in surfaces:
            surfaces.append(t.term)
    query_text = " ".join(surfaces)
    query_tokens, query_cleaned = preprocess_text(query_text)

    kept = topic_filter(kb.sentence_thetas(), query_tokens, kb.model,
                        threshold=threshold, metric=metric)
    if not kept:
        kept = kb.sentences  # degenerate filter: fall back to the full KB
    if query_embedder is None:
        query_embedder = kb.builtin_embedder()
    if isinstance(query_embedder, FileEmbeddingProvider):
        q_vec = query_embedder.lookup([hash64(query_cleaned)])[0]
    else:
        q_vec = query_embedder.embed(query_tokens)
    index_of = {s.hash: i for i, s in enumerate(kb.sentences)}
    candidates = [(s, kb.embeddings[index_of[s.hash]]) for s in kept]
    matrix = rank_top_c(q_vec, candidates, c=c)
    pooled, empty = pool_knowledge(matrix)
    return matrix, pooled, empty, query_cleaned


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

def save_kb(kb: KnowledgeBase, directory) -> str:
    """Write the KB directory; returns the content hash of the data files."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    with (directory / "sentences.jsonl").open("w", encoding="utf-8") as fh:
        for s in kb.sentences:
            fh.write(json.dumps({
                "hash": s.hash, "pmid": s.pmid, "text": s.text,
                "theta": [round(float(x), 12) for x in s.theta],
                "group": s.group,
            }, sort_keys=True) + "\n")

    with (directory / "embeddings.jsonl").open("w", encoding="utf-8") as fh:
        for s, vec in zip(kb.sentences, kb.embeddings):
            fh.write(json.dumps({
                "hash": s.hash, "dim": kb.dim,
                "values": [round(float(x), 12) for x in vec],
            }, sort_keys=True) + "\n")

    model_payload = {
        "T": kb.model.t, "alpha": kb.model.alpha, "beta": kb.model.beta,
        "vocabulary": kb.model.vocabulary,
        "phi": [[round(float(x), 12) for x in row] for row in kb.model.phi],
        "embed": {"dim": kb.dim, "n_docs": kb.embed_n_docs,
                  "df": {k: v for k, v in sorted(kb.embed_doc_freq.items())}},
    }
    (directory / "model.json").write_text(
        json.dumps(model_payload, sort_keys=True), encoding="utf-8")

    content_hash = kb_content_hash(directory)
    manifest = {
        "artifact": "knowledge-base",
        "version": __version__,
        "seed": kb.seed,
        "counts": {"sentences": len(kb.sentences),
                   "pmids": len({s.pmid for s in kb.sentences})},
        "content_hash": content_hash,
        "created": datetime.now(timezone.utc).isoformat(),
        "meta": kb.meta,
    }
    (directory / "manifest.json").write_text(
        json.dumps(manifest, indent=1, sort_keys=True), encoding="utf-8")
    return content_hash


def kb_content_hash(directory) -> str:
    directory = Path(directory)
    digest = hashlib.sha256()
    for name in ("sentences.jsonl", "embeddings.jsonl", "model.json"):
        digest.update(name.encode())
        digest.update((directory / name).read_bytes())
    return digest.hexdigest()


def load_kb(directory) -> KnowledgeBase:
    directory = Path(directory)
    model_payload = json.loads((directory / "model.json").read_text(encoding="utf-8"))
    model = TopicModel(
        t=model_payload["T"], alpha=model_payload["alpha"],
        beta=model_payload["beta"], vocabulary=model_payload["vocabulary"],
        phi=np.asarray(model_payload["phi"], dtype=np.float64))
    embed_meta = model_payload["embed"]

    sentences = []
    with (directory / "sentences.jsonl").open("r", encoding="utf-8") as fh:
        for order, line in enumerate(fh):
            obj = json.loads(line)
            tokens, cleaned = preprocess_text(obj["text"])
            sentences.append(KbSentence(
                hash=int(obj["hash"]), pmid=obj["pmid"], text=obj["text"],
                tokens=tokens, cleaned=cleaned,
                theta=np.asarray(obj["theta"], dtype=np.float64),
                group=int(obj["group"]), order=order))

    vecs = {}
    with (directory / "embeddings.jsonl").open("r", encoding="utf-8") as fh:
        for line in fh:
            obj = json.loads(line)
            vecs[int(obj["hash"])] = np.asarray(obj["values"], dtype=np.float64)
    embeddings = np.stack([vecs[s.hash] for s in sentences])

    manifest = {}
    manifest_path = directory / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    return KnowledgeBase(
        sentences=sentences, embeddings=embeddings, model=model,
        dim=embed_meta["dim"], embed_doc_freq=embed_meta["df"],
        embed_n_docs=embed_meta["n_docs"], seed=manifest.get("seed", 0),
        meta=manifest.get("meta", {}))
