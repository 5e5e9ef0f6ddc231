"""UMLS-guided biomedical retrieval: concept expansion, PubMed fetch,
topic filtering, and knowledge-matrix assembly."""

from pathlib import Path

from .embed import BuiltinEmbedder, FileEmbeddingProvider, MissingEmbeddingError
from .entrez import AbstractDoc, EntrezClient, Sentence, fetch_abstracts
from .kb import (
    KnowledgeBase,
    KnowledgeMatrix,
    build_kb,
    kb_content_hash,
    load_kb,
    patient_knowledge,
    pool_knowledge,
    rank_top_c,
    save_kb,
)
from .lda import TopicModel, infer_theta, topic_filter, train_lda
from .queries import Query, build_queries, multi_hop_expand
from .text import hash64, preprocess_text, sentence_hash, split_sentences, stop_words
from .umls import Concept, UmlsClient, expand_concepts


def default_fixtures_dir() -> Path:
    """Packaged offline fixture corpus (recorded-response layout)."""
    return Path(__file__).resolve().parent.parent / "data" / "fixtures"


__all__ = [
    "AbstractDoc",
    "BuiltinEmbedder",
    "Concept",
    "EntrezClient",
    "FileEmbeddingProvider",
    "KnowledgeBase",
    "KnowledgeMatrix",
    "MissingEmbeddingError",
    "Query",
    "Sentence",
    "TopicModel",
    "UmlsClient",
    "build_kb",
    "build_queries",
    "default_fixtures_dir",
    "expand_concepts",
    "fetch_abstracts",
    "hash64",
    "infer_theta",
    "kb_content_hash",
    "load_kb",
    "multi_hop_expand",
    "patient_knowledge",
    "pool_knowledge",
    "preprocess_text",
    "rank_top_c",
    "save_kb",
    "sentence_hash",
    "split_sentences",
    "stop_words",
    "topic_filter",
    "train_lda",
]
