"""Search query construction from clinical concepts, and multi-hop expansion.

Hop-1 queries cross concepts with four clinical-dimension templates and are
capped per patient. Later hops mine the highest-TF-IDF unseen terms from the
previous hop's sentences and send them back through concept expansion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .umls import expand_concepts

# priority order for capping; template text keeps queries PubMed-friendly
DIMENSION_TEMPLATES = (
    ("Diagnosis", "{concept} sarcopenia diagnosis"),
    ("Risk Factors", "{concept} sarcopenia risk factors"),
    ("Comorbidities", "{concept} sarcopenia comorbidities"),
    ("Prognosis", "{concept} sarcopenia prognosis"),
)
MIN_QUERIES = 10
MAX_QUERIES = 20
DEFAULT_MAX_HOPS = 2
HOP_TERMS = 5  # top TF-IDF terms mined per hop


@dataclass
class Query:
    text: str
    tag: str
    concepts: list = field(default_factory=list)
    hop: int = 1


def build_queries(concepts, max_queries: int = MAX_QUERIES, hop: int = 1) -> list:
    """Concepts x dimension templates, deduplicated and capped by priority."""
    if not concepts:
        return []
    unique = []
    seen_names = set()
    for c in concepts:
        key = c.name.lower()
        if key not in seen_names:
            seen_names.add(key)
            unique.append(c)
    queries = []
    seen_text = set()
    for tag, template in DIMENSION_TEMPLATES:
        for concept in unique:
            text = template.format(concept=concept.name.lower())
            if text in seen_text:
                continue
            seen_text.add(text)
            queries.append(Query(text=text, tag=tag, concepts=[concept.name],
                                 hop=hop))
            if len(queries) >= max_queries:
                return queries
    return queries


def tfidf_terms(sentence_token_lists, exclude: set, top_n: int = HOP_TERMS) -> list:
    """Highest-TF-IDF tokens over the sentence set, skipping excluded terms."""
    doc_freq: dict = {}
    term_freq: dict = {}
    n_docs = len(sentence_token_lists)
    if n_docs == 0:
        return []
    for tokens in sentence_token_lists:
        for tok in tokens:
            term_freq[tok] = term_freq.get(tok, 0) + 1
        for tok in set(tokens):
            doc_freq[tok] = doc_freq.get(tok, 0) + 1
    scored = []
    for tok, tf in term_freq.items():
        if tok in exclude or len(tok) < 3:
            continue
        idf = math.log((1 + n_docs) / (1 + doc_freq[tok])) + 1.0
        scored.append((tf * idf, tok))
    scored.sort(key=lambda item: (-item[0], item[1]))
    return [tok for _, tok in scored[:top_n]]


def multi_hop_expand(top_sentences, seed_queries, umls_client,
                     max_hops: int = DEFAULT_MAX_HOPS, hop: int = 2,
                     max_queries: int = MAX_QUERIES) -> list:
    """Build hop-h queries from terms mined out of hop-(h-1) sentences.

    ``top_sentences`` carries the ranked Sentence objects of the previous hop.
    Returns an empty list when max_hops < hop or no new concepts appear.
    """
    if hop > max_hops or not top_sentences:
        return []
    exclude = set()
    for q in seed_queries:
        for tok in q.text.split():
            exclude.add(tok)
        for name in q.concepts:
            exclude.add(name.lower())
    mined = tfidf_terms([s.tokens for s in top_sentences], exclude)
    if not mined:
        return []
    concepts = expand_concepts(mined, umls_client)
    known = {name.lower() for q in seed_queries for name in q.concepts}
    fresh = [c for c in concepts if c.name.lower() not in known]
    if not fresh:
        return []
    return build_queries(fresh, max_queries=max_queries, hop=hop)
