"""Latent Dirichlet Allocation via collapsed Gibbs sampling.

Training estimates phi (word-given-topic) from the final iterations of the
chain; held-out texts are folded in against the frozen phi. All sampling is
driven by the deterministic splitmix stream, and fold-in seeds derive from
the text itself, so identical inputs always produce identical distributions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..numerics import ContractViolation, Rng
from .text import hash64

DEFAULT_TOPICS = 8
DEFAULT_ALPHA = 0.1
DEFAULT_BETA = 0.01
DEFAULT_ITERS = 1000
AVERAGE_WINDOW = 100  # final iterations averaged into phi/theta
FOLD_IN_ITERS = 50
FOLD_IN_WINDOW = 25
MIN_DOC_FREQ = 2


@dataclass
class TopicModel:
    t: int
    alpha: float
    beta: float
    vocabulary: list
    phi: np.ndarray  # (t, v), rows on the simplex

    def word_index(self) -> dict:
        return {w: i for i, w in enumerate(self.vocabulary)}


@dataclass
class TrainedLda:
    model: TopicModel
    doc_thetas: np.ndarray  # (n_docs, t)


def _build_vocabulary(docs_tokens) -> list:
    doc_freq: dict = {}
    for tokens in docs_tokens:
        for w in set(tokens):
            doc_freq[w] = doc_freq.get(w, 0) + 1
    return sorted(w for w, c in doc_freq.items() if c >= MIN_DOC_FREQ)


def train_lda(docs_tokens, t: int = DEFAULT_TOPICS, alpha: float = DEFAULT_ALPHA,
              beta: float = DEFAULT_BETA, iters: int = DEFAULT_ITERS,
              rng: Rng | None = None) -> TrainedLda:
    """Collapsed Gibbs over tokenized documents (vocabulary min doc freq 2)."""
    if t < 1:
        raise ContractViolation("train_lda: need at least one topic")
    distinct = {tuple(d) for d in docs_tokens}
    if len(distinct) < t:
        raise ContractViolation(
            f"train_lda: need >= {t} distinct documents, got {len(distinct)}")
    vocabulary = _build_vocabulary(docs_tokens)
    if not vocabulary:
        raise ContractViolation("train_lda: empty vocabulary after filtering")
    rng = rng or Rng(0)
    index = {w: i for i, w in enumerate(vocabulary)}
    docs = [[index[w] for w in tokens if w in index] for tokens in docs_tokens]
    n_docs, v = len(docs), len(vocabulary)
    total_tokens = sum(len(d) for d in docs)

    # plain-Python count structures: the tight loop avoids numpy overhead
    n_dk = [[0.0] * t for _ in range(n_docs)]
    n_kw = [[0.0] * t for _ in range(v)]  # indexed [word][topic]
    n_k = [0.0] * t
    init = rng.randints(max(total_tokens, 1), t)
    assignments = []
    pos = 0
    for d, words in enumerate(docs):
        z = [int(init[pos + i]) for i in range(len(words))]
        pos += len(words)
        assignments.append(z)
        row = n_dk[d]
        for w, k in zip(words, z):
            row[k] += 1
            n_kw[w][k] += 1
            n_k[k] += 1

    phi_acc = np.zeros((t, v))
    theta_acc = np.zeros((n_docs, t))
    averaged = 0
    v_beta = v * beta
    topics = range(t)
    cum = [0.0] * t
    for iteration in range(iters):
        us = rng.uniforms(max(total_tokens, 1))
        upos = 0
        for d, words in enumerate(docs):
            z = assignments[d]
            row = n_dk[d]
            for i, w in enumerate(words):
                k_old = z[i]
                kw = n_kw[w]
                row[k_old] -= 1
                kw[k_old] -= 1
                n_k[k_old] -= 1
                total = 0.0
                for k in topics:
                    total += (kw[k] + beta) / (n_k[k] + v_beta) * (row[k] + alpha)
                    cum[k] = total
                r = us[upos] * total
                upos += 1
                k_new = 0
                while cum[k_new] < r and k_new < t - 1:
                    k_new += 1
                z[i] = k_new
                row[k_new] += 1
                kw[k_new] += 1
                n_k[k_new] += 1
        if iteration >= iters - AVERAGE_WINDOW:
            kw_arr = np.array(n_kw).T  # (t, v)
            nk_arr = np.array(n_k)
            phi_acc += (kw_arr + beta) / (nk_arr + v_beta)[:, None]
            lengths = np.array([len(words) for words in docs], dtype=np.float64)
            theta_acc += (np.array(n_dk) + alpha) / (lengths + t * alpha)[:, None]
            averaged += 1
    if averaged == 0:  # iters smaller than the window: use the final state
        kw_arr = np.array(n_kw).T
        phi_acc = (kw_arr + beta) / (np.array(n_k) + v_beta)[:, None]
        lengths = np.array([len(words) for words in docs], dtype=np.float64)
        theta_acc = (np.array(n_dk) + alpha) / (lengths + t * alpha)[:, None]
        averaged = 1
    phi = phi_acc / averaged
    phi = phi / phi.sum(axis=1, keepdims=True)
    thetas = theta_acc / averaged
    thetas = thetas / thetas.sum(axis=1, keepdims=True)
    return TrainedLda(model=TopicModel(t=t, alpha=alpha, beta=beta,
                                       vocabulary=vocabulary, phi=phi),
                      doc_thetas=thetas)


def infer_theta(model: TopicModel, tokens, iters: int = FOLD_IN_ITERS) -> np.ndarray:
    """Fold a token list into the trained model; seeded by the text itself so
    identical token lists always infer identical distributions."""
    t = model.t
    index = model.word_index()
    words = [index[w] for w in tokens if w in index]
    if not words:
        return np.full(t, 1.0 / t)
    n_words = len(words)
    alpha = model.alpha
    rng = Rng(hash64(" ".join(tokens)))
    z = [int(k) for k in rng.randints(n_words, t)]
    counts = [0.0] * t
    for k in z:
        counts[k] += 1
    acc = np.zeros(t)
    averaged = 0
    phi_by_word = {w: model.phi[:, w].tolist() for w in set(words)}
    topics = range(t)
    cum = [0.0] * t
    for iteration in range(iters):
        us = rng.uniforms(n_words)
        for i, w in enumerate(words):
            k_old = z[i]
            counts[k_old] -= 1
            pw = phi_by_word[w]
            total = 0.0
            for k in topics:
                total += pw[k] * (counts[k] + alpha)
                cum[k] = total
            r = us[i] * total
            k_new = 0
            while cum[k_new] < r and k_new < t - 1:
                k_new += 1
            z[i] = k_new
            counts[k_new] += 1
        if iteration >= iters - FOLD_IN_WINDOW:
            acc += (np.array(counts) + alpha) / (n_words + t * alpha)
            averaged += 1
    theta = acc / max(averaged, 1)
    return theta / theta.sum()


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(a @ b / (na * nb))


def _kl_divergence(a: np.ndarray, b: np.ndarray) -> float:
    eps = 1e-12
    return float(np.sum(a * np.log((a + eps) / (b + eps))))


def topic_similarity(theta_a: np.ndarray, theta_b: np.ndarray,
                     metric: str = "cosine") -> float:
    """cosine (higher is closer) or negative KL (so thresholds stay >=)."""
    if metric == "cosine":
        return _cosine(theta_a, theta_b)
    if metric == "kl":
        return -_kl_divergence(theta_a, theta_b)
    raise ContractViolation(f"unknown topic metric: {metric}")


def topic_filter(sentences, query_tokens, model: TopicModel,
                 threshold: float = 0.2, metric: str = "cosine") -> list:
    """Keep sentences whose topic distribution is close to the query's.

    ``sentences`` is a list of (item, theta) pairs; returns the items whose
    similarity meets the threshold, preserving input order.
    """
    theta_q = infer_theta(model, query_tokens)
    kept = []
    for item, theta in sentences:
        if topic_similarity(np.asarray(theta), theta_q, metric) >= threshold:
            kept.append(item)
    return kept
