import logging

import numpy as np
import pytest

from sonotree.retrieval import default_fixtures_dir
from sonotree.retrieval.embed import (
    BuiltinEmbedder,
    FileEmbeddingProvider,
    MissingEmbeddingError,
)
from sonotree.retrieval.entrez import Sentence, parse_abstracts
from sonotree.retrieval.text import (
    hash64,
    preprocess_text,
    sentence_hash,
    split_sentences,
    stop_words,
)
from sonotree.retrieval.umls import Concept, UmlsClient, expand_concepts


class TestPreprocess:
    def test_stop_word_removal(self):
        tokens, cleaned = preprocess_text("Muscle Weakness, in Elderly.")
        assert tokens == ["muscle", "weakness", "elderly"]
        assert cleaned == "muscle weakness elderly"

    def test_empty_string(self):
        tokens, cleaned = preprocess_text("")
        assert tokens == [] and cleaned == ""

    def test_hyphenated_biomedical_tokens(self):
        tokens, _ = preprocess_text("IL-6 and TNF-alpha")
        assert tokens == ["il-6", "tnf-alpha"]

    def test_stop_list_has_179_words(self):
        assert len(stop_words()) == 179

    def test_lowercasing(self):
        tokens, _ = preprocess_text("SARCOPENIA Diagnosis")
        assert tokens == ["sarcopenia", "diagnosis"]


class TestSentenceSplit:
    def test_two_sentences(self):
        assert split_sentences("Study of X. Results were good.") == [
            "Study of X.", "Results were good."]

    def test_abbreviation_guard(self):
        out = split_sentences("Smith et al. Reported gains. Jones vs. Brown agreed.")
        assert out[0].startswith("Smith et al. Reported")
        assert any(s.startswith("Jones vs. Brown") for s in out)

    def test_empty(self):
        assert split_sentences("") == []

    def test_question_and_exclamation(self):
        out = split_sentences("Does it work? It does! Trust the data.")
        assert len(out) == 3


class TestHash:
    def test_known_fnv_vector(self):
        # FNV-1a 64 reference values
        assert hash64("") == 0xCBF29CE484222325
        assert hash64("a") == 0xAF63DC4C8601EC8C

    def test_sentence_hash_uses_cleaned_text(self):
        assert sentence_hash("Muscle weakness!") == sentence_hash("muscle WEAKNESS")


class TestUmls:
    def test_published_synonym_mapping(self):
        client = UmlsClient(default_fixtures_dir(), offline=True)
        entry = client.lookup("muscle weakness")
        synonyms = {s.lower() for s in entry["concept"].synonyms}
        assert {"sarcopenia", "frailty", "muscle atrophy"} <= synonyms

    def test_fixture_mode_deterministic(self):
        client = UmlsClient(default_fixtures_dir(), offline=True)
        a = client.lookup("obesity")
        b = client.lookup("obesity")
        assert a["concept"].cui == b["concept"].cui
        assert [c.cui for c in a["related"]] == [c.cui for c in b["related"]]

    def test_unknown_term_warns_and_skips(self, caplog):
        client = UmlsClient(default_fixtures_dir(), offline=True)
        with caplog.at_level(logging.WARNING):
            out = expand_concepts(["zzzqqq"], client)
        assert out == []
        assert any("zzzqqq" in rec.message for rec in caplog.records)

    def test_expand_dedups_by_cui(self):
        client = UmlsClient(default_fixtures_dir(), offline=True)
        out = expand_concepts(["sarcopenia", "sarcopenia", "frailty"], client)
        cuis = [c.cui for c in out]
        assert len(cuis) == len(set(cuis))

    def test_concept_cui_validation(self):
        with pytest.raises(Exception):
            Concept(cui="X123", name="bad")

    def test_synonyms_dedup_case_insensitive(self):
        c = Concept(cui="C0000001", name="x", synonyms=["Frailty", "frailty", "f2"])
        assert c.synonyms == ["Frailty", "f2"]


class TestEntrezFixtures:
    def test_fixture_pmids_byte_stable(self):
        from sonotree.retrieval.entrez import EntrezClient
        client = EntrezClient(default_fixtures_dir(), offline=True)
        a = client.esearch("sarcopenia sarcopenia diagnosis")
        b = client.esearch("sarcopenia sarcopenia diagnosis")
        assert a and a == b

    def test_abstract_sentence_split(self):
        xml = ('<PubmedArticleSet><PubmedArticle><MedlineCitation>'
               '<PMID Version="1">123</PMID><Article>'
               '<ArticleTitle>T</ArticleTitle>'
               '<Abstract><AbstractText>Study of X. Results were good.'
               '</AbstractText></Abstract>'
               '</Article></MedlineCitation></PubmedArticle></PubmedArticleSet>')
        docs = parse_abstracts(xml)
        assert len(docs) == 1 and len(docs[0].sentences) == 2

    def test_duplicate_pmid_deduplicated(self):
        from sonotree.retrieval.entrez import EntrezClient, fetch_abstracts
        from sonotree.retrieval.queries import Query
        client = EntrezClient(default_fixtures_dir(), offline=True)
        queries = [Query(text="sarcopenia sarcopenia diagnosis", tag="Diagnosis"),
                   Query(text="muscle weakness sarcopenia diagnosis", tag="Diagnosis")]
        docs = fetch_abstracts(queries, client)
        pmids = [d.pmid for d in docs]
        assert len(pmids) == len(set(pmids))

    def test_unknown_query_offline_returns_empty(self, caplog):
        from sonotree.retrieval.entrez import EntrezClient
        client = EntrezClient(default_fixtures_dir(), offline=True)
        with caplog.at_level(logging.WARNING):
            assert client.esearch("no such recorded query") == []


class TestBuiltinEmbedder:
    def test_identical_sentences_identical_embeddings(self):
        emb = BuiltinEmbedder(dim=768).fit([["muscle", "loss"], ["gait", "speed"]])
        a = emb.embed(["muscle", "loss"])
        b = emb.embed(["muscle", "loss"])
        assert np.array_equal(a, b)

    def test_disjoint_tokens_orthogonal(self):
        # collision audit: the chosen tokens must hash to distinct buckets
        toks_a, toks_b = ["muscle", "atrophy"], ["gait", "speed"]
        buckets = {hash64(t) % 768 for t in toks_a + toks_b}
        assert len(buckets) == 4, "fixture tokens collide; pick different ones"
        emb = BuiltinEmbedder(dim=768).fit([toks_a, toks_b])
        assert abs(emb.embed(toks_a) @ emb.embed(toks_b)) <= 1e-12

    def test_unit_norm(self):
        emb = BuiltinEmbedder(dim=256).fit([["a1", "b2", "c3"]])
        vec = emb.embed(["a1", "b2", "c3"])
        assert abs(np.linalg.norm(vec) - 1.0) <= 1e-9

    def test_file_provider_roundtrip(self, tmp_path):
        import json
        emb = BuiltinEmbedder(dim=64).fit([["alpha"], ["beta"]])
        sents = [Sentence(raw="Alpha.", tokens=["alpha"], cleaned="alpha"),
                 Sentence(raw="Beta.", tokens=["beta"], cleaned="beta")]
        path = tmp_path / "emb.jsonl"
        with path.open("w") as fh:
            for s in sents:
                vec = emb.embed(s.tokens)
                fh.write(json.dumps({"hash": hash64(s.cleaned), "dim": 64,
                                     "values": vec.tolist()}) + "\n")
        provider = FileEmbeddingProvider(path)
        from sonotree.retrieval.embed import embed_sentences
        out = embed_sentences(sents, provider)
        assert np.allclose(out[0], emb.embed(["alpha"]))

    def test_file_provider_missing_hash_hard_error(self, tmp_path):
        path = tmp_path / "emb.jsonl"
        path.write_text('{"hash": 1, "dim": 8, "values": [1,0,0,0,0,0,0,0]}\n')
        provider = FileEmbeddingProvider(path)
        with pytest.raises(MissingEmbeddingError, match="42"):
            provider.lookup([42])
