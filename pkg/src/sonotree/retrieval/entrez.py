"""PubMed retrieval through the Entrez E-utilities (esearch + efetch, XML).

Live requests are rate-limited to 3 per second and every response body is
written verbatim into the cache directory; offline mode serves exclusively
from those files. Abstracts are sentence-split with an abbreviation guard.
"""

from __future__ import annotations

import logging
import time
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from pathlib import Path

from .text import preprocess_text, split_sentences
from .umls import term_slug

log = logging.getLogger(__name__)

ESEARCH_URL = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/esearch.fcgi"
EFETCH_URL = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/efetch.fcgi"
MAX_REQUESTS_PER_SEC = 3.0
RETRIES = 3
BACKOFF_BASE = 0.5
DEFAULT_PER_QUERY = 10


@dataclass
class Sentence:
    raw: str
    tokens: list
    cleaned: str


@dataclass
class AbstractDoc:
    pmid: str
    title: str
    sentences: list  # of Sentence


class EntrezClient:
    def __init__(self, cache_dir, offline: bool = True, api_key: str | None = None):
        self.cache_dir = Path(cache_dir) / "entrez"
        self.offline = offline
        self.api_key = api_key
        self._last_request = 0.0

    # -- cache layout ---------------------------------------------------------

    def _search_path(self, query: str) -> Path:
        return self.cache_dir / f"esearch_{term_slug(query)}.xml"

    def _fetch_path(self, pmid: str) -> Path:
        return self.cache_dir / f"efetch_{pmid}.xml"

    # -- rate-limited HTTP ------------------------------------------------------

    def _throttle(self) -> None:
        wait = self._last_request + 1.0 / MAX_REQUESTS_PER_SEC - time.monotonic()
        if wait > 0:
            time.sleep(wait)
        self._last_request = time.monotonic()

    def _request(self, url: str, params: dict) -> str | None:
        import requests

        if self.api_key:
            params = dict(params, api_key=self.api_key)
        last_error = None
        for attempt in range(RETRIES):
            try:
                self._throttle()
                resp = requests.get(url, params=params, timeout=30)
                resp.raise_for_status()
                return resp.text
            except Exception as exc:  # noqa: BLE001 - retried, then reported
                last_error = exc
                time.sleep(BACKOFF_BASE * (2 ** attempt))
        log.warning("entrez: request failed after %d retries: %s", RETRIES, last_error)
        return None

    # -- esearch / efetch -------------------------------------------------------

    def esearch(self, query: str, retmax: int = DEFAULT_PER_QUERY) -> list:
        """PMIDs for a query; cached XML is authoritative when present."""
        path = self._search_path(query)
        if path.exists():
            return _parse_esearch(path.read_text(encoding="utf-8"))[:retmax]
        if self.offline:
            log.warning("entrez: no esearch fixture for %r; zero results", query)
            return []
        body = self._request(ESEARCH_URL, {
            "db": "pubmed", "term": query, "retmax": retmax, "sort": "relevance"})
        if body is None:
            return []
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(body, encoding="utf-8")
        return _parse_esearch(body)[:retmax]

    def efetch(self, pmids) -> list:
        """AbstractDocs for PMIDs; uncached articles are fetched in one batch
        and re-recorded one file per article."""
        docs = []
        missing = []
        for pmid in pmids:
            path = self._fetch_path(pmid)
            if path.exists():
                docs.extend(parse_abstracts(path.read_text(encoding="utf-8")))
            else:
                missing.append(pmid)
        if missing:
            if self.offline:
                log.warning("entrez: no efetch fixtures for %s", ",".join(missing))
            else:
                body = self._request(EFETCH_URL, {
                    "db": "pubmed", "id": ",".join(missing), "retmode": "xml"})
                if body is not None:
                    fetched = parse_abstracts(body)
                    self.cache_dir.mkdir(parents=True, exist_ok=True)
                    for doc, article_xml in zip(fetched, _split_articles(body)):
                        self._fetch_path(doc.pmid).write_text(
                            article_xml, encoding="utf-8")
                    docs.extend(fetched)
        return docs


def _parse_esearch(xml_text: str) -> list:
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        log.warning("entrez: bad esearch XML (%s)", exc)
        return []
    return [el.text for el in root.findall(".//IdList/Id") if el.text]


def _split_articles(xml_text: str) -> list:
    """Re-wrap each <PubmedArticle> in its own <PubmedArticleSet>."""
    root = ET.fromstring(xml_text)
    out = []
    for article in root.findall(".//PubmedArticle"):
        wrapper = ET.Element("PubmedArticleSet")
        wrapper.append(article)
        out.append(ET.tostring(wrapper, encoding="unicode"))
    return out


def parse_abstracts(xml_text: str) -> list:
    """AbstractDocs from efetch XML; abstract-less articles are skipped."""
    try:
        root = ET.fromstring(xml_text)
    except ET.ParseError as exc:
        log.warning("entrez: bad efetch XML (%s)", exc)
        return []
    docs = []
    for article in root.findall(".//PubmedArticle"):
        pmid_el = article.find(".//PMID")
        title_el = article.find(".//ArticleTitle")
        parts = [el.text or "" for el in article.findall(".//Abstract/AbstractText")]
        text = " ".join(p for p in parts if p).strip()
        if pmid_el is None or not (pmid_el.text or "").strip() or not text:
            continue
        sentences = []
        for raw in split_sentences(text):
            tokens, cleaned = preprocess_text(raw)
            if tokens:
                sentences.append(Sentence(raw=raw, tokens=tokens, cleaned=cleaned))
        if sentences:
            docs.append(AbstractDoc(pmid=pmid_el.text.strip(),
                                    title=(title_el.text or "") if title_el is not None else "",
                                    sentences=sentences))
    return docs


def fetch_abstracts(queries, client: EntrezClient,
                    k_per_query: int = DEFAULT_PER_QUERY) -> list:
    """esearch + efetch per query, deduplicated by PMID across queries."""
    seen = set()
    ordered_pmids = []
    for query in queries:
        text = query.text if hasattr(query, "text") else str(query)
        for pmid in client.esearch(text, retmax=k_per_query):
            if pmid not in seen:
                seen.add(pmid)
                ordered_pmids.append(pmid)
    return client.efetch(ordered_pmids)
