"""Concept lookup and synonym expansion against UMLS.

Live lookups hit the UTS REST API (UMLS_API_KEY required) and write their
responses into the cache directory; offline mode reads the same files, so a
recorded cache doubles as a fixture set. Lookups are keyed by term.
"""

from __future__ import annotations

import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path

from ..numerics import ContractViolation

log = logging.getLogger(__name__)

CUI_PATTERN = re.compile(r"^C\d{7}$")
UTS_SEARCH_URL = "https://uts-ws.nlm.nih.gov/rest/search/current"
UTS_CONTENT_URL = "https://uts-ws.nlm.nih.gov/rest/content/current/CUI"
RETRIES = 3
BACKOFF_BASE = 0.5


def term_slug(term: str) -> str:
    """Filesystem-safe cache key for a term."""
    slug = re.sub(r"[^a-z0-9]+", "-", term.lower()).strip("-")
    return slug or "empty"


@dataclass
class Concept:
    cui: str
    name: str
    synonyms: list = field(default_factory=list)

    def __post_init__(self):
        if not CUI_PATTERN.match(self.cui):
            raise ContractViolation(f"bad CUI: {self.cui!r}")
        seen = set()
        unique = []
        for s in self.synonyms:
            key = s.lower()
            if key not in seen:
                seen.add(key)
                unique.append(s)
        self.synonyms = unique


class UmlsError(RuntimeError):
    """Live UMLS access failed after retries."""


class UmlsClient:
    """Term -> concept (with synonyms and one level of related concepts).

    ``offline=True`` never touches the network: terms answered from the cache
    directory, unknown terms yield None with a warning.
    """

    def __init__(self, cache_dir, offline: bool = True, api_key: str | None = None):
        self.cache_dir = Path(cache_dir) / "umls"
        self.offline = offline
        self.api_key = api_key

    def _cache_path(self, term: str) -> Path:
        return self.cache_dir / f"{term_slug(term)}.json"

    def _read_cache(self, term: str):
        path = self._cache_path(term)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def _write_cache(self, term: str, payload: dict) -> None:
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self._cache_path(term).write_text(
            json.dumps(payload, indent=1, sort_keys=True), encoding="utf-8")

    def lookup(self, term: str):
        """Returns {"concept": Concept, "related": [Concept]} or None."""
        cached = self._read_cache(term)
        if cached is not None:
            return self._decode(cached)
        if self.offline:
            log.warning("umls: no fixture for term %r; treating as unknown", term)
            return None
        payload = self._live_lookup(term)
        if payload is None:
            log.warning("umls: term %r not found", term)
            return None
        self._write_cache(term, payload)
        return self._decode(payload)

    @staticmethod
    def _decode(payload: dict):
        if not payload.get("cui"):
            return None
        concept = Concept(cui=payload["cui"], name=payload["name"],
                          synonyms=list(payload.get("synonyms", [])))
        related = [Concept(cui=r["cui"], name=r["name"],
                           synonyms=list(r.get("synonyms", [])))
                   for r in payload.get("related", []) if r.get("cui")]
        return {"concept": concept, "related": related}

    # -- live access ---------------------------------------------------------

    def _request_json(self, url: str, params: dict) -> dict:
        import requests

        if not self.api_key:
            raise UmlsError("UMLS_API_KEY is required for live lookups")
        params = dict(params, apiKey=self.api_key)
        last_error = None
        for attempt in range(RETRIES):
            try:
                resp = requests.get(url, params=params, timeout=30)
                resp.raise_for_status()
                return resp.json()
            except Exception as exc:  # noqa: BLE001 - retried, then re-raised
                last_error = exc
                time.sleep(BACKOFF_BASE * (2 ** attempt))
        raise UmlsError(f"UMLS request failed after {RETRIES} retries: {last_error}")

    def _live_lookup(self, term: str):
        data = self._request_json(UTS_SEARCH_URL,
                                  {"string": term, "searchType": "exact"})
        results = data.get("result", {}).get("results", [])
        if not results or results[0].get("ui") in (None, "NONE"):
            return None
        cui = results[0]["ui"]
        name = results[0].get("name", term)
        atoms = self._request_json(f"{UTS_CONTENT_URL}/{cui}/atoms",
                                   {"language": "ENG", "pageSize": 25})
        synonyms = sorted({a.get("name", "") for a in atoms.get("result", [])
                           if a.get("name")})
        related = []
        rel = self._request_json(f"{UTS_CONTENT_URL}/{cui}/relations",
                                 {"pageSize": 10})
        for row in rel.get("result", []):
            rel_name = row.get("relatedIdName")
            rel_uri = row.get("relatedId", "")
            rel_cui = rel_uri.rsplit("/", 1)[-1] if rel_uri else ""
            if rel_name and CUI_PATTERN.match(rel_cui):
                related.append({"cui": rel_cui, "name": rel_name, "synonyms": []})
        return {"term": term, "cui": cui, "name": name,
                "synonyms": synonyms, "related": related[:5]}


def expand_concepts(terms, client: UmlsClient) -> list:
    """Concepts for each distinct term plus one level of related concepts,
    deduplicated by CUI. Unknown terms are skipped with a warning."""
    seen_terms = set()
    concepts: dict = {}
    for term in terms:
        surface = term.term if hasattr(term, "term") else str(term)
        key = surface.lower()
        if key in seen_terms:
            continue
        seen_terms.add(key)
        entry = client.lookup(surface)
        if entry is None:
            continue
        for concept in [entry["concept"], *entry["related"]]:
            if concept.cui not in concepts:
                concepts[concept.cui] = concept
    return list(concepts.values())
