/**
 * Sentence embedding export.
 *
 * Input: the knowledge base's sentences.jsonl ({hash, pmid, text, ...}) and
 * optionally queries.jsonl ({patient, query}) so query vectors land in the
 * same file. Output: embeddings.jsonl rows {hash, dim, values}, L2-normalized,
 * keyed by the shared 64-bit FNV-1a hash of the cleaned text.
 *
 * The bundled fallback encoder is a signed hashed TF-IDF over the cleaned
 * tokens (document frequencies computed over the input batch), which needs
 * no checkpoint and agrees with the core's builtin provider on the same
 * corpus. A transformer-backed encoder would implement the same interface.
 */

import { readFileSync, renameSync, writeFileSync } from "node:fs";

import { hash64 } from "./hash.js";
import { cleanedText, tokenize } from "./text.js";

export interface SentenceRow {
  hash: bigint;
  text: string;
  tokens: string[];
}

export interface Encoder {
  readonly name: string;
  readonly dim: number;
  /** Called once with the whole batch before embedding. */
  fit(rows: SentenceRow[]): void;
  embed(tokens: string[]): Float64Array;
}

export class HashedTfidfEncoder implements Encoder {
  readonly name = "hashed-tfidf-fallback";
  private docFreq = new Map<string, number>();
  private nDocs = 0;

  constructor(readonly dim: number = 768) {}

  fit(rows: SentenceRow[]): void {
    this.docFreq.clear();
    this.nDocs = rows.length;
    for (const row of rows) {
      for (const tok of new Set(row.tokens)) {
        this.docFreq.set(tok, (this.docFreq.get(tok) ?? 0) + 1);
      }
    }
  }

  embed(tokens: string[]): Float64Array {
    const vec = new Float64Array(this.dim);
    if (tokens.length === 0) return vec;
    const counts = new Map<string, number>();
    for (const tok of tokens) counts.set(tok, (counts.get(tok) ?? 0) + 1);
    for (const [tok, tf] of counts) {
      const h = hash64(tok);
      const sign = h >> 63n === 0n ? 1.0 : -1.0;
      const idx = Number(h % BigInt(this.dim));
      const df = this.docFreq.get(tok) ?? 0;
      const idf = Math.log((1 + this.nDocs) / (1 + df)) + 1.0;
      vec[idx] += sign * tf * idf;
    }
    let norm = 0;
    for (const v of vec) norm += v * v;
    norm = Math.sqrt(norm);
    if (norm > 0) {
      for (let i = 0; i < vec.length; i++) vec[i] /= norm;
    }
    return vec;
  }
}

export function resolveEncoder(spec: string, dim: number): Encoder {
  if (spec === "hashed-tfidf" || spec === "") {
    return new HashedTfidfEncoder(dim);
  }
  throw new Error(`unknown encoder '${spec}' (bundled: 'hashed-tfidf')`);
}

// Sentence hashes are full 64-bit integers: JSON.parse would round them
// through the double type, so the hash field is re-read from the raw line.
const HASH_FIELD_RE = /"hash":\s*(\d+)/;

export function readSentenceRows(path: string): SentenceRow[] {
  const rows: SentenceRow[] = [];
  const seen = new Set<bigint>();
  for (const line of readFileSync(path, "utf-8").split("\n")) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    const obj = JSON.parse(trimmed) as { text: string };
    const match = HASH_FIELD_RE.exec(trimmed);
    if (!match) {
      throw new Error(`sentence row without a hash field: ${trimmed.slice(0, 80)}`);
    }
    const key = BigInt(match[1]);
    if (seen.has(key)) continue;
    seen.add(key);
    rows.push({ hash: key, text: obj.text, tokens: tokenize(obj.text) });
  }
  return rows;
}

export function readQueryRows(path: string): SentenceRow[] {
  const rows: SentenceRow[] = [];
  for (const line of readFileSync(path, "utf-8").split("\n")) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    const obj = JSON.parse(trimmed) as { query: string };
    // queries arrive already cleaned; hash the cleaned form like the core
    const cleaned = cleanedText(obj.query);
    rows.push({ hash: hash64(cleaned), text: obj.query, tokens: tokenize(obj.query) });
  }
  return rows;
}

export interface EmbeddingExportSummary {
  written: number;
  dim: number;
  encoder: string;
}

export function exportEmbeddings(
  rows: SentenceRow[],
  outputPath: string,
  encoder: Encoder,
): EmbeddingExportSummary {
  if (rows.length === 0) {
    throw new Error("refusing to write an empty embedding file");
  }
  encoder.fit(rows);
  const lines: string[] = [];
  const seen = new Set<bigint>();
  for (const row of rows) {
    if (seen.has(row.hash)) continue;
    seen.add(row.hash);
    const vec = encoder.embed(row.tokens);
    const values = Array.from(vec, (v) => JSON.stringify(Number(v.toFixed(12))))
      .join(", ");
    // hash emitted as a raw integer literal (BigInt exceeds Number precision)
    lines.push(
      `{"dim": ${encoder.dim}, "hash": ${row.hash.toString()}, "values": [${values}]}`,
    );
  }
  const tmp = `${outputPath}.tmp`;
  writeFileSync(tmp, lines.join("\n") + "\n", "utf-8");
  renameSync(tmp, outputPath);
  return { written: lines.length, dim: encoder.dim, encoder: encoder.name };
}
