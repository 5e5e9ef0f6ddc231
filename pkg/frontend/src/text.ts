/**
 * Token cleaning identical to the core pipeline: lowercase, strip
 * punctuation (keeping in-word hyphens/apostrophes), drop the fixed
 * 179-word English stop list.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

const TOKEN_RE = /[a-z0-9]+(?:['-][a-z0-9]+)*/g;

let stopWords: Set<string> | null = null;

export function loadStopWords(): Set<string> {
  if (stopWords === null) {
    const here = dirname(fileURLToPath(import.meta.url));
    const path = join(here, "..", "data", "stopwords.txt");
    const words = readFileSync(path, "utf-8")
      .split("\n")
      .map((w) => w.trim())
      .filter((w) => w.length > 0);
    stopWords = new Set(words);
  }
  return stopWords;
}

export function tokenize(raw: string): string[] {
  const stops = loadStopWords();
  const matches = raw.toLowerCase().match(TOKEN_RE) ?? [];
  return matches.filter((t) => !stops.has(t));
}

export function cleanedText(raw: string): string {
  return tokenize(raw).join(" ");
}
