/**
 * Batch export CLI.
 *
 *   sonotree-export masks      --input <imagesDir> --output <masksDir> [--model threshold]
 *   sonotree-export embeddings --input <sentences.jsonl> --output <embeddings.jsonl>
 *                              [--queries <queries.jsonl>] [--model hashed-tfidf]
 *                              [--dim 768] [--batch-size 64]
 */

import { mkdirSync, writeFileSync } from "node:fs";
import { dirname, join } from "node:path";
import process from "node:process";

import {
  exportEmbeddings,
  readQueryRows,
  readSentenceRows,
  resolveEncoder,
} from "./embeddings.js";
import { exportMasks, resolveModel } from "./masks.js";

interface Args {
  command: string;
  input: string;
  output: string;
  queries?: string;
  model: string;
  dim: number;
  batchSize: number;
}

function parseArgs(argv: string[]): Args {
  const [command, ...rest] = argv;
  const args: Args = {
    command: command ?? "",
    input: "",
    output: "",
    model: "",
    dim: 768,
    batchSize: 64,
  };
  for (let i = 0; i < rest.length; i += 2) {
    const key = rest[i];
    const value = rest[i + 1];
    if (value === undefined) throw new Error(`missing value for ${key}`);
    switch (key) {
      case "--input":
        args.input = value;
        break;
      case "--output":
        args.output = value;
        break;
      case "--queries":
        args.queries = value;
        break;
      case "--model":
        args.model = value;
        break;
      case "--dim":
        args.dim = Number.parseInt(value, 10);
        break;
      case "--batch-size":
        args.batchSize = Number.parseInt(value, 10);
        break;
      default:
        throw new Error(`unknown flag ${key}`);
    }
  }
  if (!args.input || !args.output) {
    throw new Error("--input and --output are required");
  }
  return args;
}

export function run(argv: string[]): number {
  const args = parseArgs(argv);
  if (args.command === "masks") {
    const model = resolveModel(args.model);
    mkdirSync(args.output, { recursive: true });
    const summary = exportMasks(args.input, args.output, model);
    const manifest = {
      command: "masks",
      model: summary.model,
      written: summary.written.length,
      skipped: summary.skipped,
    };
    writeFileSync(
      join(args.output, "export_manifest.json"),
      JSON.stringify(manifest, null, 1),
    );
    for (const skip of summary.skipped) {
      console.error(`skipped ${skip.image}: ${skip.reason}`);
    }
    console.log(
      `wrote ${summary.written.length} masks (${summary.skipped.length} skipped)`,
    );
    return summary.written.length > 0 ? 0 : 1;
  }
  if (args.command === "embeddings") {
    const encoder = resolveEncoder(args.model, args.dim);
    const rows = readSentenceRows(args.input);
    if (args.queries) {
      rows.push(...readQueryRows(args.queries));
    }
    mkdirSync(dirname(args.output), { recursive: true });
    const summary = exportEmbeddings(rows, args.output, encoder);
    console.log(
      `wrote ${summary.written} embeddings (dim ${summary.dim}, ${summary.encoder})`,
    );
    return 0;
  }
  console.error(`unknown command '${args.command}' (use: masks | embeddings)`);
  return 1;
}

const invokedDirectly =
  process.argv[1] !== undefined &&
  import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (invokedDirectly) {
  try {
    process.exit(run(process.argv.slice(2)));
  } catch (err) {
    console.error(String(err));
    process.exit(1);
  }
}
