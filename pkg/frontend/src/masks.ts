/**
 * Segmentation mask export.
 *
 * Models implement `SegmentationModel`. The bundled fallback is a
 * deterministic intensity-threshold model (Otsu + 4-connected components),
 * which keeps the export pipeline runnable with no checkpoint on disk;
 * plugging a real checkpoint-backed model in means implementing the same
 * interface. Output masks satisfy the core's invariants: dimensions match
 * the image, 0 is background, labels are contiguous from 1.
 */

import { readdirSync } from "node:fs";
import { basename, join } from "node:path";

import { GrayImage, LabelMask, loadPgm, saveMask } from "./pgm.js";

export interface SegmentationModel {
  readonly name: string;
  segment(image: GrayImage): LabelMask;
}

export function otsuThreshold(pixels: Uint8Array): number {
  const hist = new Array<number>(256).fill(0);
  for (const p of pixels) hist[p] += 1;
  const total = pixels.length;
  let sumAll = 0;
  for (let i = 0; i < 256; i++) sumAll += i * hist[i];
  let bestT = 0;
  let bestVar = -1;
  let wB = 0;
  let sumB = 0;
  for (let t = 0; t < 256; t++) {
    wB += hist[t];
    if (wB === 0) continue;
    const wF = total - wB;
    if (wF === 0) break;
    sumB += t * hist[t];
    const mB = sumB / wB;
    const mF = (sumAll - sumB) / wF;
    const between = wB * wF * (mB - mF) * (mB - mF);
    if (between > bestVar) {
      bestVar = between;
      bestT = t;
    }
  }
  return bestT;
}

/** 4-connected components over a boolean foreground, labels from 1. */
export function connectedComponents(
  fg: Uint8Array,
  width: number,
  height: number,
): Uint16Array {
  const labels = new Uint16Array(width * height);
  const queue = new Int32Array(width * height);
  let next = 1;
  for (let start = 0; start < fg.length; start++) {
    if (!fg[start] || labels[start] !== 0) continue;
    let head = 0;
    let tail = 0;
    queue[tail++] = start;
    labels[start] = next;
    while (head < tail) {
      const idx = queue[head++];
      const x = idx % width;
      const y = (idx - x) / width;
      const neighbors = [
        x > 0 ? idx - 1 : -1,
        x < width - 1 ? idx + 1 : -1,
        y > 0 ? idx - width : -1,
        y < height - 1 ? idx + width : -1,
      ];
      for (const n of neighbors) {
        if (n >= 0 && fg[n] && labels[n] === 0) {
          labels[n] = next;
          queue[tail++] = n;
        }
      }
    }
    next += 1;
  }
  return labels;
}

export class ThresholdModel implements SegmentationModel {
  readonly name = "threshold-fallback";

  segment(image: GrayImage): LabelMask {
    const t = otsuThreshold(image.pixels);
    const fg = new Uint8Array(image.pixels.length);
    for (let i = 0; i < fg.length; i++) fg[i] = image.pixels[i] > t ? 1 : 0;
    const labels = connectedComponents(fg, image.width, image.height);
    return { width: image.width, height: image.height, labels };
  }
}

export function resolveModel(spec: string): SegmentationModel {
  if (spec === "threshold" || spec === "") {
    return new ThresholdModel();
  }
  // checkpoint-backed models would be wired here; nothing else is bundled
  throw new Error(
    `unknown segmentation model '${spec}' (bundled: 'threshold')`,
  );
}

export interface MaskExportSummary {
  written: string[];
  skipped: { image: string; reason: string }[];
  model: string;
}

export function exportMasks(
  inputDir: string,
  outputDir: string,
  model: SegmentationModel,
): MaskExportSummary {
  const summary: MaskExportSummary = { written: [], skipped: [], model: model.name };
  const files = readdirSync(inputDir)
    .filter((f) => f.endsWith(".pgm"))
    .sort();
  for (const file of files) {
    try {
      const image = loadPgm(join(inputDir, file));
      const mask = model.segment(image);
      const out = join(outputDir, basename(file));
      saveMask(out, mask);
      summary.written.push(out);
    } catch (err) {
      summary.skipped.push({ image: file, reason: String(err) });
    }
  }
  return summary;
}
