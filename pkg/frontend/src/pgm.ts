/**
 * Binary PGM (P5) support: 8-bit reads for input images, 16-bit writes for
 * label masks (big-endian samples, 0 = background, labels contiguous from 1).
 */

import { readFileSync, renameSync, writeFileSync } from "node:fs";

export interface GrayImage {
  width: number;
  height: number;
  pixels: Uint8Array; // row-major
}

export interface LabelMask {
  width: number;
  height: number;
  labels: Uint16Array; // row-major
}

function parseHeader(data: Buffer, path: string) {
  if (data.length < 2 || data.toString("ascii", 0, 2) !== "P5") {
    throw new Error(`${path}: unsupported magic (binary P5 required)`);
  }
  const fields: number[] = [];
  let pos = 2;
  while (fields.length < 3) {
    while (pos < data.length && /\s/.test(String.fromCharCode(data[pos]))) pos++;
    if (data[pos] === 0x23) {
      // comment line
      while (pos < data.length && data[pos] !== 0x0a) pos++;
      continue;
    }
    const start = pos;
    while (pos < data.length && !/\s/.test(String.fromCharCode(data[pos]))) pos++;
    const token = data.toString("ascii", start, pos);
    const value = Number.parseInt(token, 10);
    if (!Number.isFinite(value)) {
      throw new Error(`${path}: bad header token at offset ${start}`);
    }
    fields.push(value);
  }
  pos += 1; // single whitespace before the raster
  const [width, height, maxval] = fields;
  return { width, height, maxval, offset: pos };
}

export function loadPgm(path: string): GrayImage {
  const data = readFileSync(path);
  const { width, height, maxval, offset } = parseHeader(data, path);
  if (maxval !== 255) {
    throw new Error(`${path}: expected 8-bit image (maxval 255), got ${maxval}`);
  }
  const expected = width * height;
  if (data.length - offset < expected) {
    throw new Error(`${path}: truncated raster at offset ${data.length}`);
  }
  return {
    width,
    height,
    pixels: new Uint8Array(data.subarray(offset, offset + expected)),
  };
}

export function saveMask(path: string, mask: LabelMask): void {
  const header = Buffer.from(`P5\n${mask.width} ${mask.height}\n65535\n`, "ascii");
  const raster = Buffer.alloc(mask.labels.length * 2);
  for (let i = 0; i < mask.labels.length; i++) {
    raster.writeUInt16BE(mask.labels[i], i * 2);
  }
  // atomic write: temp file in place, then rename
  const tmp = `${path}.tmp`;
  writeFileSync(tmp, Buffer.concat([header, raster]));
  renameSync(tmp, path);
}

export function loadMask(path: string): LabelMask {
  const data = readFileSync(path);
  const { width, height, maxval, offset } = parseHeader(data, path);
  if (maxval <= 255 || maxval > 65535) {
    throw new Error(`${path}: expected 16-bit mask, got maxval ${maxval}`);
  }
  const labels = new Uint16Array(width * height);
  for (let i = 0; i < labels.length; i++) {
    labels[i] = data.readUInt16BE(offset + i * 2);
  }
  return { width, height, labels };
}
