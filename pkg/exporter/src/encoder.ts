/**
 * Encoders that turn sample content into fixed-dimension embeddings.
 *
 * The built-in `hash-512` encoder is fully deterministic and needs no model
 * downloads: it expands a SHA-256 stream over the content into a unit-norm
 * float32 vector. It stands in for a pretrained vision-language encoder in
 * offline and test environments; a real encoder (e.g. a CLIP runtime) can be
 * plugged in behind the same interface, keeping every file contract intact.
 */

import { createHash } from 'node:crypto';
import { readFileSync, existsSync } from 'node:fs';
import { join } from 'node:path';

export const DEFAULT_DIM = 512;
export const MAX_TEXT_TOKENS = 77;

export interface Encoder {
  readonly id: string;
  readonly dim: number;
  embed(content: Buffer | string): Float32Array;
}

/** Deterministic stand-in encoder: SHA-256 counter stream -> unit vector. */
export class HashEncoder implements Encoder {
  readonly id: string;
  readonly dim: number;

  constructor(dim: number = DEFAULT_DIM) {
    this.dim = dim;
    this.id = `hash-${dim}`;
  }

  embed(content: Buffer | string): Float32Array {
    const base = createHash('sha256')
      .update(typeof content === 'string' ? Buffer.from(content, 'utf-8') : content)
      .digest();
    const out = new Float32Array(this.dim);
    let produced = 0;
    let counter = 0;
    while (produced < this.dim) {
      const block = createHash('sha256').update(base).update(String(counter)).digest();
      for (let i = 0; i + 4 <= block.length && produced < this.dim; i += 4) {
        // map u32 -> [-1, 1)
        out[produced] = (block.readUInt32LE(i) / 2 ** 32) * 2 - 1;
        produced += 1;
      }
      counter += 1;
    }
    let norm = 0;
    for (const v of out) norm += v * v;
    norm = Math.sqrt(norm);
    for (let i = 0; i < out.length; i++) out[i] = out[i] / norm;
    return out;
  }
}

export function makeEncoder(id: string): Encoder {
  const match = /^hash-(\d+)$/.exec(id);
  if (match) {
    return new HashEncoder(Number(match[1]));
  }
  throw new Error(
    `unknown encoder '${id}' (built-in encoders: hash-<dim>; pretrained runtimes plug in here)`,
  );
}

/**
 * Content for the image modality: with an image root, the sample id must
 * resolve to a readable file under it (its bytes are encoded); without one,
 * the id string itself is the content, which keeps fixture manifests
 * reproducible with no image assets present.
 */
export function imageContent(sampleId: string, imageRoot?: string): Buffer | string {
  if (imageRoot === undefined) {
    return sampleId;
  }
  const path = join(imageRoot, sampleId);
  if (!existsSync(path)) {
    throw new Error(`unreadable image for id '${sampleId}': ${path}`);
  }
  return readFileSync(path);
}

export interface TextResult {
  text: string;
  truncated: boolean;
}

/** Whitespace tokenization with the encoder's 77-token sequence cap. */
export function prepareText(text: string): TextResult {
  const tokens = text.split(/\s+/).filter((t) => t.length > 0);
  if (tokens.length <= MAX_TEXT_TOKENS) {
    return { text: tokens.join(' '), truncated: false };
  }
  return { text: tokens.slice(0, MAX_TEXT_TOKENS).join(' '), truncated: true };
}

export function captionFor(
  sample: { id: string; captionHuman?: string; captionLlm?: string },
  source: 'llm' | 'human',
): string {
  const caption = source === 'llm' ? sample.captionLlm : sample.captionHuman;
  if (caption === undefined || caption === null || caption === '') {
    throw new Error(`sample '${sample.id}' has no ${source} caption`);
  }
  return caption;
}
