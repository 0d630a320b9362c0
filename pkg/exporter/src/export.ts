/** Export jobs: manifest/prompts -> embedding blobs, and baseline logits. */

import { writeFileSync } from 'node:fs';

import { writeDarb } from './darb.js';
import { Encoder, captionFor, imageContent, prepareText } from './encoder.js';
import { ManifestSample, readPromptSet } from './manifest.js';

export type Modality = 'image' | 'text' | 'prompts';

export interface ExportOptions {
  encoder: Encoder;
  modality: Modality;
  outPath: string;
  imageRoot?: string;
  captionSource?: 'llm' | 'human';
  promptsPath?: string;
  warn?: (message: string) => void;
}

export function exportEmbeddings(samples: ManifestSample[] | null, opts: ExportOptions): number {
  const warn = opts.warn ?? ((m) => console.error(m));
  const rows: Float32Array[] = [];
  if (opts.modality === 'prompts') {
    if (!opts.promptsPath) {
      throw new Error('prompts modality requires --prompts');
    }
    const promptSet = readPromptSet(opts.promptsPath);
    for (const prompt of promptSet.prompts) {
      const prepared = prepareText(prompt);
      if (prepared.truncated) {
        warn(`warning: prompt truncated to 77 tokens: '${prompt.slice(0, 40)}...'`);
      }
      rows.push(opts.encoder.embed(prepared.text));
    }
  } else {
    if (!samples) {
      throw new Error(`${opts.modality} modality requires --manifest`);
    }
    for (const sample of samples) {
      if (opts.modality === 'image') {
        rows.push(opts.encoder.embed(imageContent(sample.id, opts.imageRoot)));
      } else {
        const caption = captionFor(sample, opts.captionSource ?? 'llm');
        const prepared = prepareText(caption);
        if (prepared.truncated) {
          warn(`warning: caption for id '${sample.id}' truncated to 77 tokens`);
        }
        rows.push(opts.encoder.embed(prepared.text));
      }
    }
  }
  writeDarb(opts.outPath, rows, opts.encoder.dim);
  return rows.length;
}

export interface Checkpoint {
  weights: number[][]; // 3 x dim
  bias: number[]; // 3
}

/** Small seeded PRNG (mulberry32) so test checkpoints need no files. */
export function seededCheckpoint(seed: number, dim: number): Checkpoint {
  let state = seed >>> 0;
  const next = () => {
    state = (state + 0x6d2b79f5) >>> 0;
    let t = state;
    t = Math.imul(t ^ (t >>> 15), t | 1);
    t ^= t + Math.imul(t ^ (t >>> 7), t | 61);
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
  const weights = Array.from({ length: 3 }, () =>
    Array.from({ length: dim }, () => next() * 2 - 1),
  );
  const bias = Array.from({ length: 3 }, () => next() * 0.1);
  return { weights, bias };
}

function softmax3(logits: [number, number, number]): [number, number, number] {
  const max = Math.max(...logits);
  const exps = logits.map((v) => Math.exp(v - max)) as [number, number, number];
  const sum = exps[0] + exps[1] + exps[2];
  return [exps[0] / sum, exps[1] / sum, exps[2] / sum];
}

export function exportLogits(
  samples: ManifestSample[],
  embeddings: { rows: number; cols: number; data: Float32Array },
  checkpoint: Checkpoint,
  modelTag: string,
  outPath: string,
): number {
  if (embeddings.rows !== samples.length) {
    throw new Error(
      `checkpoint/manifest mismatch: ${embeddings.rows} embedding rows for ${samples.length} samples`,
    );
  }
  if (checkpoint.weights.length !== 3 || checkpoint.weights[0].length !== embeddings.cols) {
    throw new Error(
      `checkpoint/manifest mismatch: weights are ${checkpoint.weights.length} x ` +
        `${checkpoint.weights[0]?.length}, embeddings have dim ${embeddings.cols}`,
    );
  }
  const lines: string[] = [];
  samples.forEach((sample, row) => {
    const logits: [number, number, number] = [0, 0, 0];
    for (let c = 0; c < 3; c++) {
      let acc = checkpoint.bias[c];
      const w = checkpoint.weights[c];
      for (let j = 0; j < embeddings.cols; j++) {
        acc += w[j] * embeddings.data[row * embeddings.cols + j];
      }
      logits[c] = acc;
    }
    const [pMild, pModerate, pSevere] = softmax3(logits);
    lines.push(
      JSON.stringify({
        id: sample.id,
        model: modelTag,
        p_mild: pMild,
        p_moderate: pModerate,
        p_severe: pSevere,
      }),
    );
  });
  writeFileSync(outPath, lines.join('\n') + '\n');
  return lines.length;
}
