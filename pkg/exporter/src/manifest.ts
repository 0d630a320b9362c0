/** Manifest and prompt-set readers for the primary toolkit's file formats. */

import { readFileSync } from 'node:fs';

export interface ManifestSample {
  id: string;
  lat: number;
  lon: number;
  label: string;
  captionHuman?: string;
  captionLlm?: string;
}

const LABELS = new Set(['mild', 'moderate', 'severe']);

export function readManifest(path: string): ManifestSample[] {
  const lines = readFileSync(path, 'utf-8').split('\n');
  const samples: ManifestSample[] = [];
  const seen = new Set<string>();
  lines.forEach((line, index) => {
    if (!line.trim()) return;
    let record: Record<string, unknown>;
    try {
      record = JSON.parse(line);
    } catch (err) {
      throw new Error(`${path}:${index + 1}: malformed JSON`);
    }
    for (const key of ['id', 'lat', 'lon', 'label']) {
      if (!(key in record)) {
        throw new Error(`${path}:${index + 1}: missing field '${key}'`);
      }
    }
    const id = String(record.id);
    if (seen.has(id)) {
      throw new Error(`duplicate sample id '${id}'`);
    }
    seen.add(id);
    const label = String(record.label).toLowerCase();
    if (!LABELS.has(label)) {
      throw new Error(`${path}:${index + 1}: unknown label '${record.label}'`);
    }
    samples.push({
      id,
      lat: Number(record.lat),
      lon: Number(record.lon),
      label,
      captionHuman: record.caption_human as string | undefined,
      captionLlm: record.caption_llm as string | undefined,
    });
  });
  if (samples.length === 0) {
    throw new Error(`empty manifest: ${path}`);
  }
  return samples;
}

export interface PromptSet {
  dimension: string;
  prompts: string[];
}

export function readPromptSet(path: string): PromptSet {
  const record = JSON.parse(readFileSync(path, 'utf-8'));
  if (typeof record.dimension !== 'string' || !Array.isArray(record.prompts)) {
    throw new Error(`${path}: expected {dimension, prompts[]}`);
  }
  if (record.prompts.length === 0) {
    throw new Error(`${path}: empty prompt list`);
  }
  return { dimension: record.dimension, prompts: record.prompts.map(String) };
}
