/**
 * Exporter CLI.
 *
 *   export-embeddings --manifest M --modality image|text [--encoder hash-512]
 *                     [--image-root DIR] [--caption-source llm|human] --out BLOB
 *   export-embeddings --modality prompts --prompts prompts_flood.json --out BLOB
 *   export-logits     --manifest M --embeddings BLOB
 *                     (--checkpoint FILE | --checkpoint-seed N)
 *                     [--model TAG] --out predictions.jsonl
 */

import { readFileSync } from 'node:fs';
import { parseArgs } from 'node:util';

import { readDarb } from './darb.js';
import { makeEncoder } from './encoder.js';
import { Checkpoint, exportEmbeddings, exportLogits, seededCheckpoint, Modality } from './export.js';
import { readManifest } from './manifest.js';

function usageError(message: string): never {
  console.error(`error: ${message}`);
  process.exit(1);
}

function runExportEmbeddings(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      manifest: { type: 'string' },
      modality: { type: 'string' },
      encoder: { type: 'string', default: 'hash-512' },
      'image-root': { type: 'string' },
      'caption-source': { type: 'string', default: 'llm' },
      prompts: { type: 'string' },
      out: { type: 'string' },
    },
  });
  if (!values.modality || !values.out) usageError('--modality and --out are required');
  const modality = values.modality as Modality;
  if (!['image', 'text', 'prompts'].includes(modality)) {
    usageError(`unknown modality '${values.modality}'`);
  }
  if (values['caption-source'] !== 'llm' && values['caption-source'] !== 'human') {
    usageError(`--caption-source must be llm or human`);
  }
  const samples = values.manifest ? readManifest(values.manifest) : null;
  const count = exportEmbeddings(samples, {
    encoder: makeEncoder(values.encoder!),
    modality,
    outPath: values.out,
    imageRoot: values['image-root'],
    captionSource: values['caption-source'],
    promptsPath: values.prompts,
  });
  console.log(`wrote ${count} x ${makeEncoder(values.encoder!).dim} embeddings to ${values.out}`);
}

function runExportLogits(argv: string[]): void {
  const { values } = parseArgs({
    args: argv,
    options: {
      manifest: { type: 'string' },
      embeddings: { type: 'string' },
      checkpoint: { type: 'string' },
      'checkpoint-seed': { type: 'string' },
      model: { type: 'string', default: 'baseline' },
      out: { type: 'string' },
    },
  });
  if (!values.manifest || !values.embeddings || !values.out) {
    usageError('--manifest, --embeddings and --out are required');
  }
  const samples = readManifest(values.manifest);
  const embeddings = readDarb(values.embeddings);
  let checkpoint: Checkpoint;
  if (values.checkpoint) {
    checkpoint = JSON.parse(readFileSync(values.checkpoint, 'utf-8'));
  } else if (values['checkpoint-seed'] !== undefined) {
    checkpoint = seededCheckpoint(Number(values['checkpoint-seed']), embeddings.cols);
  } else {
    usageError('provide --checkpoint or --checkpoint-seed');
  }
  const count = exportLogits(samples, embeddings, checkpoint, values.model!, values.out);
  console.log(`wrote ${count} predictions to ${values.out}`);
}

function main(): void {
  const [command, ...rest] = process.argv.slice(2);
  try {
    switch (command) {
      case 'export-embeddings':
        runExportEmbeddings(rest);
        break;
      case 'export-logits':
        runExportLogits(rest);
        break;
      default:
        usageError(`unknown command '${command ?? ''}' (export-embeddings | export-logits)`);
    }
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    process.exit(1);
  }
}

main();
