/**
 * CLI entry: serve --model <path> --meta <json> --port <n>
 *
 * Loads the model artifact, runs a zero-image self-test, then serves the
 * wire protocol until interrupted.
 */

import { loadModel } from './model';
import { createApp } from './server';

function parseArgs(argv: string[]): { model: string; meta?: string; port: number } {
  const args: Record<string, string> = {};
  for (let i = 0; i < argv.length; i += 2) {
    const flag = argv[i];
    const value = argv[i + 1];
    if (!flag.startsWith('--') || value === undefined) {
      throw new Error(`usage: serve --model <path> [--meta <json>] [--port <n>], got ${flag}`);
    }
    args[flag.slice(2)] = value;
  }
  if (!args.model) {
    throw new Error('--model is required');
  }
  return { model: args.model, meta: args.meta, port: Number(args.port ?? 8400) };
}

function main(): void {
  const { model: modelPath, meta: metaPath, port } = parseArgs(process.argv.slice(2));
  const model = loadModel(modelPath, metaPath);
  model.selfTest();
  const app = createApp(model);
  const server = app.listen(port, () => {
    const address = server.address();
    const boundPort = typeof address === 'object' && address ? address.port : port;
    console.log(
      `serving ${model.meta.name} (${model.meta.class_count} classes, ` +
      `shape ${JSON.stringify(model.meta.shape)}) on http://127.0.0.1:${boundPort}`,
    );
  });
}

main();
