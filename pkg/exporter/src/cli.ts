#!/usr/bin/env node
import { runExport } from './export';
import { DEFAULT_MODEL_ID } from './model';

const USAGE =
  'usage: semantic-feature-exporter export --model <id> --out <dir> <images...>\n' +
  '\n' +
  "  --model <id>   'default' for the bundled scorer, or a path to a tfjs\n" +
  '                 model.json / model directory\n' +
  '  --out <dir>    output directory; one <stem>.fmap is written per image\n';

interface CliArgs {
  modelId: string;
  outDir: string;
  imagePaths: string[];
}

export function parseArgs(argv: string[]): CliArgs {
  if (argv[0] !== 'export') {
    throw new Error(`unknown command '${argv[0] ?? ''}'\n${USAGE}`);
  }
  let modelId = DEFAULT_MODEL_ID;
  let outDir: string | null = null;
  const imagePaths: string[] = [];
  for (let i = 1; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === '--model') {
      modelId = argv[++i];
      if (modelId === undefined) throw new Error('--model needs a value');
    } else if (arg === '--out') {
      outDir = argv[++i];
      if (outDir === undefined) throw new Error('--out needs a value');
    } else if (arg.startsWith('--')) {
      throw new Error(`unknown option '${arg}'\n${USAGE}`);
    } else {
      imagePaths.push(arg);
    }
  }
  if (!outDir) {
    throw new Error(`--out is required\n${USAGE}`);
  }
  if (imagePaths.length === 0) {
    throw new Error(`at least one input image is required\n${USAGE}`);
  }
  return { modelId, outDir, imagePaths };
}

export async function main(argv: string[]): Promise<number> {
  let args: CliArgs;
  try {
    args = parseArgs(argv);
  } catch (e) {
    console.error(`error: ${(e as Error).message}`);
    return 2;
  }
  try {
    const report = await runExport({
      imagePaths: args.imagePaths,
      outDir: args.outDir,
      modelId: args.modelId,
    });
    for (const outPath of report.written) {
      console.log(outPath);
    }
    if (report.failures.length > 0) {
      console.error(`${report.failures.length} file(s) failed:`);
      for (const failure of report.failures) {
        console.error(`  ${failure.path}: ${failure.reason}`);
      }
      return 1;
    }
    return 0;
  } catch (e) {
    console.error(`error: ${(e as Error).message}`);
    return 2;
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then(code => {
    process.exitCode = code;
  });
}
