#!/usr/bin/env node
/**
 * export-vggw --input <checkpoint.safetensors> --output <file.vggw> [--naming <preset>]
 *
 * Converts a pretrained VGG16 checkpoint into the VGGW portable format.
 * Exit codes: 0 success, 1 export failure (no file written), 2 bad usage.
 */

import { exportVggw, ExportError } from "./export";
import { makeManifest } from "./manifest";

interface Args {
  input?: string;
  output?: string;
  naming: string;
  help?: boolean;
}

const USAGE = `usage: export-vggw --input <checkpoint.safetensors> --output <file.vggw> [--naming torchvision|keras|plain]`;

function parseArgs(argv: string[]): Args {
  const args: Args = { naming: "torchvision" };
  for (let i = 0; i < argv.length; i++) {
    switch (argv[i]) {
      case "--input":
      case "-i":
        args.input = argv[++i];
        break;
      case "--output":
      case "-o":
        args.output = argv[++i];
        break;
      case "--naming":
      case "-n":
        args.naming = argv[++i];
        break;
      case "--help":
      case "-h":
        args.help = true;
        break;
      default:
        console.error(`unknown argument: ${argv[i]}`);
        console.error(USAGE);
        process.exit(2);
    }
  }
  return args;
}

export function main(argv: string[]): number {
  const args = parseArgs(argv);
  if (args.help) {
    console.log(USAGE);
    return 0;
  }
  if (!args.input || !args.output) {
    console.error(USAGE);
    return 2;
  }
  try {
    exportVggw(makeManifest(args.input, args.output, args.naming));
    return 0;
  } catch (err) {
    if (err instanceof ExportError || err instanceof Error) {
      console.error(`error: ${err.message}`);
      return 1;
    }
    throw err;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
