#!/usr/bin/env node
import { writeFileSync } from "fs";
import { parseArgs } from "util";
import { pathToFileURL } from "url";
import { SchemaError, parseTrace } from "./trace.js";
import { renderPanel } from "./render.js";

const USAGE =
  "usage: crdw-figures render --unattacked <trace.csv> --attacked <trace.csv> --out <figure.svg>";

function renderCommand(rest: string[]): void {
  let values: { unattacked?: string; attacked?: string; out?: string };
  try {
    values = parseArgs({
      args: rest,
      options: {
        unattacked: { type: "string" },
        attacked: { type: "string" },
        out: { type: "string" },
      },
      allowPositionals: false,
    }).values;
  } catch (err) {
    throw new SchemaError(`${(err as Error).message}\n${USAGE}`);
  }
  for (const key of ["unattacked", "attacked", "out"] as const) {
    if (values[key] === undefined) {
      throw new SchemaError(`missing --${key}\n${USAGE}`);
    }
  }
  const out = values.out as string;
  if (!out.endsWith(".svg")) {
    throw new SchemaError(`output must be an .svg path, got ${out}`);
  }
  const u = parseTrace(values.unattacked as string);
  const a = parseTrace(values.attacked as string);
  writeFileSync(out, renderPanel(u, a));
}

export async function main(argv: string[]): Promise<number> {
  try {
    const [command, ...rest] = argv;
    if (command !== "render") {
      throw new SchemaError(
        command === undefined ? USAGE : `unknown command: ${command}\n${USAGE}`,
      );
    }
    renderCommand(rest);
    return 0;
  } catch (err) {
    if (err instanceof SchemaError) {
      process.stderr.write(`error: ${err.message}\n`);
      return 1;
    }
    process.stderr.write(`internal error: ${(err as Error).stack ?? err}\n`);
    return 2;
  }
}

const invoked = process.argv[1];
if (invoked !== undefined && import.meta.url === pathToFileURL(invoked).href) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
