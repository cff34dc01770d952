import { readFileSync } from "fs";
import Papa from "papaparse";

// leading columns every detection trace must carry, in order;
// solver columns after these are optional and ignored here
const REQUIRED = ["step", "statistic", "decision", "threshold", "ell"];

export class SchemaError extends Error {}

export interface TraceFile {
  path: string;
  steps: number[];
  statistics: number[];
  decisions: number[];
  threshold: number;
  ell: number;
}

function asNumber(raw: string, column: string, row: number, path: string): number {
  const v = Number(raw);
  if (raw === "" || raw === undefined || !Number.isFinite(v)) {
    throw new SchemaError(`${path}: row ${row}: ${column} is not a finite number (${raw})`);
  }
  return v;
}

export function parseTrace(path: string): TraceFile {
  let text: string;
  try {
    text = readFileSync(path, "utf8");
  } catch (e) {
    throw new SchemaError(`cannot read ${path}: ${(e as Error).message}`);
  }
  const parsed = Papa.parse<string[]>(text.trim(), { skipEmptyLines: true });
  if (parsed.errors.length > 0) {
    throw new SchemaError(`${path}: ${parsed.errors[0].message}`);
  }
  const rows = parsed.data;
  if (rows.length === 0) {
    throw new SchemaError(`${path}: empty file`);
  }
  const header = rows[0];
  for (let i = 0; i < REQUIRED.length; i++) {
    if (header[i] !== REQUIRED[i]) {
      throw new SchemaError(
        `${path}: header column ${i} is ${JSON.stringify(header[i])}, expected "${REQUIRED[i]}"`);
    }
  }
  if (rows.length === 1) {
    throw new SchemaError(`${path}: no data rows`);
  }

  const steps: number[] = [];
  const statistics: number[] = [];
  const decisions: number[] = [];
  let threshold = NaN;
  let ell = NaN;
  for (let r = 1; r < rows.length; r++) {
    const row = rows[r];
    if (row.length < REQUIRED.length) {
      throw new SchemaError(`${path}: row ${r} has ${row.length} fields, expected >= ${REQUIRED.length}`);
    }
    steps.push(asNumber(row[0], "step", r, path));
    statistics.push(asNumber(row[1], "statistic", r, path));
    const d = asNumber(row[2], "decision", r, path);
    if (d !== 0 && d !== 1) {
      throw new SchemaError(`${path}: row ${r}: decision must be 0 or 1, got ${row[2]}`);
    }
    decisions.push(d);
    const th = asNumber(row[3], "threshold", r, path);
    const el = asNumber(row[4], "ell", r, path);
    if (r === 1) {
      threshold = th;
      ell = el;
    } else if (th !== threshold || el !== ell) {
      throw new SchemaError(`${path}: row ${r}: threshold/ell differ from row 1`);
    }
  }
  return { path, steps, statistics, decisions, threshold, ell };
}

// paired attacked/unattacked traces must cover the same windows
export function checkPair(unattacked: TraceFile, attacked: TraceFile): void {
  if (unattacked.steps.length !== attacked.steps.length) {
    throw new SchemaError(
      `pair length mismatch: ${unattacked.path} has ${unattacked.steps.length} rows, ` +
      `${attacked.path} has ${attacked.steps.length}`);
  }
  for (let i = 0; i < unattacked.steps.length; i++) {
    if (unattacked.steps[i] !== attacked.steps[i]) {
      throw new SchemaError(
        `pair step mismatch at row ${i + 1}: ${unattacked.steps[i]} vs ${attacked.steps[i]}`);
    }
  }
}
