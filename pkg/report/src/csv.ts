/**
 * Minimal RFC-4180 CSV reader for run-directory files.
 */

import { readFileSync } from "fs";

export type Row = Record<string, string>;

export class MissingColumnError extends Error {
  constructor(file: string, column: string) {
    super(`${file}: missing required column '${column}'`);
    this.name = "MissingColumnError";
  }
}

/** Parse CSV text into records; the first row is the header. */
export function parseCsv(text: string): Row[] {
  const rows: string[][] = [];
  let field = "";
  let record: string[] = [];
  let inQuotes = false;
  let i = 0;
  const pushField = () => {
    record.push(field);
    field = "";
  };
  const pushRecord = () => {
    pushField();
    rows.push(record);
    record = [];
  };
  while (i < text.length) {
    const ch = text[i];
    if (inQuotes) {
      if (ch === '"') {
        if (text[i + 1] === '"') {
          field += '"';
          i += 2;
          continue;
        }
        inQuotes = false;
        i += 1;
        continue;
      }
      field += ch;
      i += 1;
      continue;
    }
    if (ch === '"') {
      inQuotes = true;
      i += 1;
    } else if (ch === ",") {
      pushField();
      i += 1;
    } else if (ch === "\r") {
      i += 1; // swallow; \n handles the record break
    } else if (ch === "\n") {
      pushRecord();
      i += 1;
    } else {
      field += ch;
      i += 1;
    }
  }
  if (field.length > 0 || record.length > 0) {
    pushRecord();
  }
  if (rows.length === 0) {
    return [];
  }
  const header = rows[0];
  return rows.slice(1).map((values) => {
    const row: Row = {};
    header.forEach((name, idx) => {
      row[name] = values[idx] ?? "";
    });
    return row;
  });
}

export function readCsv(path: string): Row[] {
  return parseCsv(readFileSync(path, "utf8"));
}

/** Pull a numeric column, failing loudly when it is absent. */
export function numbers(rows: Row[], column: string, file: string): number[] {
  if (rows.length > 0 && !(column in rows[0])) {
    throw new MissingColumnError(file, column);
  }
  return rows.map((row) => Number(row[column]));
}

export function requireColumns(rows: Row[], columns: string[], file: string): void {
  if (rows.length === 0) {
    return;
  }
  for (const column of columns) {
    if (!(column in rows[0])) {
      throw new MissingColumnError(file, column);
    }
  }
}
