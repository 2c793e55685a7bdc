/**
 * Measure power and energy around a scope of code.
 *
 * The measurement itself runs in the powermeter core, driven through its
 * command-line interface: entering a scope launches the wrapper around a
 * small stdin-gated child, exiting closes the child's stdin so the wrapper
 * stops the session and exports its tables. All integration happens in the
 * core, so scope results are numerically identical to a direct CLI run.
 *
 * The `POWERMETER_BIN` environment variable names the core executable
 * (default `powermeter`); it may include leading arguments, e.g.
 * `python3 -m powermeter`.
 */

import { ChildProcess, spawn } from "node:child_process";
import { mkdtemp, readFile, rm } from "node:fs/promises";
import { tmpdir } from "node:os";
import * as path from "node:path";

export class InvalidStateError extends Error {}

export class ScopeError extends Error {}

export interface EnergyRow {
  method: string;
  device: string;
  /** Watt-hours; null when the channel produced too few samples. */
  energy_wh: number | null;
  mean_w: number | null;
  max_w: number | null;
  duration_s: number;
  samples: number;
  gaps: number;
}

export interface PowerRow {
  round: number;
  method: string;
  device: string;
  t_s: number;
  power_w: number;
}

export interface ChannelStats {
  mean_w: number | null;
  max_w: number | null;
  duration_s: number;
  samples: number;
  gaps: number;
}

export interface GetPowerOptions {
  /** Override the core executable (takes precedence over POWERMETER_BIN). */
  bin?: string;
  /** Keep the exported CSV files on disk after close. */
  keepFiles?: boolean;
}

const READY_MARK = "POWERMETER_SCOPE_READY";

// The wrapper launches this child only after the measurement session has
// started, so the marker doubles as the scope-entry handshake. EOF on stdin
// ends the scope.
const CHILD_SOURCE =
  `process.stdout.write("${READY_MARK}\\n");` +
  `process.stdin.resume();` +
  `process.stdin.on("end",()=>process.exit(0));`;

function parseCsvLine(line: string): string[] {
  const fields: string[] = [];
  let field = "";
  let quoted = false;
  for (let i = 0; i < line.length; i++) {
    const c = line[i];
    if (quoted) {
      if (c === '"') {
        if (line[i + 1] === '"') {
          field += '"';
          i++;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c === '"') {
      quoted = true;
    } else if (c === ",") {
      fields.push(field);
      field = "";
    } else {
      field += c;
    }
  }
  fields.push(field);
  return fields;
}

function stripComments(csvText: string): string {
  return csvText
    .split("\n")
    .filter((line) => !line.startsWith("#"))
    .join("\n");
}

function dataRows(csvText: string): string[][] {
  const lines = stripComments(csvText)
    .split("\n")
    .filter((line) => line.length > 0);
  return lines.slice(1).map(parseCsvLine); // drop the column header
}

function optionalNumber(cell: string): number | null {
  return cell === "" ? null : Number(cell);
}

export class MeasuredScope {
  private state: "open" | "closing" | "closed" = "open";
  private stderrText = "";
  private energyRaw = "";
  private powerRaw = "";
  private energyRows_: EnergyRow[] = [];
  private powerRows_: PowerRow[] = [];
  private readonly exit: Promise<number | null>;

  constructor(
    private readonly child: ChildProcess,
    readonly outputDir: string,
    private readonly keepFiles: boolean,
  ) {
    this.exit = new Promise((resolve) => child.once("close", resolve));
    child.stdout?.resume();
    child.stderr?.on("data", (chunk: Buffer) => {
      this.stderrText += chunk.toString();
    });
  }

  /** The wrapper's energy summary (stderr), available after close. */
  get summary(): string {
    return this.stderrText;
  }

  /** End the scope: stop the session, collect the exported tables. */
  async close(): Promise<void> {
    if (this.state !== "open") {
      throw new InvalidStateError("scope already consumed");
    }
    this.state = "closing";
    this.child.stdin?.end();
    const code = await this.exit;
    if (code !== 0) {
      throw new ScopeError(
        `powermeter exited with code ${code}: ${this.stderrText.trim()}`,
      );
    }
    this.energyRaw = await readFile(path.join(this.outputDir, "energy.csv"), "utf8");
    this.powerRaw = await readFile(path.join(this.outputDir, "power.csv"), "utf8");
    this.energyRows_ = dataRows(this.energyRaw).map((row) => ({
      method: row[0],
      device: row[1],
      energy_wh: optionalNumber(row[2]),
      mean_w: optionalNumber(row[3]),
      max_w: optionalNumber(row[4]),
      duration_s: Number(row[5]),
      samples: Number(row[6]),
      gaps: Number(row[7]),
    }));
    this.powerRows_ = dataRows(this.powerRaw).map((row) => ({
      round: Number(row[0]),
      method: row[1],
      device: row[2],
      t_s: Number(row[3]),
      power_w: Number(row[4]),
    }));
    if (!this.keepFiles) {
      await rm(this.outputDir, { recursive: true, force: true });
    }
    this.state = "closed";
  }

  private requireClosed(): void {
    if (this.state !== "closed") {
      throw new InvalidStateError("scope is still open; close() it first");
    }
  }

  /** Per-channel energy table plus the additional statistics map. */
  energy(): [EnergyRow[], Map<string, ChannelStats>] {
    this.requireClosed();
    const additional = new Map<string, ChannelStats>();
    for (const row of this.energyRows_) {
      additional.set(`${row.method}:${row.device}`, {
        mean_w: row.mean_w,
        max_w: row.max_w,
        duration_s: row.duration_s,
        samples: row.samples,
        gaps: row.gaps,
      });
    }
    return [this.energyRows_.slice(), additional];
  }

  power(): PowerRow[] {
    this.requireClosed();
    return this.powerRows_.slice();
  }

  /** Exact energy table text (metadata lines stripped), for equivalence checks. */
  energyTableText(): string {
    this.requireClosed();
    return stripComments(this.energyRaw);
  }

  powerTableText(): string {
    this.requireClosed();
    return stripComments(this.powerRaw);
  }
}

export function resolveBin(override?: string): string[] {
  const spec = override ?? process.env.POWERMETER_BIN ?? "powermeter";
  const parts = spec.split(/\s+/).filter((p) => p.length > 0);
  if (parts.length === 0) {
    throw new ScopeError("POWERMETER_BIN is empty");
  }
  return parts;
}

/**
 * Open a measured scope: sampling runs concurrently with the caller until
 * `close()`. Rejects before any enclosed code runs when a method cannot be
 * resolved.
 */
export async function getPower(
  methods: string[],
  intervalMs = 100,
  options: GetPowerOptions = {},
): Promise<MeasuredScope> {
  if (methods.length === 0) {
    throw new ScopeError("at least one method is required");
  }
  const [bin, ...binArgs] = resolveBin(options.bin);
  const outputDir = await mkdtemp(path.join(tmpdir(), "powerscope-"));
  const args = [
    ...binArgs,
    ...methods.flatMap((m) => ["--methods", m]),
    "--interval",
    String(intervalMs),
    "--df-out",
    outputDir,
    "--df-filetype",
    "csv",
    "--",
    process.execPath,
    "-e",
    CHILD_SOURCE,
  ];
  const child = spawn(bin, args, { stdio: ["pipe", "pipe", "pipe"] });
  const scope = new MeasuredScope(child, outputDir, options.keepFiles ?? false);

  await new Promise<void>((resolve, reject) => {
    let stdoutText = "";
    const fail = async (message: string) => {
      await rm(outputDir, { recursive: true, force: true }).catch(() => undefined);
      reject(new ScopeError(message));
    };
    const onData = (chunk: Buffer) => {
      stdoutText += chunk.toString();
      if (stdoutText.includes(READY_MARK)) {
        child.stdout?.off("data", onData);
        child.off("close", onClose);
        child.off("error", onError);
        resolve();
      }
    };
    const onClose = (code: number | null) => {
      void fail(
        `powermeter exited with code ${code} before the scope started: ${scope.summary.trim()}`,
      );
    };
    const onError = (err: Error) => {
      void fail(`failed to launch powermeter: ${err.message}`);
    };
    child.stdout?.on("data", onData);
    child.once("close", onClose);
    child.once("error", onError);
  });
  return scope;
}

/**
 * Run `body` inside a measured scope. The scope is always closed before
 * returning or rethrowing, so an exception in the body still leaves the
 * session stopped and its tables populated.
 */
export async function withPower<T>(
  methods: string[],
  intervalMs: number,
  body: (scope: MeasuredScope) => T | Promise<T>,
  options: GetPowerOptions = {},
): Promise<{ value: T; scope: MeasuredScope }> {
  const scope = await getPower(methods, intervalMs, options);
  let value: T;
  try {
    value = await body(scope);
  } catch (err) {
    try {
      await scope.close();
    } catch {
      // keep the body's error
    }
    throw err;
  }
  await scope.close();
  return { value, scope };
}
