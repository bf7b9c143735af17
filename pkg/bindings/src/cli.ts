/**
 * Process-level bridge to the primary implementation. Every binding
 * function shells out to the `sr3d` CLI (override the executable with
 * SR3D_BIN) and maps its single-line `ERROR <code>: <message>` stderr
 * diagnostics onto typed exceptions.
 */

import { spawnSync } from "node:child_process";

import { primaryErrorFrom } from "./errors.js";

export interface RunOptions {
  cwd?: string;
  env?: Record<string, string>;
}

const ERROR_LINE = /^ERROR (\d+): (.*)$/m;

export function primaryExecutable(): string {
  return process.env.SR3D_BIN ?? "sr3d";
}

export function runPrimary(args: string[], options: RunOptions = {}): string {
  const result = spawnSync(primaryExecutable(), args, {
    cwd: options.cwd,
    env: { ...process.env, ...options.env },
    encoding: "utf8",
    maxBuffer: 256 * 1024 * 1024,
  });
  if (result.error) {
    throw new Error(`failed to launch '${primaryExecutable()}': ${result.error.message}`);
  }
  if (result.status !== 0) {
    const match = ERROR_LINE.exec(result.stderr ?? "");
    if (match) {
      throw primaryErrorFrom(Number(match[1]), match[2]);
    }
    throw new Error(
      `${primaryExecutable()} ${args[0]} exited with ${result.status}: ${result.stderr}`
    );
  }
  return result.stdout;
}

export function runPrimaryJson<T>(args: string[], options: RunOptions = {}): T {
  return JSON.parse(runPrimary(args, options)) as T;
}
