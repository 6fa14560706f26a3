// Integration against the real instrument service: spawn the Python
// server on an ephemeral port and drive the panel's fetch layer at it.

import { spawn, ChildProcess } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { fetchStats, measureOnce } from "../src/api.js";
import { CHANNELS } from "../src/state.js";

let proc: ChildProcess | null = null;
let baseUrl = "";

function startServer(): Promise<string> {
  const dir = mkdtempSync(join(tmpdir(), "helios-panel-"));
  proc = spawn(
    "python3",
    ["-m", "helios.cli", "serve", "--port", "0", "--seed", "11",
     "--log-path", join(dir, "log.ndjson")],
    { cwd: dir, env: { ...process.env, PYTHONUNBUFFERED: "1" } },
  );
  return new Promise((resolve, reject) => {
    const timer = setTimeout(() => reject(new Error("server never announced")), 15000);
    proc!.stdout!.on("data", (chunk: Buffer) => {
      const match = chunk.toString().match(/serving on (\S+)/);
      if (match) {
        clearTimeout(timer);
        resolve(match[1]);
      }
    });
    proc!.on("error", reject);
    proc!.on("exit", (code) => reject(new Error(`server exited early: ${code}`)));
  });
}

beforeAll(async () => {
  baseUrl = await startServer();
});

afterAll(() => {
  proc?.kill("SIGTERM");
});

describe("against the live service", () => {
  it("a measurement echoes the inputs and returns all ten channels", async () => {
    const body = await measureOnce(baseUrl, { r: 0, g: 0.5, b: 0 });
    expect(body.in).toEqual({ R: 0, G: 0.5, B: 0 });
    expect(Object.keys(body.out)).toEqual([...CHANNELS]);
    for (const value of Object.values(body.out)) {
      expect(Number.isInteger(value)).toBe(true);
      expect(value).toBeGreaterThanOrEqual(0);
      expect(value).toBeLessThanOrEqual(65535);
    }
    expect(Math.abs(body.out["515nm"] - 34343)).toBeLessThanOrEqual(4 * 70);
  });

  it("the stats counter advances with measurements", async () => {
    const before = (await fetchStats(baseUrl)).experiments;
    await measureOnce(baseUrl, { r: 0.1, g: 0.1, b: 0.1 });
    const after = (await fetchStats(baseUrl)).experiments;
    expect(after).toBe(before + 1);
  });

  it("service errors surface with their message", async () => {
    await expect(
      measureOnce(baseUrl, { r: Number.NaN, g: 0, b: 0 }, async (url) =>
        fetch(String(url).replace("R=NaN", "R=abc")),
      ),
    ).rejects.toThrow(/not a number/);
  });
});
