/** End-to-end input path (acceptance A11): a scripted keyboard sequence
 *  drives the live gateway over the wire; replaying the recorded log
 *  server-side must land on the same final state hash. */

import assert from "node:assert/strict";
import { spawn, spawnSync } from "node:child_process";
import { mkdtempSync } from "node:fs";
import { tmpdir } from "node:os";
import { join, resolve } from "node:path";
import { fileURLToPath } from "node:url";
import { test } from "node:test";

import WebSocket from "ws";

import { InputMapper } from "../src/input.js";
import { parseServerMessage } from "../src/protocol.js";

// compiled test runs from frontend/dist/test; the package root is three up
const pkgRoot = resolve(fileURLToPath(new URL(".", import.meta.url)), "../../..");
const srcPath = join(pkgRoot, "src");
const pyEnv = { ...process.env, PYTHONPATH: srcPath };

function python(args: string[]) {
  return spawnSync("python3", ["-m", "lapaware.gateway.cli", ...args],
                   { env: pyEnv, encoding: "utf-8" });
}

test("A11: scripted keys -> wire -> record; replay reproduces the hash", async () => {
  const workDir = mkdtempSync(join(tmpdir(), "lapaware-ui-"));
  const fixtures = python(["fixtures", "--out", workDir, "--name", "minimal"]);
  assert.equal(fixtures.status, 0, fixtures.stderr);
  const scenePath = join(workDir, "minimal.json");
  const logPath = join(workDir, "live.lapslog");

  const server = spawn("python3", [
    "-m", "lapaware.gateway.cli", "serve",
    "--scene", scenePath, "--task", "navigation",
    "--port", "0", "--record", logPath, "--ticks", "180",
  ], { env: pyEnv });
  let serverOut = "";
  server.stdout.on("data", (chunk) => { serverOut += chunk; });
  let serverErr = "";
  server.stderr.on("data", (chunk) => { serverErr += chunk; });

  try {
    const port = await new Promise<number>((resolvePort, reject) => {
      const timer = setTimeout(() => reject(new Error(`no listen line: ${serverErr}`)), 15000);
      const check = () => {
        const m = serverOut.match(/listening on ws:\/\/[^:]+:(\d+)/);
        if (m) {
          clearTimeout(timer);
          resolvePort(Number(m[1]));
        } else {
          setTimeout(check, 50);
        }
      };
      check();
    });

    const ws = new WebSocket(`ws://127.0.0.1:${port}`);
    await new Promise((res, rej) => { ws.on("open", res); ws.on("error", rej); });

    const mapper = new InputMapper(["tool"]);
    const sent: number[] = [];
    let endHash: string | null = null;
    const ended = new Promise<void>((res) => {
      ws.on("message", (data) => {
        const msg = parseServerMessage(String(data));
        if (msg.type === "hello") {
          assert.equal(msg.role, "controller");
          assert.deepEqual(msg.tools, ["tool"]);
        } else if (msg.type === "session_end") {
          endHash = msg.state_hash;
          res();
        } else if (msg.type === "error") {
          throw new Error(`server rejected input: ${msg.message}`);
        }
      });
    });

    // scripted sequence: pitch forward, then advance, then open the jaw
    const script: [number, string, "down" | "up"][] = [
      [0, "w", "down"], [20, "w", "up"],
      [22, "r", "down"], [50, "r", "up"],
      [52, " ", "down"],
    ];
    for (let frame = 0; frame < 70; frame++) {
      for (const [at, key, dir] of script) {
        if (at === frame) {
          if (dir === "down") mapper.keyDown(key);
          else mapper.keyUp(key);
        }
      }
      const msg = mapper.frame();
      if (msg) {
        sent.push(msg.seq);
        ws.send(JSON.stringify(msg));
      }
      await new Promise((r) => setTimeout(r, 15));
    }
    for (let i = 1; i < sent.length; i++) {
      assert.ok(sent[i] > sent[i - 1], "seq must strictly increase");
    }
    assert.ok(sent.length >= 50, `expected a dense stream, sent ${sent.length}`);

    await ended;
    ws.close();
    assert.ok(endHash, "no session_end received");

    await new Promise((res) => server.on("exit", res));

    const replayed = python(["replay", "--scene", scenePath, "--log", logPath]);
    assert.equal(replayed.status, 0, replayed.stderr);
    const m = replayed.stdout.match(/final state hash ([0-9a-f]{16})/);
    assert.ok(m, `unexpected replay output: ${replayed.stdout}`);
    assert.equal(m![1], endHash, "live and replayed state hashes differ");
  } finally {
    if (server.exitCode === null) server.kill();
  }
});
