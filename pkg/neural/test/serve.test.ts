/**
 * End-to-end protocol tests against the real served process: checkpoint
 * round trip, handshake validation, and consistency between the served
 * network and in-process inference.
 */

import { ChildProcess, spawn } from "child_process";
import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { createInterface, Interface } from "readline";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { augmentWindow } from "../src/dataset";
import { ControllerNet, defaultConfig } from "../src/model";
import { loadCheckpoint, saveCheckpoint, trainNet } from "../src/train";

const ROOT = path.resolve(__dirname, "..");
const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "vpil-serve-"));
const ckpt = path.join(tmp, "ckpt");

const N = 4;
const K = 10;
const MF = 8;

class Client {
  private proc: ChildProcess;
  private rl: Interface;
  private queue: ((line: string) => void)[] = [];

  constructor(args: string[]) {
    this.proc = spawn("node", [path.join(ROOT, "dist", "cli.js"), ...args], {
      stdio: ["pipe", "pipe", "inherit"],
    });
    this.rl = createInterface({ input: this.proc.stdout! });
    this.rl.on("line", (line) => this.queue.shift()?.(line));
  }

  send(msg: unknown): void {
    this.proc.stdin!.write(JSON.stringify(msg) + "\n");
  }

  sendRaw(line: string): void {
    this.proc.stdin!.write(line + "\n");
  }

  recv(timeoutMs = 15000): Promise<any> {
    return new Promise((resolve, reject) => {
      const timer = setTimeout(() => reject(new Error("server response timeout")), timeoutMs);
      this.queue.push((line) => {
        clearTimeout(timer);
        resolve(JSON.parse(line));
      });
    });
  }

  async close(): Promise<void> {
    this.send({ type: "bye" });
    await new Promise((resolve) => {
      this.proc.on("exit", resolve);
      setTimeout(resolve, 2000);
    });
    this.proc.kill();
  }
}

function hello(overrides: Partial<Record<string, number>> = {}) {
  return {
    type: "hello",
    version: 1,
    N,
    K,
    eta: 0.02,
    Lx: 10 * Math.PI,
    Mf: MF,
    ...overrides,
  };
}

function window(fill: (i: number, t: number) => number): number[][] {
  return Array.from({ length: N }, (_, i) => Array.from({ length: K }, (_, t) => fill(i, t)));
}

let net: ControllerNet;

beforeAll(() => {
  // a tiny briefly-trained checkpoint; quality is irrelevant here
  net = new ControllerNet({
    ...defaultConfig(N, K, MF),
    channels: 8,
    dilations: [1, 2],
    heads: 2,
    hidden: 16,
    seed: 5,
  });
  const count = 8;
  const rnd = (() => {
    let s = 9;
    return () => ((s = (s * 1103515245 + 12345) & 0x7fffffff) / 0x7fffffff) * 2 - 1;
  })();
  const inputs = Float32Array.from({ length: count * K * 2 * N }, rnd);
  const targets = Float32Array.from({ length: count * 2 * MF }, rnd);
  trainNet(net, { N, K, mf: MF, count, inputs, targets }, { steps: 20, batch: 8, lr: 1e-3 });
  saveCheckpoint(net, ckpt, "tiny-test-net");
}, 120_000);

afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

describe("checkpoint persistence", () => {
  it("round-trips weights exactly", () => {
    const { net: back, name } = loadCheckpoint(ckpt);
    expect(name).toBe("tiny-test-net");
    const a = net.variables();
    const b = back.variables();
    expect(b.length).toBe(a.length);
    for (let i = 0; i < a.length; i++) {
      expect(Array.from(b[i].dataSync())).toEqual(Array.from(a[i].dataSync()));
    }
  });
});

describe("served checkpoint", () => {
  it("handshakes, serves inference matching in-process forward, shuts down", async () => {
    const client = new Client(["serve", "--checkpoint", ckpt]);
    client.send(hello());
    const ready = await client.recv();
    expect(ready).toEqual({ type: "ready", name: "tiny-test-net" });

    const w = window((i, t) => 1 + 0.01 * Math.sin(i + t));
    client.send({ type: "obs", t: 1.0, window: w });
    const reply = await client.recv();
    expect(reply.type).toBe("control");
    expect(reply.a.length).toBe(MF);
    expect(reply.b.length).toBe(MF);

    const flat = new Float32Array(N * K);
    for (let i = 0; i < N; i++) flat.set(Float32Array.from(w[i]), i * K);
    const local = net.predictOne(augmentWindow(flat, N, K));
    for (let m = 0; m < MF; m++) {
      expect(reply.a[m]).toBeCloseTo(local[m], 6);
      expect(reply.b[m]).toBeCloseTo(local[MF + m], 6);
    }
    await client.close();
  }, 60_000);

  it("refuses a mismatched handshake naming the field and never sends ready", async () => {
    const client = new Client(["serve", "--checkpoint", ckpt]);
    client.send(hello({ K: 50 }));
    const reply = await client.recv();
    expect(reply.type).toBe("error");
    expect(reply.reason).toContain("K=50");
    await client.close();
  }, 60_000);

  it("answers malformed input with errors and keeps serving", async () => {
    const client = new Client(["serve", "--checkpoint", ckpt]);
    client.send(hello());
    await client.recv();
    client.sendRaw("garbage not json");
    expect((await client.recv()).type).toBe("error");
    client.send({ type: "obs", t: 1.0, window: [[1, 2]] });
    expect((await client.recv()).type).toBe("error");
    client.send({ type: "obs", t: 1.0, window: window(() => 1) });
    expect((await client.recv()).type).toBe("control");
    await client.close();
  }, 60_000);
});

describe("served b1 reference", () => {
  it("matches the analytic instantaneous spectral control", async () => {
    const client = new Client(["serve", "--mode", "b1"]);
    client.send(hello());
    expect((await client.recv()).name).toBe("b1-reference");
    const Lx = 10 * Math.PI;
    const kappa = (2 * Math.PI) / Lx;
    const eps = 0.03;
    const w = window((i, t) => (t === K - 1 ? 1 + eps * Math.cos((2 * Math.PI * i) / N) : 0));
    client.send({ type: "obs", t: 1.0, window: w });
    const reply = await client.recv();
    expect(reply.b[0]).toBeCloseTo(eps / kappa, 10);
    expect(Math.abs(reply.a[0])).toBeLessThan(1e-12);
    await client.close();
  }, 60_000);
});
