import * as fs from "fs";
import * as os from "os";
import * as path from "path";
import { afterAll, describe, expect, it } from "vitest";

import { augmentWindow, loadDataset, readTrajectoryFile, toTrainingArrays } from "../src/dataset";

const tmp = fs.mkdtempSync(path.join(os.tmpdir(), "vpil-ds-"));
afterAll(() => fs.rmSync(tmp, { recursive: true, force: true }));

function writeTrajectory(file: string, N: number, K: number, mf: number, records: { t: number; window: number[]; target: number[] }[]) {
  const recSize = 8 + 4 * N * K + 8 * 2 * mf;
  const buf = Buffer.alloc(24 + records.length * recSize);
  buf.write("VPIL", 0, "ascii");
  buf.writeUInt32LE(1, 4);
  buf.writeUInt32LE(N, 8);
  buf.writeUInt32LE(K, 12);
  buf.writeUInt32LE(mf, 16);
  buf.writeUInt32LE(records.length, 20);
  let off = 24;
  for (const r of records) {
    buf.writeDoubleLE(r.t, off);
    off += 8;
    for (const v of r.window) {
      buf.writeFloatLE(v, off);
      off += 4;
    }
    for (const v of r.target) {
      buf.writeDoubleLE(v, off);
      off += 8;
    }
  }
  fs.writeFileSync(file, buf);
}

describe("trajectory file reader", () => {
  it("round-trips a synthesized file", () => {
    const N = 2, K = 3, mf = 2;
    const records = [
      { t: 1.0, window: [1, 2, 3, 4, 5, 6], target: [0.1, -0.2, 0.3, -0.4] },
      { t: 1.02, window: [6, 5, 4, 3, 2, 1], target: [0.5, 0.6, -0.7, 0.8] },
    ];
    const file = path.join(tmp, "traj_00000.bin");
    writeTrajectory(file, N, K, mf, records);
    const tr = readTrajectoryFile(file, 0);
    expect(tr.N).toBe(N);
    expect(tr.K).toBe(K);
    expect(tr.mf).toBe(mf);
    expect(tr.records.length).toBe(2);
    expect(tr.records[0].t).toBe(1.0);
    expect(Array.from(tr.records[1].window)).toEqual([6, 5, 4, 3, 2, 1]);
    expect(Array.from(tr.records[0].target)).toEqual([0.1, -0.2, 0.3, -0.4]);
  });

  it("rejects bad magic and truncation", () => {
    const bad = path.join(tmp, "bad.bin");
    fs.writeFileSync(bad, Buffer.from("NOPE and then some bytes"));
    expect(() => readTrajectoryFile(bad, 0)).toThrow(/not a trajectory/);

    const file = path.join(tmp, "trunc.bin");
    writeTrajectory(file, 2, 3, 2, [{ t: 0, window: [1, 2, 3, 4, 5, 6], target: [1, 2, 3, 4] }]);
    const whole = fs.readFileSync(file);
    fs.writeFileSync(file, whole.subarray(0, whole.length - 5));
    expect(() => readTrajectoryFile(file, 0)).toThrow(/truncated/);
  });

  it("loads a directory through its manifest", () => {
    const dir = path.join(tmp, "set");
    fs.mkdirSync(dir, { recursive: true });
    writeTrajectory(path.join(dir, "traj_00003.bin"), 2, 3, 1, [
      { t: 1.0, window: [0, 0, 1, 0, 0, 2], target: [0.5, 0.5] },
    ]);
    fs.writeFileSync(
      path.join(dir, "manifest.json"),
      JSON.stringify({ format_version: 1, mf: 1, n: 1, trajectories: [3], config_ini: "" })
    );
    const trajs = loadDataset(dir);
    expect(trajs.length).toBe(1);
    expect(trajs[0].trajectory).toBe(3);
  });
});

describe("window augmentation", () => {
  it("concatenates values with forward differences, first difference zero", () => {
    // one sensor, readings 1, 3, 6 -> diffs 0, 2, 3
    const aug = augmentWindow([1, 3, 6], 1, 3);
    expect(Array.from(aug)).toEqual([1, 0, 3, 2, 6, 3]);
  });

  it("reconstructs the original by telescoping", () => {
    const N = 3, K = 5;
    const window = Array.from({ length: N * K }, () => Math.random());
    const aug = augmentWindow(window, N, K);
    for (let i = 0; i < N; i++) {
      let acc = aug[0 * 2 * N + i];
      for (let t = 1; t < K; t++) {
        acc += aug[t * 2 * N + N + i];
        expect(acc).toBeCloseTo(window[i * K + t], 5);
      }
    }
  });

  it("stacks training arrays with matching geometry", () => {
    const N = 2, K = 3, mf = 2;
    const file = path.join(tmp, "traj_00009.bin");
    writeTrajectory(file, N, K, mf, [
      { t: 1.0, window: [1, 2, 3, 4, 5, 6], target: [1, 2, 3, 4] },
      { t: 1.02, window: [2, 3, 4, 5, 6, 7], target: [5, 6, 7, 8] },
    ]);
    const data = toTrainingArrays([readTrajectoryFile(file, 9)]);
    expect(data.count).toBe(2);
    expect(data.inputs.length).toBe(2 * K * 2 * N);
    expect(data.targets.length).toBe(2 * 2 * mf);
  });
});
