/**
 * Reader for the workbench's binary trajectory datasets.
 *
 * Layout per trajectory file (little-endian):
 *   magic "VPIL", version u32, N u32, K u32, Mf u32, record count u32,
 *   then per record: t f64, window N*K f32 (row-major), target 2*Mf f64.
 *
 * The network consumes windows augmented with first-order temporal
 * differences: a [K, 2N] sequence whose channels are the N sensor values
 * followed by their per-step differences (first difference zero).
 */

import * as fs from "fs";
import * as path from "path";

export interface DatasetRecord {
  t: number;
  window: Float32Array; // N*K row-major
  target: Float64Array; // 2*Mf
}

export interface TrajectoryData {
  trajectory: number;
  N: number;
  K: number;
  mf: number;
  records: DatasetRecord[];
}

export interface DatasetManifest {
  format_version: number;
  mf: number;
  n: number;
  trajectories: number[];
  config_ini: string;
}

const MAGIC = "VPIL";
const HEADER_BYTES = 24;

export function readTrajectoryFile(file: string, trajectory: number): TrajectoryData {
  const buf = fs.readFileSync(file);
  if (buf.length < HEADER_BYTES || buf.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`${file}: not a trajectory file`);
  }
  const version = buf.readUInt32LE(4);
  if (version !== 1) {
    throw new Error(`${file}: unsupported format version ${version}`);
  }
  const N = buf.readUInt32LE(8);
  const K = buf.readUInt32LE(12);
  const mf = buf.readUInt32LE(16);
  const count = buf.readUInt32LE(20);
  const recSize = 8 + 4 * N * K + 8 * 2 * mf;
  if (buf.length !== HEADER_BYTES + count * recSize) {
    throw new Error(`${file}: truncated (${buf.length} bytes, expected ${HEADER_BYTES + count * recSize})`);
  }
  const records: DatasetRecord[] = [];
  let off = HEADER_BYTES;
  for (let r = 0; r < count; r++) {
    const t = buf.readDoubleLE(off);
    off += 8;
    const window = new Float32Array(N * K);
    for (let i = 0; i < N * K; i++) {
      window[i] = buf.readFloatLE(off);
      off += 4;
    }
    const target = new Float64Array(2 * mf);
    for (let i = 0; i < 2 * mf; i++) {
      target[i] = buf.readDoubleLE(off);
      off += 8;
    }
    records.push({ t, window, target });
  }
  return { trajectory, N, K, mf, records };
}

export function loadManifest(dir: string): DatasetManifest {
  const manifest = JSON.parse(fs.readFileSync(path.join(dir, "manifest.json"), "utf8"));
  return manifest as DatasetManifest;
}

export function loadDataset(dir: string): TrajectoryData[] {
  const manifest = loadManifest(dir);
  return manifest.trajectories.map((idx) =>
    readTrajectoryFile(path.join(dir, `traj_${String(idx).padStart(5, "0")}.bin`), idx)
  );
}

/** [K, 2N] sequence: sensor values then forward time differences. */
export function augmentWindow(window: ArrayLike<number>, N: number, K: number): Float32Array {
  const out = new Float32Array(K * 2 * N);
  for (let t = 0; t < K; t++) {
    for (let i = 0; i < N; i++) {
      const cur = window[i * K + t];
      out[t * 2 * N + i] = cur;
      out[t * 2 * N + N + i] = t === 0 ? 0 : cur - window[i * K + t - 1];
    }
  }
  return out;
}

export interface TrainingArrays {
  N: number;
  K: number;
  mf: number;
  count: number;
  inputs: Float32Array; // count * K * 2N
  targets: Float32Array; // count * 2Mf
}

export function toTrainingArrays(trajs: TrajectoryData[], limit?: number): TrainingArrays {
  if (trajs.length === 0) throw new Error("empty dataset");
  const { N, K, mf } = trajs[0];
  const all: DatasetRecord[] = [];
  for (const tr of trajs) {
    if (tr.N !== N || tr.K !== K || tr.mf !== mf) {
      throw new Error("inconsistent geometry across trajectory files");
    }
    all.push(...tr.records);
  }
  const count = limit !== undefined ? Math.min(limit, all.length) : all.length;
  const inputs = new Float32Array(count * K * 2 * N);
  const targets = new Float32Array(count * 2 * mf);
  for (let r = 0; r < count; r++) {
    inputs.set(augmentWindow(all[r].window, N, K), r * K * 2 * N);
    targets.set(Float32Array.from(all[r].target), r * 2 * mf);
  }
  return { N, K, mf, count, inputs, targets };
}
