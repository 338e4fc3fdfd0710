/**
 * Training loop and checkpoint persistence.
 *
 * Checkpoints are a directory: config.json (network geometry, weight
 * shapes, loss settings) plus weights.bin (all parameters as little-endian
 * float32 in declaration order).  The geometry block is what the protocol
 * handshake is validated against at serve time.
 */

import * as fs from "fs";
import * as path from "path";
import * as tf from "@tensorflow/tfjs";

import { TrainingArrays } from "./dataset";
import { hybridLoss, modeWeights } from "./loss";
import { ControllerNet, NetConfig } from "./model";

export interface EpochReport {
  step: number;
  loss: number;
  absolute: number;
  relative: number;
}

export interface TrainOptions {
  steps: number;
  batch: number;
  lr: number;
  /** cosine-decay the learning rate to lr/50 over the run (default on) */
  cosineSchedule?: boolean;
  logEvery?: number;
  onLog?: (r: EpochReport) => void;
}

export function trainNet(net: ControllerNet, data: TrainingArrays, opts: TrainOptions): EpochReport[] {
  const cfg = net.cfg;
  if (data.N !== cfg.N || data.K !== cfg.K || data.mf !== cfg.mf) {
    throw new Error(
      `dataset geometry (N=${data.N}, K=${data.K}, mf=${data.mf}) does not match ` +
        `network (N=${cfg.N}, K=${cfg.K}, mf=${cfg.mf})`
    );
  }
  const weights = tf.tensor1d(modeWeights(cfg.mf));
  const xAll = tf.tensor3d(data.inputs, [data.count, cfg.K, 2 * cfg.N]);
  const yAll = tf.tensor2d(data.targets, [data.count, 2 * cfg.mf]);
  const optimizer = tf.train.adam(opts.lr);
  const vars = net.variables();
  const reports: EpochReport[] = [];
  const batch = Math.min(opts.batch, data.count);
  const cosine = opts.cosineSchedule ?? true;

  for (let step = 0; step < opts.steps; step++) {
    if (cosine) {
      const frac = step / Math.max(opts.steps - 1, 1);
      (optimizer as unknown as { learningRate: number }).learningRate =
        opts.lr * (0.02 + 0.98 * 0.5 * (1 + Math.cos(Math.PI * frac)));
    }
    const start = (step * batch) % Math.max(data.count - batch + 1, 1);
    const x = tf.slice(xAll, [start, 0, 0], [batch, -1, -1]) as tf.Tensor3D;
    const y = tf.slice(yAll, [start, 0], [batch, -1]) as tf.Tensor2D;
    const lossVal = optimizer.minimize(
      () => hybridLoss(net.forward(x), y, weights as tf.Tensor1D, cfg.alpha, cfg.beta),
      true,
      vars
    ) as tf.Scalar;
    const loss = lossVal.dataSync()[0];
    lossVal.dispose();
    x.dispose();
    y.dispose();
    if (opts.logEvery && (step % opts.logEvery === 0 || step === opts.steps - 1)) {
      const report = evaluate(net, data, start, batch);
      reports.push({ step, ...report });
      opts.onLog?.({ step, ...report });
    } else if (step === opts.steps - 1) {
      reports.push({ step, loss, absolute: NaN, relative: NaN });
    }
  }
  xAll.dispose();
  yAll.dispose();
  weights.dispose();
  return reports;
}

export function evaluate(
  net: ControllerNet,
  data: TrainingArrays,
  start = 0,
  count?: number
): { loss: number; absolute: number; relative: number } {
  const cfg = net.cfg;
  const n = count ?? data.count;
  return tf.tidy(() => {
    const x = tf.tensor3d(
      data.inputs.subarray(start * cfg.K * 2 * cfg.N, (start + n) * cfg.K * 2 * cfg.N),
      [n, cfg.K, 2 * cfg.N]
    );
    const y = tf.tensor2d(data.targets.subarray(start * 2 * cfg.mf, (start + n) * 2 * cfg.mf), [
      n,
      2 * cfg.mf,
    ]);
    const w = tf.tensor1d(modeWeights(cfg.mf));
    const pred = net.forward(x);
    const abs = hybridLoss(pred, y, w, 1, 0).dataSync()[0];
    const rel = hybridLoss(pred, y, w, 0, 1).dataSync()[0];
    return {
      loss: cfg.alpha * abs + cfg.beta * rel,
      absolute: abs,
      relative: rel,
    };
  });
}

export function saveCheckpoint(net: ControllerNet, dir: string, name = "tcn-controller"): void {
  fs.mkdirSync(dir, { recursive: true });
  const vars = net.variables();
  const shapes = vars.map((v) => v.shape);
  let total = 0;
  for (const v of vars) total += v.size;
  const flat = new Float32Array(total);
  let off = 0;
  for (const v of vars) {
    flat.set(v.dataSync() as Float32Array, off);
    off += v.size;
  }
  fs.writeFileSync(
    path.join(dir, "config.json"),
    JSON.stringify({ name, net: net.cfg, shapes }, null, 2) + "\n"
  );
  fs.writeFileSync(path.join(dir, "weights.bin"), Buffer.from(flat.buffer));
}

export function loadCheckpoint(dir: string): { net: ControllerNet; name: string } {
  const meta = JSON.parse(fs.readFileSync(path.join(dir, "config.json"), "utf8"));
  const net = new ControllerNet(meta.net as NetConfig);
  const raw = fs.readFileSync(path.join(dir, "weights.bin"));
  const flat = new Float32Array(raw.buffer, raw.byteOffset, raw.byteLength / 4);
  const vars = net.variables();
  let off = 0;
  vars.forEach((v, i) => {
    const shape = meta.shapes[i] as number[];
    if (JSON.stringify(shape) !== JSON.stringify(v.shape)) {
      throw new Error(`checkpoint shape mismatch at parameter ${i}`);
    }
    v.assign(tf.tensor(flat.subarray(off, off + v.size), v.shape));
    off += v.size;
  });
  if (off !== flat.length) {
    throw new Error(`checkpoint has ${flat.length} weights, network needs ${off}`);
  }
  return { net, name: meta.name ?? "tcn-controller" };
}
