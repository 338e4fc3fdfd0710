/**
 * Training acceptance: the memorization oracle (32 records overfit to
 * hybrid loss < 1e-3 in 500 steps within the CPU budget) and the
 * scale-aware ablation (beta > 0 strictly lowers relative error on a
 * held-out small-amplitude slice).
 */

import * as tf from "@tensorflow/tfjs";
import { describe, expect, it } from "vitest";

import { hybridLossReference, modeWeights } from "../src/loss";
import { ControllerNet, defaultConfig } from "../src/model";
import { evaluate, trainNet } from "../src/train";
import { TrainingArrays } from "../src/dataset";

const N = 4;
const K = 25;
const MF = 8;
const D = K * 2 * N;
const O = 2 * MF;

function makeRng(seed: number) {
  let s = seed;
  return () => ((s = (s * 1103515245 + 12345) & 0x7fffffff) / 0x7fffffff) * 2 - 1;
}

function randomRecords(count: number, seed: number): TrainingArrays {
  const rnd = makeRng(seed);
  const inputs = new Float32Array(count * D);
  const targets = new Float32Array(count * O);
  for (let i = 0; i < inputs.length; i++) inputs[i] = rnd();
  for (let i = 0; i < targets.length; i++) {
    const sign = rnd() > 0 ? 1 : -1;
    targets[i] = sign * (0.1 + Math.abs(rnd()) * 0.3); // bounded away from 0
  }
  return { N, K, mf: MF, count, inputs, targets };
}

/** Planted linear map applied to windows drawn at a given scale: targets
 * scale with the windows, giving a learnable two-scale population. */
function plantedRows(count: number, scale: number, map: Float32Array, rng: () => number) {
  const inputs = new Float32Array(count * D);
  const targets = new Float32Array(count * O);
  for (let r = 0; r < count; r++) {
    for (let i = 0; i < D; i++) inputs[r * D + i] = scale * rng();
    for (let o = 0; o < O; o++) {
      let acc = 0;
      for (let i = 0; i < D; i++) acc += map[o * D + i] * inputs[r * D + i];
      targets[r * O + o] = acc;
    }
  }
  return { inputs, targets };
}

function overfitConfig(seed: number, beta: number) {
  return {
    ...defaultConfig(N, K, MF),
    channels: 16,
    dilations: [1, 2],
    hidden: 32,
    heads: 2,
    seed,
    beta,
  };
}

describe("training", () => {
  it("overfits 32 records to hybrid loss < 1e-3 within 500 steps and 5 min", () => {
    const net = new ControllerNet(overfitConfig(1, 0.1));
    const data = randomRecords(32, 42);
    const start = Date.now();
    const reports = trainNet(net, data, {
      steps: 500,
      batch: 32,
      lr: 2.5e-2,
      logEvery: 25,
    });
    const elapsed = (Date.now() - start) / 1000;
    const final = evaluate(net, data);
    console.log(`[A10] overfit: loss ${final.loss.toExponential(3)} in ${elapsed.toFixed(0)}s`);
    expect(final.loss).toBeLessThan(1e-3);
    expect(elapsed).toBeLessThan(300);

    // loss curve sanity: 10-report moving average is non-increasing
    const losses = reports.map((r) => r.loss);
    const ma: number[] = [];
    for (let i = 0; i + 10 <= losses.length; i++) {
      ma.push(losses.slice(i, i + 10).reduce((a, b) => a + b, 0) / 10);
    }
    for (let i = 1; i < ma.length; i++) {
      expect(ma[i]).toBeLessThanOrEqual(ma[i - 1] * 1.001);
    }
  }, 400_000);

  it("beta > 0 strictly lowers relative error on a held-out small-amplitude slice", () => {
    const map = Float32Array.from({ length: O * D }, () => 0.15 * makeRng(7)());
    const rngTrain = makeRng(11);
    const rngVal = makeRng(23);
    const big = plantedRows(48, 1.0, map, rngTrain);
    const small = plantedRows(16, 1e-3, map, rngTrain);
    const valSmall = plantedRows(32, 1e-3, map, rngVal);
    const train: TrainingArrays = {
      N,
      K,
      mf: MF,
      count: 64,
      inputs: new Float32Array(64 * D),
      targets: new Float32Array(64 * O),
    };
    train.inputs.set(big.inputs);
    train.inputs.set(small.inputs, 48 * D);
    train.targets.set(big.targets);
    train.targets.set(small.targets, 48 * O);

    const weights = modeWeights(MF);
    const relErrors: Record<string, number> = {};
    for (const beta of [0.0, 0.1]) {
      const net = new ControllerNet({
        ...overfitConfig(3, beta),
        channels: 12,
        hidden: 24,
      });
      trainNet(net, train, { steps: 200, batch: 64, lr: 1e-2 });
      const pred = tf.tidy(() =>
        net.forward(tf.tensor3d(valSmall.inputs, [32, K, 2 * N])).dataSync()
      ) as Float32Array;
      relErrors[String(beta)] = hybridLossReference(
        pred,
        valSmall.targets,
        32,
        O,
        weights,
        0,
        1
      ).relative;
    }
    console.log(
      `[A10] relative error on small slice: beta=0 -> ${relErrors["0"].toExponential(2)}, ` +
        `beta=0.1 -> ${relErrors["0.1"].toExponential(2)}`
    );
    expect(relErrors["0.1"]).toBeLessThan(relErrors["0"]);
  }, 400_000);

  it("rejects geometry mismatches before training", () => {
    const net = new ControllerNet(overfitConfig(1, 0.1));
    const bad = randomRecords(4, 1);
    expect(() => trainNet(net, { ...bad, K: K + 1 }, { steps: 1, batch: 4, lr: 1e-3 })).toThrow(
      /geometry/
    );
  });
});
