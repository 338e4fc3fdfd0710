import * as tf from "@tensorflow/tfjs";
import { describe, expect, it } from "vitest";

import { hybridLoss, hybridLossReference, modeWeights, RELATIVE_FLOOR } from "../src/loss";

describe("mode weights", () => {
  it("decay as 1/mode, same for cosine and sine parts, sum to 1", () => {
    const w = modeWeights(8);
    expect(w.length).toBe(16);
    let sum = 0;
    for (const v of w) sum += v;
    expect(sum).toBeCloseTo(1.0, 6); // float32 storage
    for (let m = 0; m < 8; m++) {
      expect(w[m]).toBeCloseTo(w[8 + m], 10);
      if (m > 0) expect(w[m] * (m + 1)).toBeCloseTo(w[0], 7);
    }
  });
});

describe("hybrid loss", () => {
  it("is zero when prediction equals target", () => {
    const t = tf.tensor2d([[0.3, -0.2, 0.01, 0.0]]);
    const w = tf.tensor1d(modeWeights(2));
    const loss = hybridLoss(t, t.clone() as tf.Tensor2D, w as tf.Tensor1D, 1, 0.1);
    expect(loss.dataSync()[0]).toBe(0);
  });

  it("reduces to weighted squared error for a single coefficient", () => {
    const pred = tf.tensor2d([[1.7]]);
    const target = tf.tensor2d([[1.0]]);
    const w = tf.tensor1d([1.0]);
    const loss = hybridLoss(pred, target, w as tf.Tensor1D, 1, 0);
    expect(loss.dataSync()[0]).toBeCloseTo(0.49, 6);
  });

  it("matches the double-loop reference on random batches", () => {
    const rows = 7;
    const mf = 5;
    const cols = 2 * mf;
    const rng = () => Math.random() * 2 - 1;
    for (let trial = 0; trial < 3; trial++) {
      const pred = Float32Array.from({ length: rows * cols }, rng);
      const target = Float32Array.from({ length: rows * cols }, rng);
      const w = modeWeights(mf);
      const ref = hybridLossReference(pred, target, rows, cols, w, 1.0, 0.25);
      const got = hybridLoss(
        tf.tensor2d(pred, [rows, cols]),
        tf.tensor2d(target, [rows, cols]),
        tf.tensor1d(w) as tf.Tensor1D,
        1.0,
        0.25
      ).dataSync()[0];
      expect(Math.abs(got - ref.total)).toBeLessThan(1e-6 * Math.max(1, Math.abs(ref.total)));
    }
  });

  it("floors the relative denominator for vanishing targets", () => {
    const pred = tf.tensor2d([[1e-9]]);
    const target = tf.tensor2d([[0.0]]);
    const w = tf.tensor1d([1.0]);
    const rel = hybridLoss(pred, target, w as tf.Tensor1D, 0, 1).dataSync()[0];
    expect(rel).toBeCloseTo(1e-18 / RELATIVE_FLOOR, 6);
    expect(Number.isFinite(rel)).toBe(true);
  });

  it("rejects shape mismatches", () => {
    const w = tf.tensor1d([1.0, 1.0]);
    expect(() =>
      hybridLoss(tf.tensor2d([[1, 2]]), tf.tensor2d([[1, 2], [3, 4]]), w as tf.Tensor1D, 1, 0)
    ).toThrow(/mismatch/);
  });
});
