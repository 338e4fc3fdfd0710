/**
 * Scale-aware hybrid training objective.
 *
 * loss = alpha * weighted MSE + beta * weighted relative squared error,
 * with per-coefficient weights proportional to 1/mode (the same weight for
 * a mode's cosine and sine parts, normalized to sum 1) and the relative
 * denominator floored at 1e-12 so late-time, strongly damped targets do
 * not blow the ratio up.  The relative term keeps small-amplitude targets
 * from being drowned out by early high-amplitude transients.
 */

import * as tf from "@tensorflow/tfjs";

export const RELATIVE_FLOOR = 1e-12;

/** Per-output weights for [a_1..a_mf, b_1..b_mf]: w ~ 1/mode, sum 1. */
export function modeWeights(mf: number): Float32Array {
  const w = new Float32Array(2 * mf);
  let total = 0;
  for (let m = 0; m < mf; m++) {
    w[m] = 1 / (m + 1);
    w[mf + m] = 1 / (m + 1);
    total += 2 / (m + 1);
  }
  for (let i = 0; i < 2 * mf; i++) w[i] /= total;
  return w;
}

export interface LossParts {
  absolute: number;
  relative: number;
  total: number;
}

export function hybridLoss(
  pred: tf.Tensor2D,
  target: tf.Tensor2D,
  weights: tf.Tensor1D,
  alpha: number,
  beta: number
): tf.Scalar {
  if (pred.shape[0] !== target.shape[0] || pred.shape[1] !== target.shape[1]) {
    throw new Error(`shape mismatch: pred ${pred.shape} vs target ${target.shape}`);
  }
  const sq = tf.square(tf.sub(pred, target));
  const absPart = tf.mean(tf.sum(tf.mul(sq, weights), 1));
  const denom = tf.maximum(tf.square(target), RELATIVE_FLOOR);
  const relPart = tf.mean(tf.sum(tf.mul(tf.div(sq, denom), weights), 1));
  return tf.add(tf.mul(absPart, alpha), tf.mul(relPart, beta)) as tf.Scalar;
}

/** Plain-loop reference used by the tests as an independent oracle. */
export function hybridLossReference(
  pred: ArrayLike<number>,
  target: ArrayLike<number>,
  rows: number,
  cols: number,
  weights: ArrayLike<number>,
  alpha: number,
  beta: number
): LossParts {
  let absAcc = 0;
  let relAcc = 0;
  for (let r = 0; r < rows; r++) {
    for (let c = 0; c < cols; c++) {
      const d = pred[r * cols + c] - target[r * cols + c];
      const sq = d * d;
      absAcc += weights[c] * sq;
      relAcc += (weights[c] * sq) / Math.max(target[r * cols + c] ** 2, RELATIVE_FLOOR);
    }
  }
  const absolute = absAcc / rows;
  const relative = relAcc / rows;
  return { absolute, relative, total: alpha * absolute + beta * relative };
}
