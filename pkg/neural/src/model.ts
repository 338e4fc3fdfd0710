/**
 * Controller network: causal temporal convolutions for local patterns,
 * one multi-head attention pass for global dependencies over the window,
 * mean pooling, and an MLP head emitting the 2*Mf control coefficients.
 *
 * Built directly on tensor ops with explicit variables (no layers API):
 * causality is enforced by left-padding every convolution by
 * (kernel - 1) * dilation, so the feature at step t never sees steps > t.
 */

import * as tf from "@tensorflow/tfjs";

export interface NetConfig {
  N: number;
  K: number;
  mf: number;
  channels: number;
  kernel: number;
  dilations: number[];
  heads: number;
  hidden: number;
  alpha: number;
  beta: number;
  seed: number;
}

export function defaultConfig(N: number, K: number, mf: number): NetConfig {
  return {
    N,
    K,
    mf,
    channels: 64,
    kernel: 3,
    dilations: [1, 2, 4, 8],
    heads: 4,
    hidden: 128,
    alpha: 1.0,
    beta: 0.1,
    seed: 0,
  };
}

interface ConvBlock {
  w1: tf.Variable;
  b1: tf.Variable;
  w2: tf.Variable;
  b2: tf.Variable;
  proj: tf.Variable | null; // 1x1 residual projection when widths differ
  dilation: number;
}

export class ControllerNet {
  readonly cfg: NetConfig;
  private blocks: ConvBlock[] = [];
  private wq!: tf.Variable;
  private wk!: tf.Variable;
  private wv!: tf.Variable;
  private wo!: tf.Variable;
  private mlp1w!: tf.Variable;
  private mlp1b!: tf.Variable;
  private mlp2w!: tf.Variable;
  private mlp2b!: tf.Variable;
  private seedCounter: number;

  constructor(cfg: NetConfig) {
    this.cfg = cfg;
    this.seedCounter = cfg.seed;
    const c = cfg.channels;
    let inCh = 2 * cfg.N;
    for (const d of cfg.dilations) {
      this.blocks.push({
        w1: this.glorot([cfg.kernel, inCh, c]),
        b1: tf.variable(tf.zeros([c])),
        w2: this.glorot([cfg.kernel, c, c]),
        b2: tf.variable(tf.zeros([c])),
        proj: inCh === c ? null : this.glorot([1, inCh, c]),
        dilation: d,
      });
      inCh = c;
    }
    this.wq = this.glorot([c, c]);
    this.wk = this.glorot([c, c]);
    this.wv = this.glorot([c, c]);
    this.wo = this.glorot([c, c]);
    this.mlp1w = this.glorot([c, cfg.hidden]);
    this.mlp1b = tf.variable(tf.zeros([cfg.hidden]));
    this.mlp2w = this.glorot([cfg.hidden, 2 * cfg.mf]);
    this.mlp2b = tf.variable(tf.zeros([2 * cfg.mf]));
  }

  private glorot(shape: number[]): tf.Variable {
    const fanIn = shape.length === 3 ? shape[0] * shape[1] : shape[0];
    const fanOut = shape.length === 3 ? shape[0] * shape[2] : shape[1];
    const std = Math.sqrt(2.0 / (fanIn + fanOut));
    return tf.variable(tf.randomNormal(shape, 0, std, "float32", this.seedCounter++));
  }

  variables(): tf.Variable[] {
    const vars: tf.Variable[] = [];
    for (const b of this.blocks) {
      vars.push(b.w1, b.b1, b.w2, b.b2);
      if (b.proj) vars.push(b.proj);
    }
    vars.push(this.wq, this.wk, this.wv, this.wo, this.mlp1w, this.mlp1b, this.mlp2w, this.mlp2b);
    return vars;
  }

  /** Dilated causal convolution written as shifted slices + projections:
   * tap j sees the input delayed by (kernel - 1 - j) * dilation steps.
   * (tf.conv1d lacks gradients for dilation > 1 in this release.) */
  private causalConv(x: tf.Tensor3D, w: tf.Variable, b: tf.Variable, dilation: number): tf.Tensor3D {
    const { kernel } = this.cfg;
    const [batch, steps] = [x.shape[0], x.shape[1]];
    const left = (kernel - 1) * dilation;
    const padded = tf.pad(x, [
      [0, 0],
      [left, 0],
      [0, 0],
    ]) as tf.Tensor3D;
    let acc: tf.Tensor3D | null = null;
    for (let j = 0; j < kernel; j++) {
      const tap = tf.slice(padded, [0, j * dilation, 0], [batch, steps, -1]) as tf.Tensor3D;
      const wj = tf.gather(w as unknown as tf.Tensor3D, j) as unknown as tf.Tensor2D;
      const term = this.projectWith(tap, wj);
      acc = acc === null ? term : (tf.add(acc, term) as tf.Tensor3D);
    }
    return tf.add(acc!, b) as tf.Tensor3D;
  }

  private projectWith(x: tf.Tensor3D, w: tf.Tensor2D): tf.Tensor3D {
    const [batch, steps, ch] = x.shape;
    const flat = tf.matMul(tf.reshape(x, [batch * steps, ch]), w);
    return tf.reshape(flat, [batch, steps, w.shape[1]]) as tf.Tensor3D;
  }

  /** Causal feature stack: [B, K, 2N] -> [B, K, channels]. */
  tcnFeatures(x: tf.Tensor3D): tf.Tensor3D {
    let h = x;
    for (const blk of this.blocks) {
      const z1 = tf.relu(this.causalConv(h, blk.w1, blk.b1, blk.dilation));
      const z2 = tf.relu(this.causalConv(z1, blk.w2, blk.b2, blk.dilation));
      const res = blk.proj
        ? this.projectWith(h, tf.gather(blk.proj as unknown as tf.Tensor3D, 0) as unknown as tf.Tensor2D)
        : h;
      h = tf.add(z2, res) as tf.Tensor3D;
    }
    return h;
  }

  /** [B, K, C] x [C, C'] with the batch flattened: the broadcast matMul
   * gradient for a rank-2 variable is unreliable in this tfjs release. */
  private project(x: tf.Tensor3D, w: tf.Variable): tf.Tensor3D {
    return this.projectWith(x, w as unknown as tf.Tensor2D);
  }

  private attention(h: tf.Tensor3D): tf.Tensor3D {
    const { heads, channels } = this.cfg;
    const dk = channels / heads;
    const [batch, steps] = [h.shape[0], h.shape[1]];
    const split = (t: tf.Tensor3D) =>
      tf.transpose(tf.reshape(t, [batch, steps, heads, dk]), [0, 2, 1, 3]);
    const q = split(this.project(h, this.wq));
    const k = split(this.project(h, this.wk));
    const v = split(this.project(h, this.wv));
    const scores = tf.div(tf.matMul(q, k, false, true), Math.sqrt(dk));
    const ctx = tf.matMul(tf.softmax(scores, -1), v); // [B, heads, K, dk]
    const merged = tf.reshape(tf.transpose(ctx, [0, 2, 1, 3]), [batch, steps, channels]) as tf.Tensor3D;
    return this.project(merged, this.wo);
  }

  /** Full forward pass: [B, K, 2N] -> [B, 2 mf]. */
  forward(x: tf.Tensor3D): tf.Tensor2D {
    const feats = this.tcnFeatures(x);
    const attended = tf.add(feats, this.attention(feats)) as tf.Tensor3D;
    const pooled = tf.mean(attended, 1) as tf.Tensor2D;
    const hidden = tf.relu(tf.add(tf.matMul(pooled, this.mlp1w as unknown as tf.Tensor2D), this.mlp1b));
    return tf.add(
      tf.matMul(hidden as tf.Tensor2D, this.mlp2w as unknown as tf.Tensor2D),
      this.mlp2b
    ) as tf.Tensor2D;
  }

  predictOne(augmented: Float32Array): Float32Array {
    return tf.tidy(() => {
      const x = tf.tensor3d(augmented, [1, this.cfg.K, 2 * this.cfg.N]);
      return this.forward(x).dataSync() as Float32Array;
    });
  }
}
