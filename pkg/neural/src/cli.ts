/**
 * Entry point: train a controller on a workbench dataset, or serve a
 * checkpoint (or the B1 reference) over the control protocol.
 *
 *   node dist/cli.js train --data DIR --out DIR [--steps N] [--batch N]
 *        [--lr X] [--alpha X] [--beta X] [--channels N] [--hidden N]
 *        [--heads N] [--seed N] [--limit N]
 *   node dist/cli.js serve --checkpoint DIR
 *   node dist/cli.js serve --mode b1
 */

import { loadDataset, toTrainingArrays } from "./dataset";
import { ControllerNet, defaultConfig } from "./model";
import { augmentWindow } from "./dataset";
import { Controller, serveOnStdio, spectralReferenceController } from "./protocol";
import { evaluate, loadCheckpoint, saveCheckpoint, trainNet } from "./train";

function parseFlags(argv: string[]): Map<string, string> {
  const flags = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    if (!argv[i].startsWith("--")) throw new Error(`unexpected argument ${argv[i]}`);
    const key = argv[i].slice(2);
    if (i + 1 >= argv.length) throw new Error(`flag --${key} needs a value`);
    flags.set(key, argv[++i]);
  }
  return flags;
}

function num(flags: Map<string, string>, key: string, fallback: number): number {
  const raw = flags.get(key);
  if (raw === undefined) return fallback;
  const v = Number(raw);
  if (!Number.isFinite(v)) throw new Error(`flag --${key} is not a number: ${raw}`);
  return v;
}

async function cmdTrain(flags: Map<string, string>): Promise<number> {
  const dataDir = flags.get("data");
  const outDir = flags.get("out");
  if (!dataDir || !outDir) throw new Error("train needs --data and --out");
  const trajs = loadDataset(dataDir);
  const limit = flags.has("limit") ? num(flags, "limit", 0) : undefined;
  const data = toTrainingArrays(trajs, limit);
  const cfg = defaultConfig(data.N, data.K, data.mf);
  cfg.alpha = num(flags, "alpha", cfg.alpha);
  cfg.beta = num(flags, "beta", cfg.beta);
  cfg.channels = num(flags, "channels", cfg.channels);
  cfg.hidden = num(flags, "hidden", cfg.hidden);
  cfg.heads = num(flags, "heads", cfg.heads);
  cfg.seed = num(flags, "seed", cfg.seed);
  const net = new ControllerNet(cfg);
  const steps = num(flags, "steps", 2000);
  const batch = num(flags, "batch", 64);
  const lr = num(flags, "lr", 1e-3);
  console.error(
    `training on ${data.count} records (N=${data.N}, K=${data.K}, Mf=${data.mf}), ` +
      `${steps} steps, batch ${batch}, lr ${lr}, alpha ${cfg.alpha}, beta ${cfg.beta}`
  );
  trainNet(net, data, {
    steps,
    batch,
    lr,
    logEvery: Math.max(1, Math.floor(steps / 20)),
    onLog: (r) =>
      console.error(
        `step ${r.step}: loss ${r.loss.toExponential(3)} ` +
          `(abs ${r.absolute.toExponential(3)}, rel ${r.relative.toExponential(3)})`
      ),
  });
  const final = evaluate(net, data);
  saveCheckpoint(net, outDir);
  console.error(`final training loss ${final.loss.toExponential(4)}; checkpoint written to ${outDir}`);
  return 0;
}

function checkpointController(dir: string): Controller {
  const { net, name } = loadCheckpoint(dir);
  const cfg = net.cfg;
  return {
    name,
    refuse(hello) {
      if (hello.N !== cfg.N) return `N=${hello.N} does not match checkpoint N=${cfg.N}`;
      if (hello.K !== cfg.K) return `K=${hello.K} does not match checkpoint K=${cfg.K}`;
      if (hello.Mf !== cfg.mf) return `Mf=${hello.Mf} does not match checkpoint Mf=${cfg.mf}`;
      return null;
    },
    control(_t, window) {
      const flat = new Float32Array(cfg.N * cfg.K);
      for (let i = 0; i < cfg.N; i++) flat.set(Float32Array.from(window[i]), i * cfg.K);
      const out = net.predictOne(augmentWindow(flat, cfg.N, cfg.K));
      return {
        a: Array.from(out.subarray(0, cfg.mf)),
        b: Array.from(out.subarray(cfg.mf)),
      };
    },
  };
}

async function cmdServe(flags: Map<string, string>): Promise<number> {
  const mode = flags.get("mode") ?? "checkpoint";
  let controller: Controller;
  if (mode === "b1") {
    controller = spectralReferenceController();
  } else if (mode === "checkpoint") {
    const dir = flags.get("checkpoint");
    if (!dir) throw new Error("serve needs --checkpoint DIR (or --mode b1)");
    controller = checkpointController(dir);
  } else {
    throw new Error(`unknown serve mode ${mode}`);
  }
  await serveOnStdio(controller);
  return 0;
}

async function main(): Promise<number> {
  const [cmd, ...rest] = process.argv.slice(2);
  try {
    const flags = parseFlags(rest);
    if (cmd === "train") return await cmdTrain(flags);
    if (cmd === "serve") return await cmdServe(flags);
    console.error(`usage: cli.js {train|serve} [--flags]; got ${cmd ?? "nothing"}`);
    return 2;
  } catch (err) {
    console.error(`error: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

main().then((code) => process.exit(code));
