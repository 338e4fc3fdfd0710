/**
 * Line-delimited JSON control server over stdin/stdout.
 *
 *   <- {"type":"hello","version":1,"N":..,"K":..,"eta":..,"Lx":..,"Mf":..}
 *   -> {"type":"ready","name":...}       (or {"type":"error","reason":...})
 *   <- {"type":"obs","t":..,"window":[[N rows of K floats]]}
 *   -> {"type":"control","a":[Mf],"b":[Mf]}
 *   <- {"type":"bye"}
 *
 * Malformed input never crashes the server: it answers with an error
 * object (which aborts the client's run cleanly) and keeps reading.
 * Unknown fields are ignored.  The handshake is refused, naming the
 * offending field, when the geometry does not match the controller.
 */

import { createInterface } from "readline";

export interface Hello {
  version: number;
  N: number;
  K: number;
  eta: number;
  Lx: number;
  Mf: number;
}

export interface Controller {
  name: string;
  /** window is row-major N x K; returns [a, b] each of length Mf. */
  control(t: number, window: number[][], hello: Hello): { a: number[]; b: number[] };
  /** Geometry check; return a reason string naming the field, or null. */
  refuse(hello: Hello): string | null;
}

type Writer = (line: string) => void;

export class ProtocolServer {
  private hello: Hello | null = null;

  constructor(private controller: Controller, private write: Writer) {}

  /** Feed one input line; returns false once the session is over. */
  handleLine(line: string): boolean {
    let msg: any;
    try {
      msg = JSON.parse(line);
    } catch {
      this.write(JSON.stringify({ type: "error", reason: "unparseable line" }));
      return true;
    }
    if (typeof msg !== "object" || msg === null || typeof msg.type !== "string") {
      this.write(JSON.stringify({ type: "error", reason: "message is not a typed object" }));
      return true;
    }
    switch (msg.type) {
      case "hello":
        return this.onHello(msg);
      case "obs":
        return this.onObs(msg);
      case "bye":
        return false;
      default:
        this.write(JSON.stringify({ type: "error", reason: `unknown message type ${msg.type}` }));
        return true;
    }
  }

  private onHello(msg: any): boolean {
    const fields = ["version", "N", "K", "eta", "Lx", "Mf"];
    for (const f of fields) {
      if (typeof msg[f] !== "number" || !Number.isFinite(msg[f])) {
        this.write(JSON.stringify({ type: "error", reason: `hello field ${f} missing or not a number` }));
        return true;
      }
    }
    const hello = msg as Hello;
    if (hello.version !== 1) {
      this.write(JSON.stringify({ type: "error", reason: `version ${hello.version} unsupported` }));
      return true;
    }
    const reason = this.controller.refuse(hello);
    if (reason !== null) {
      this.write(JSON.stringify({ type: "error", reason }));
      return true;
    }
    this.hello = hello;
    this.write(JSON.stringify({ type: "ready", name: this.controller.name }));
    return true;
  }

  private onObs(msg: any): boolean {
    if (this.hello === null) {
      this.write(JSON.stringify({ type: "error", reason: "obs before handshake" }));
      return true;
    }
    const { N, K, Mf } = this.hello;
    const w = msg.window;
    const badRow = (r: any) => !Array.isArray(r) || r.length !== K || r.some((v: any) => typeof v !== "number" || !Number.isFinite(v));
    if (typeof msg.t !== "number" || !Array.isArray(w) || w.length !== N || w.some(badRow)) {
      this.write(JSON.stringify({ type: "error", reason: `obs window must be ${N} rows of ${K} finite numbers` }));
      return true;
    }
    let out: { a: number[]; b: number[] };
    try {
      out = this.controller.control(msg.t, w, this.hello);
    } catch (err) {
      this.write(JSON.stringify({ type: "error", reason: `controller failed: ${err}` }));
      return true;
    }
    if (out.a.length !== Mf || out.b.length !== Mf) {
      this.write(JSON.stringify({ type: "error", reason: "controller produced wrong coefficient count" }));
      return true;
    }
    this.write(JSON.stringify({ type: "control", a: out.a, b: out.b }));
    return true;
  }
}

export function serveOnStdio(controller: Controller): Promise<void> {
  const server = new ProtocolServer(controller, (line) => process.stdout.write(line + "\n"));
  const rl = createInterface({ input: process.stdin, terminal: false });
  return new Promise((resolve) => {
    rl.on("line", (line) => {
      if (!server.handleLine(line)) {
        rl.close();
      }
    });
    rl.on("close", () => resolve());
  });
}

/**
 * Reference instantaneous spectral controller (the B1 baseline) behind the
 * same interface: discrete Fourier transform of the newest column, Poisson
 * inversion on resolvable modes, negation, zero-padded to Mf.  Used for
 * cross-implementation protocol checks.
 */
export function spectralReferenceController(): Controller {
  return {
    name: "b1-reference",
    refuse: () => null,
    control(_t, window, hello) {
      const { N, Lx, Mf } = hello;
      const newest = window.map((row) => row[row.length - 1]);
      const degree = Math.floor((N - 1) / 2);
      const a = new Array(Mf).fill(0);
      const b = new Array(Mf).fill(0);
      for (let m = 1; m <= Math.min(degree, Mf); m++) {
        let re = 0;
        let im = 0;
        for (let i = 0; i < N; i++) {
          const phase = (2 * Math.PI * m * i) / N;
          re += newest[i] * Math.cos(phase);
          im -= newest[i] * Math.sin(phase);
        }
        const aRho = (2 * re) / N;
        const bRho = (-2 * im) / N;
        const kappa = (2 * Math.PI * m) / Lx;
        // E = (b_rho/kappa, -a_rho/kappa); control is -E
        a[m - 1] = -bRho / kappa;
        b[m - 1] = aRho / kappa;
      }
      return { a, b };
    },
  };
}
