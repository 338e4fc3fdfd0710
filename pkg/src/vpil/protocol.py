"""Controller wire protocol: newline-delimited JSON over a child process.

One message per line; numbers are rendered with round-trip-exact decimal
formatting; unknown fields in a message are ignored.  Exchange:

    -> {"type": "hello", "version": 1, "N": int, "K": int,
        "eta": float, "Lx": float, "Mf": int}
    <- {"type": "ready", "name": str}
    -> {"type": "obs", "t": float, "window": [[... N rows of K floats ...]]}
    <- {"type": "control", "a": [Mf floats], "b": [Mf floats]}
    -> {"type": "bye"}

A malformed or mistyped response aborts the run with the offending payload
in the error message; a silent server trips the timeout.
"""

from __future__ import annotations

import json
import os
import select
import subprocess

import numpy as np

from .controllers import ControlAction, ControlQuery, _require_active
from .spectral import FourierCoeffs

PROTOCOL_VERSION = 1


class ProtocolError(RuntimeError):
    pass


class ProtocolTimeout(ProtocolError):
    pass


class ExternalProcessControl:
    """Bridge policy: forwards observations to an external controller process."""

    name = "external"

    def __init__(
        self,
        cmd: list[str],
        N: int,
        K: int,
        eta: float,
        Lx: float,
        mf: int,
        timeout: float = 5.0,
    ):
        self.N = N
        self.K = K
        self.mf = mf
        self.Lx = Lx
        self.timeout = timeout
        self.min_window_columns = K
        self._buf = b""
        self._proc = subprocess.Popen(
            cmd, stdin=subprocess.PIPE, stdout=subprocess.PIPE, bufsize=0
        )
        self._send(
            {
                "type": "hello",
                "version": PROTOCOL_VERSION,
                "N": N,
                "K": K,
                "eta": eta,
                "Lx": Lx,
                "Mf": mf,
            }
        )
        ready = self._recv()
        if ready.get("type") != "ready":
            raise ProtocolError(f"expected ready message, got: {json.dumps(ready)}")
        self.name = str(ready.get("name", "external"))

    def _send(self, msg: dict) -> None:
        if self._proc.stdin is None or self._proc.poll() is not None:
            raise ProtocolError("controller process is not running")
        try:
            self._proc.stdin.write((json.dumps(msg) + "\n").encode())
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError(f"controller process closed its input: {exc}") from exc

    def _read_line(self) -> bytes:
        fd = self._proc.stdout.fileno()
        deadline = self.timeout
        while b"\n" not in self._buf:
            ready, _, _ = select.select([fd], [], [], deadline)
            if not ready:
                raise ProtocolTimeout(
                    f"no response from controller within {self.timeout} s"
                )
            chunk = os.read(fd, 65536)
            if not chunk:
                raise ProtocolError("controller process closed its output")
            self._buf += chunk
        line, self._buf = self._buf.split(b"\n", 1)
        return line

    def _recv(self) -> dict:
        line = self._read_line()
        try:
            msg = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"unparseable protocol line: {line!r}") from exc
        if not isinstance(msg, dict):
            raise ProtocolError(f"protocol message is not an object: {line!r}")
        if msg.get("type") == "error":
            raise ProtocolError(f"controller refused: {msg.get('reason', line.decode())}")
        return msg

    def query(self, q: ControlQuery) -> ControlAction:
        _require_active(q, self.name)
        self._send({"type": "obs", "t": q.t, "window": q.window.matrix.tolist()})
        msg = self._recv()
        if msg.get("type") != "control":
            raise ProtocolError(f"expected control message, got: {json.dumps(msg)}")
        a = msg.get("a")
        b = msg.get("b")
        if (
            not isinstance(a, list)
            or not isinstance(b, list)
            or len(a) != self.mf
            or len(b) != self.mf
        ):
            raise ProtocolError(
                f"control coefficients must be two lists of {self.mf} floats, "
                f"got: {json.dumps(msg)}"
            )
        try:
            coeffs = FourierCoeffs(
                a=np.asarray(a, dtype=float), b=np.asarray(b, dtype=float), mean=0.0, Lx=self.Lx
            )
        except (TypeError, ValueError) as exc:
            raise ProtocolError(f"bad coefficient payload: {json.dumps(msg)}") from exc
        if not np.all(np.isfinite(coeffs.a)) or not np.all(np.isfinite(coeffs.b)):
            raise ProtocolError(f"non-finite coefficients: {json.dumps(msg)}")
        return ControlAction(policy=self.name, coeffs=coeffs)

    def close(self) -> None:
        if self._proc.poll() is None:
            try:
                self._send({"type": "bye"})
            except ProtocolError:
                pass
            try:
                self._proc.wait(timeout=2.0)
            except subprocess.TimeoutExpired:
                self._proc.kill()
                self._proc.wait()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
