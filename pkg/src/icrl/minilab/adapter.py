"""Newline-delimited JSON stdio protocol so external environments can plug in.

Request:  ``{"action": "<text>"}``
Response: ``{"observation": "...", "reward": <int>, "done": <bool>, "total": <int>}``
plus an additive ``"terminal"`` field on the final response carrying the
success/failure line used in trajectory rendering.
"""

from __future__ import annotations

import json
import subprocess
from typing import IO, Sequence

from icrl.minilab.world import MiniLabEnv


def serve_stdio(env: MiniLabEnv, in_stream: IO[str], out_stream: IO[str]) -> None:
    """Serve one episode of ``env`` over the wire protocol; returns at EOF or done."""
    for line in in_stream:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
            action = request["action"]
        except (json.JSONDecodeError, KeyError, TypeError):
            out_stream.write(json.dumps({"error": "expected {\"action\": ...}"}) + "\n")
            out_stream.flush()
            continue
        observation, reward, done, total = env.step(action)
        payload: dict = {"observation": observation, "reward": reward,
                         "done": done, "total": total}
        if done:
            payload["terminal"] = env.terminal_line()
        out_stream.write(json.dumps(payload, sort_keys=True) + "\n")
        out_stream.flush()
        if done:
            return


class ExternalEnvClient:
    """Drives a subprocess speaking the wire protocol; one process per episode."""

    def __init__(self, command: Sequence[str]) -> None:
        self._proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
        )
        self.done = False
        self.total = 0
        self._terminal = ""

    def step(self, action_text: str) -> tuple[str, int, bool, int]:
        if self.done:
            raise RuntimeError("episode already finished")
        assert self._proc.stdin is not None and self._proc.stdout is not None
        self._proc.stdin.write(json.dumps({"action": action_text}) + "\n")
        self._proc.stdin.flush()
        line = self._proc.stdout.readline()
        if not line:
            raise RuntimeError("environment process closed its output")
        payload = json.loads(line)
        if "error" in payload:
            raise RuntimeError(f"environment error: {payload['error']}")
        self.done = bool(payload["done"])
        self.total = int(payload["total"])
        if self.done:
            self._terminal = payload.get("terminal", "")
        return payload["observation"], int(payload["reward"]), self.done, self.total

    def terminal_line(self) -> str:
        return self._terminal

    def close(self) -> None:
        if self._proc.stdin is not None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()

    def __enter__(self) -> "ExternalEnvClient":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
