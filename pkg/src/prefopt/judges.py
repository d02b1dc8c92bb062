"""Judges: simulated Bernoulli oracles and the external-process wire protocol.

External judges speak newline-delimited JSON over the child's standard
streams: request {"type": "compare", "i": int, "j": int, "seq": int},
response {"seq": int, "winner": 0 | 1} where winner 1 means the
lower-index policy won.  Sequence numbers must match strictly.
"""

from __future__ import annotations

import json
import selectors
import subprocess

import numpy as np

__all__ = ["JudgeError", "SimulatedJudge", "ExternalJudge", "external_judge_session"]


class JudgeError(RuntimeError):
    """A judge failed to answer a query (timeout, protocol violation, crash)."""


class SimulatedJudge:
    """Returns 1 with probability exactly mu(i, j) for the canonical pair."""

    def __init__(self, mu: np.ndarray, rng: np.random.Generator):
        self.mu = np.asarray(mu, dtype=float)
        self.rng = rng

    def query(self, i: int, j: int) -> int:
        if not i < j:
            raise ValueError("judge queries must use the canonical orientation")
        return 1 if self.rng.random() < self.mu[i, j] else 0


class ExternalJudge:
    """Judge backed by a spawned child process."""

    def __init__(self, command: list[str], timeout: float = 60.0):
        self.timeout = timeout
        self.seq = 0
        try:
            self.proc = subprocess.Popen(
                command,
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                bufsize=1,
            )
        except OSError as exc:
            raise JudgeError(f"could not spawn judge command {command!r}: {exc}") from exc
        self._sel = selectors.DefaultSelector()
        self._sel.register(self.proc.stdout, selectors.EVENT_READ)

    def query(self, i: int, j: int) -> int:
        if not i < j:
            raise ValueError("judge queries must use the canonical orientation")
        self.seq += 1
        request = {"type": "compare", "i": int(i), "j": int(j), "seq": self.seq}
        try:
            self.proc.stdin.write(json.dumps(request) + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise JudgeError(f"judge process closed its input: {exc}") from exc
        if not self._sel.select(self.timeout):
            raise JudgeError(f"judge timed out after {self.timeout}s on seq {self.seq}")
        line = self.proc.stdout.readline()
        if not line:
            raise JudgeError("judge process exited before answering")
        try:
            response = json.loads(line)
        except json.JSONDecodeError as exc:
            raise JudgeError(f"malformed judge response: {line!r}") from exc
        if response.get("seq") != self.seq:
            raise JudgeError(
                f"judge sequence mismatch: expected {self.seq}, got {response.get('seq')!r}"
            )
        winner = response.get("winner")
        if winner not in (0, 1):
            raise JudgeError(f"judge winner must be 0 or 1, got {winner!r}")
        return int(winner)

    def close(self) -> None:
        try:
            self._sel.close()
            if self.proc.stdin:
                self.proc.stdin.close()
            self.proc.terminate()
            self.proc.wait(timeout=5)
        except Exception:
            pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_judge_session(command: list[str], timeout: float = 60.0) -> ExternalJudge:
    return ExternalJudge(command, timeout=timeout)
