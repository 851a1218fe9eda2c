"""Client side of the code-execution worker protocol.

The worker is a separate process speaking newline-delimited JSON on
stdin/stdout: one request line in, one response line out, an empty line to
shut down cleanly. This module never executes untrusted code itself; it
serializes requests, enforces read deadlines, and restarts workers that die
or break protocol.

Isolation is only as good as the worker provides. The bundled workers give
process isolation with timeouts and output caps, not a security boundary;
do not feed them code from sources you would not run yourself.
"""

from __future__ import annotations

import json
import queue
import subprocess
import threading
from dataclasses import dataclass, field

from .errors import SandboxError

# Extra wall time allowed beyond the request timeout before the client
# declares the worker stuck: the worker's own kill grace plus margin.
PROTOCOL_GRACE_S = 5.0

# Workers cap captured output at this size; the client trusts but never
# relies on it, so oversized lines are still read safely.
OUTPUT_CAP_BYTES = 64 * 1024


@dataclass(frozen=True)
class ExecRequest:
    """One solution to run, with the tool functions it may call."""

    solution_source: str
    tool_sources: tuple[str, ...] = ()
    timeout_s: float = 120.0
    workdir: str | None = None
    request_id: str = ""

    def to_wire(self) -> dict:
        return {
            "request_id": self.request_id,
            "tool_sources": list(self.tool_sources),
            "solution_source": self.solution_source,
            "timeout_s": self.timeout_s,
            "workdir": self.workdir,
        }


@dataclass(frozen=True)
class ExecResponse:
    request_id: str
    status: str  # "ok" | "error" | "timeout"
    value: object
    value_is_repr: bool
    stdout: str
    stderr: str
    error_kind: str | None
    traceback: str | None
    duration_ms: float

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    @classmethod
    def from_wire(cls, data: dict) -> "ExecResponse":
        try:
            return cls(
                request_id=data["request_id"],
                status=data["status"],
                value=data.get("value"),
                value_is_repr=bool(data.get("value_is_repr", False)),
                stdout=data.get("stdout", ""),
                stderr=data.get("stderr", ""),
                error_kind=data.get("error_kind"),
                traceback=data.get("traceback"),
                duration_ms=float(data.get("duration_ms", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SandboxError(f"malformed worker response: {exc}") from exc


def serialize_value(value: object) -> tuple[object, bool]:
    """Make a return value JSON-safe; fall back to repr with a flag.

    Numpy-style scalars are unwrapped via ``.item()`` so numeric results
    survive as JSON numbers. Anything not representable becomes its repr
    with ``value_is_repr`` set, never a dropped result.
    """
    candidate = value
    if not isinstance(value, (str, int, float, bool, type(None), list, tuple, dict)):
        item = getattr(value, "item", None)
        if callable(item):
            try:
                candidate = item()
            except (TypeError, ValueError):
                candidate = value
    try:
        json.dumps(candidate)
        return candidate, False
    except (TypeError, ValueError, OverflowError):
        return repr(value), True


class _Worker:
    """One worker subprocess plus a reader thread feeding a line queue."""

    def __init__(self, argv: list[str]):
        self.argv = argv
        self.proc = subprocess.Popen(
            argv,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.DEVNULL,
            text=True,
            bufsize=1,
        )
        self._lines: queue.Queue[str | None] = queue.Queue()
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()

    def _pump(self) -> None:
        for line in self.proc.stdout:
            self._lines.put(line)
        self._lines.put(None)  # EOF marker

    def alive(self) -> bool:
        return self.proc.poll() is None

    def run(self, request: ExecRequest) -> ExecResponse:
        if not self.alive():
            raise SandboxError("worker process is not running")
        line = json.dumps(request.to_wire())
        try:
            self.proc.stdin.write(line + "\n")
            self.proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SandboxError(f"worker stdin closed: {exc}") from exc
        deadline = request.timeout_s + PROTOCOL_GRACE_S
        try:
            reply = self._lines.get(timeout=deadline)
        except queue.Empty:
            self.kill()
            raise SandboxError(
                f"worker silent for {deadline:.1f}s on request "
                f"{request.request_id!r}; killed"
            )
        if reply is None:
            raise SandboxError("worker closed its stdout mid-request")
        try:
            data = json.loads(reply)
        except json.JSONDecodeError as exc:
            self.kill()
            raise SandboxError(f"worker wrote a non-JSON line: {reply[:200]!r}") from exc
        return ExecResponse.from_wire(data)

    def close(self) -> None:
        if self.alive():
            try:
                self.proc.stdin.write("\n")
                self.proc.stdin.flush()
                self.proc.stdin.close()
            except (BrokenPipeError, OSError):
                pass
            try:
                self.proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self.kill()

    def kill(self) -> None:
        if self.alive():
            self.proc.kill()
            self.proc.wait()


class SandboxPool:
    """A fixed-size pool of workers checked out one request at a time.

    Dead or protocol-broken workers are replaced with fresh ones; the
    failed request surfaces as a SandboxError for the caller's retry
    policy to handle.
    """

    def __init__(self, argv: list[str], size: int = 1):
        if size < 1:
            raise ValueError("pool size must be at least 1")
        self.argv = list(argv)
        self._idle: queue.Queue[_Worker] = queue.Queue()
        self._workers: list[_Worker] = []
        self._lock = threading.Lock()
        for _ in range(size):
            self._spawn()

    def _spawn(self) -> None:
        worker = _Worker(self.argv)
        with self._lock:
            self._workers.append(worker)
        self._idle.put(worker)

    def run(self, request: ExecRequest) -> ExecResponse:
        worker = self._idle.get()
        if not worker.alive():
            self._discard(worker)
            worker = self._take_fresh()
        try:
            response = worker.run(request)
        except SandboxError:
            self._discard(worker)
            self._spawn()
            raise
        self._idle.put(worker)
        return response

    def _take_fresh(self) -> _Worker:
        worker = _Worker(self.argv)
        with self._lock:
            self._workers.append(worker)
        return worker

    def _discard(self, worker: _Worker) -> None:
        worker.kill()
        with self._lock:
            if worker in self._workers:
                self._workers.remove(worker)

    def close(self) -> None:
        with self._lock:
            workers = list(self._workers)
            self._workers.clear()
        for worker in workers:
            worker.close()

    def __enter__(self) -> "SandboxPool":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()
