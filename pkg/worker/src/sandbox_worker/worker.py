"""Execution worker speaking newline-delimited JSON over stdin/stdout.

One request per line in, one response per line out; a blank line shuts the
worker down with exit code 0. Every request is executed in a freshly
spawned interpreter (``python -I``), so consecutive requests cannot leak
state into each other, and the child is killed once ``timeout_s`` expires.

Request fields: ``tool_sources`` (list of function source texts),
``solution_source`` (must define a zero-argument ``solution``),
``timeout_s``, optional ``workdir`` (becomes the child's working
directory, where data files are read by relative path), ``request_id``
(echoed back). The response carries ``status`` (ok/error/timeout), the
JSON-serialized return ``value`` (repr text with ``value_is_repr`` set
when not serializable), captured ``stdout``/``stderr`` truncated to 64 KiB
each, ``error_kind``, ``traceback``, and ``duration_ms``.

The isolation is process-level only: no syscall filtering, no network
blocking, no filesystem jail. Writes escaping the working directory are
not technically prevented. Run this only on code you are prepared to
execute on the host machine.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
import time

OUTPUT_CAP_CHARS = 65536

# The child prints exactly one line starting with this marker, after user
# code has finished, so the last marker line is always the result even if
# user code wrote to the real stdout file descriptor.
RESULT_MARKER = "##SANDBOX_WORKER_RESULT##"

# Runs via `python -I -c` with the request JSON on stdin. Serialization is
# self-contained on purpose: the worker owns its side of the wire protocol
# and imports nothing from the orchestrator.
CHILD_PROGRAM = r"""
import contextlib, io, json, sys, traceback

MARKER = "##SANDBOX_WORKER_RESULT##"
CAP = 65536


def _serialize(value):
    if not isinstance(value, (str, int, float, bool, type(None), list, tuple, dict)):
        item = getattr(value, "item", None)
        if callable(item):
            try:
                value = item()
            except (TypeError, ValueError):
                pass
    try:
        json.dumps(value)
        return value, False
    except (TypeError, ValueError, OverflowError):
        return repr(value), True


request = json.load(sys.stdin)
out_buf, err_buf = io.StringIO(), io.StringIO()
status, value, value_is_repr, error_kind, tb_text = "ok", None, False, None, None
try:
    with contextlib.redirect_stdout(out_buf), contextlib.redirect_stderr(err_buf):
        namespace = {}
        for source in request.get("tool_sources", []):
            exec(source, namespace)
        exec(request.get("solution_source", ""), namespace)
        solution = namespace.get("solution")
        if not callable(solution):
            raise NameError("no callable named 'solution' was defined")
        value, value_is_repr = _serialize(solution())
except BaseException as exc:
    status = "error"
    error_kind = type(exc).__name__
    tb_text = traceback.format_exc()[-2000:]
result = {
    "status": status,
    "value": value if status == "ok" else None,
    "value_is_repr": value_is_repr,
    "stdout": out_buf.getvalue()[:CAP],
    "stderr": err_buf.getvalue()[:CAP],
    "error_kind": error_kind,
    "traceback": tb_text,
}
sys.stdout.write("\n" + MARKER + json.dumps(result) + "\n")
sys.stdout.flush()
"""


def _response(request_id: str, duration_ms: float, **fields) -> dict:
    base = {
        "request_id": request_id,
        "status": "error",
        "value": None,
        "value_is_repr": False,
        "stdout": "",
        "stderr": "",
        "error_kind": None,
        "traceback": None,
        "duration_ms": duration_ms,
    }
    base.update(fields)
    return base


def _protocol_error(detail: str) -> dict:
    return _response("", 0.0, error_kind="protocol", traceback=detail)


def _extract_result(child_stdout: str) -> dict | None:
    for line in reversed(child_stdout.splitlines()):
        if line.startswith(RESULT_MARKER):
            try:
                return json.loads(line[len(RESULT_MARKER):])
            except json.JSONDecodeError:
                return None
    return None


def run_request(request: dict) -> dict:
    """Execute one request in a fresh interpreter and shape the response."""
    request_id = str(request.get("request_id", ""))
    try:
        timeout_s = float(request.get("timeout_s", 120.0))
    except (TypeError, ValueError):
        return _protocol_error(f"timeout_s is not a number: {request.get('timeout_s')!r}")
    workdir = request.get("workdir") or None
    env = dict(os.environ, PYTHONIOENCODING="utf-8")
    start = time.monotonic()
    try:
        child = subprocess.Popen(
            [sys.executable, "-I", "-c", CHILD_PROGRAM],
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
            encoding="utf-8",
            cwd=workdir,
            env=env,
        )
    except OSError as exc:
        return _response(
            request_id,
            (time.monotonic() - start) * 1000.0,
            error_kind=type(exc).__name__,
            traceback=f"could not start the child interpreter: {exc}",
        )
    try:
        out, err = child.communicate(json.dumps(request), timeout=timeout_s)
    except subprocess.TimeoutExpired:
        child.kill()
        child.communicate()
        return _response(
            request_id,
            (time.monotonic() - start) * 1000.0,
            status="timeout",
            error_kind="Timeout",
        )
    duration_ms = (time.monotonic() - start) * 1000.0
    result = _extract_result(out)
    if result is None:
        return _response(
            request_id,
            duration_ms,
            error_kind="ChildCrash",
            traceback=(
                f"child exited with code {child.returncode} without reporting "
                "a result"
            ),
            stderr=err[-OUTPUT_CAP_CHARS:],
        )
    return _response(
        request_id,
        duration_ms,
        status=result["status"],
        value=result["value"],
        value_is_repr=result["value_is_repr"],
        stdout=result["stdout"][:OUTPUT_CAP_CHARS],
        stderr=result["stderr"][:OUTPUT_CAP_CHARS],
        error_kind=result["error_kind"],
        traceback=result["traceback"],
    )


def serve(stdin=None, stdout=None) -> int:
    """Request-per-line loop; blank line or EOF ends it with exit code 0."""
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    for line in stdin:
        if line.strip() == "":
            break
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError("request must be a JSON object")
        except ValueError as exc:
            reply = _protocol_error(f"unparseable request line: {exc}")
        else:
            reply = run_request(request)
        print(json.dumps(reply), file=stdout, flush=True)
    return 0


def main() -> int:
    return serve()


if __name__ == "__main__":
    sys.exit(main())
