"""In-process stand-in for the isolated execution worker.

Speaks the same newline-delimited JSON protocol but runs submitted code
with exec() inside this very process: no isolation, no fresh interpreter,
only a best-effort SIGALRM timeout. It exists so the rest of the pipeline
can be tested offline without the real worker installed. Never point it at
code you would not run directly.

Run as ``python -m bookforge.fake_worker``.
"""

from __future__ import annotations

import contextlib
import io
import json
import signal
import sys
import threading
import time
import traceback

from .sandbox import OUTPUT_CAP_BYTES, serialize_value


class _Timeout(Exception):
    pass


def _raise_timeout(signum, frame):
    raise _Timeout()


def _execute(request: dict) -> dict:
    request_id = request.get("request_id", "")
    timeout_s = float(request.get("timeout_s", 120.0))
    out_buf, err_buf = io.StringIO(), io.StringIO()
    start = time.monotonic()
    status, value, value_is_repr, error_kind, tb_text = "ok", None, False, None, None
    # SIGALRM is a main-thread-only facility; when driven from a worker
    # thread the code runs without a timeout guard, which only the
    # no-subprocess test path ever does.
    use_alarm = threading.current_thread() is threading.main_thread()
    if use_alarm:
        old_handler = signal.signal(signal.SIGALRM, _raise_timeout)
        signal.setitimer(signal.ITIMER_REAL, timeout_s)
    try:
        with contextlib.redirect_stdout(out_buf), contextlib.redirect_stderr(err_buf):
            namespace: dict = {}
            for source in request.get("tool_sources", []):
                exec(source, namespace)  # noqa: S102 - that is the whole point
            exec(request.get("solution_source", ""), namespace)
            solution = namespace.get("solution")
            if not callable(solution):
                raise NameError("no callable named 'solution' was defined")
            value, value_is_repr = serialize_value(solution())
    except _Timeout:
        status, error_kind = "timeout", "Timeout"
    except BaseException as exc:  # noqa: BLE001 - report, never crash the loop
        status = "error"
        error_kind = type(exc).__name__
        tb_text = traceback.format_exc()[-2000:]
    finally:
        if use_alarm:
            signal.setitimer(signal.ITIMER_REAL, 0)
            signal.signal(signal.SIGALRM, old_handler)
    return {
        "request_id": request_id,
        "status": status,
        "value": value if status == "ok" else None,
        "value_is_repr": value_is_repr,
        "stdout": out_buf.getvalue()[:OUTPUT_CAP_BYTES],
        "stderr": err_buf.getvalue()[:OUTPUT_CAP_BYTES],
        "error_kind": error_kind,
        "traceback": tb_text,
        "duration_ms": (time.monotonic() - start) * 1000.0,
    }


def main() -> int:
    for line in sys.stdin:
        if line.strip() == "":
            break
        try:
            request = json.loads(line)
            if not isinstance(request, dict):
                raise ValueError("request must be a JSON object")
        except ValueError as exc:
            reply = {
                "request_id": "",
                "status": "error",
                "value": None,
                "value_is_repr": False,
                "stdout": "",
                "stderr": "",
                "error_kind": "protocol",
                "traceback": f"unparseable request line: {exc}",
                "duration_ms": 0.0,
            }
        else:
            reply = _execute(request)
        print(json.dumps(reply), flush=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
