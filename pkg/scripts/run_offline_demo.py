#!/usr/bin/env python3
"""Walk the whole pipeline offline: forge, inspect, solve, eval, sweep.

Uses replayed transcripts for every model call and the bundled fake
worker for execution, so it runs anywhere with no credentials. Pass
--real-worker to execute through the isolated worker package instead
(must be installed).
"""

import argparse
import json
import sys
import tempfile
from pathlib import Path

from bookforge.cli import main as cli
from bookforge.synthetic import write_fixture_tree


def run(argv: list[str]) -> None:
    print(f"\n$ bookforge {' '.join(argv)}")
    code = cli(argv)
    if code != 0:
        raise SystemExit(f"demo step failed with exit code {code}")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", help="keep artifacts here instead of a temp dir")
    parser.add_argument(
        "--real-worker",
        action="store_true",
        help="execute through the installed sandbox-worker package",
    )
    args = parser.parse_args(argv)

    if args.workdir:
        workdir = Path(args.workdir)
        workdir.mkdir(parents=True, exist_ok=True)
        context = None
    else:
        context = tempfile.TemporaryDirectory(prefix="bookforge-demo-")
        workdir = Path(context.name)

    try:
        tree = write_fixture_tree(workdir / "fixtures")
        sandbox = (
            ["--worker-cmd", f"{sys.executable} -m sandbox_worker"]
            if args.real_worker
            else ["--fake-sandbox"]
        )
        toolbox = str(workdir / "toolbox.json")

        run([
            "forge",
            "--book", str(tree["book"]),
            "--mock", str(tree["forge_transcript"]),
            "--out", toolbox,
            "--report", str(workdir / "forge_report.json"),
            "--created-at", "2026-01-01T00:00:00Z",
            *sandbox,
        ])
        run(["inspect", "--toolbox", toolbox])

        question = json.loads(
            tree["benchmark"].read_text().splitlines()[0]
        )["question"]
        run([
            "solve",
            "--toolbox", toolbox,
            "--question", question,
            "--id", "q01",
            "--mock", str(tree["transcript"]),
            *sandbox,
        ])
        run([
            "eval",
            "--benchmark", str(tree["benchmark"]),
            "--toolbox", toolbox,
            "--mock", str(tree["transcript"]),
            "--out", str(workdir / "eval.json"),
            "--cost",
            *sandbox,
        ])
        run([
            "sweep",
            "--benchmark", str(tree["benchmark"]),
            "--toolbox", toolbox,
            "--mock", str(tree["transcript"]),
            "--grid", "1,1;1,2;2,1;2,2",
            *sandbox,
        ])
        if args.workdir:
            print(f"\nartifacts kept in {workdir}")
    finally:
        if context is not None:
            context.cleanup()
    return 0


if __name__ == "__main__":
    sys.exit(main())
