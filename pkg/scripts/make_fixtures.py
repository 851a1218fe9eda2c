#!/usr/bin/env python3
"""Materialize the offline fixture tree: book, transcripts, toolbox, benchmark.

Everything the test suite and the offline demo need lands in one
directory. The toolbox is produced by actually running the forge against
the bundled in-process worker, so the files always match the code.
"""

import argparse
import sys

from bookforge.synthetic import write_fixture_tree


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="fixtures", help="output directory")
    args = parser.parse_args(argv)
    paths = write_fixture_tree(args.out)
    for name, path in paths.items():
        print(f"{name:>16}: {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
