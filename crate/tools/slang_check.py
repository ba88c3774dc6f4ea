#!/usr/bin/env python3
"""Compile and elaborate Verilog/SystemVerilog files with slang.

Usage: slang_check.py --top TOP FILE...
Exits 0 when slang reports no errors.
"""
import argparse
import sys

from pyslang.ast import Compilation, CompilationOptions
from pyslang.syntax import SyntaxTree


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--top", required=True)
    ap.add_argument("--default-timescale", action="store_true",
                    help="accept modules without `timescale, as the simulator is given a default")
    ap.add_argument("files", nargs="+")
    args = ap.parse_args()
    comp = Compilation()
    for f in args.files:
        comp.addSyntaxTree(SyntaxTree.fromFile(f))
    errors = [d for d in comp.getAllDiagnostics() if d.isError()]
    if args.default_timescale:
        errors = [d for d in errors if "MissingTimeScale" not in str(d.code)]
    for d in errors:
        print(f"error: {d.code} at {d.location}")
    tops = [i.name for i in comp.getRoot().topInstances]
    if args.top not in tops:
        print(f"error: top `{args.top}` not elaborated (tops: {tops})")
        sys.exit(1)
    sys.exit(1 if errors else 0)


if __name__ == "__main__":
    main()
