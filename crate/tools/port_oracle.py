#!/usr/bin/env python3
"""Dump top-level port listings of the bundled designs using slang.

Output lines: <design> <port> <direction> <width>
Run from the repository root; the result is frozen into
crates/core/tests/fixtures/port_oracle.txt.
"""
import pathlib
import sys

from pyslang.ast import Compilation
from pyslang.syntax import SyntaxTree

TOPS = {"lfsr": "lfsr_top", "uart_lite": "uart_top"}


def main():
    root = pathlib.Path(sys.argv[1] if len(sys.argv) > 1 else "designs")
    for design in sorted(p for p in root.iterdir() if p.is_dir()):
        top = TOPS.get(design.name, design.name)
        comp = Compilation()
        for f in sorted(design.glob("*.v")):
            comp.addSyntaxTree(SyntaxTree.fromFile(str(f)))
        diags = [d for d in comp.getAllDiagnostics() if d.isError()]
        if diags:
            sys.exit(f"{design.name}: slang reported {len(diags)} errors")
        inst = next(i for i in comp.getRoot().topInstances if i.name == top)
        for port in inst.body.portList:
            direction = str(port.direction).split(".")[-1].lower()
            direction = {"in": "input", "out": "output"}.get(direction, direction)
            print(design.name, port.name, direction, port.type.bitWidth)


if __name__ == "__main__":
    main()
