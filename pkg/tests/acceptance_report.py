"""Collects one pass/fail line per acceptance criterion for the terminal summary."""

LINES = {}


def record(number, passed, detail):
    line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}: {detail}"
    LINES[number] = line
    print(line)
    return passed
