#!/usr/bin/env python3
"""Exhaustive solver for tiny binary LP files, used to exercise the external backend.

Usage: fake_lp_solver.py model.lp solution.txt
"""
import itertools
import re
import sys

TERM = re.compile(r"([+-])?\s*([0-9.eE+-]+)?\s*([A-Za-z_][A-Za-z0-9_]*)")


def parse_terms(text):
    terms = []
    for sign, coef, name in TERM.findall(text):
        c = float(coef) if coef else 1.0
        terms.append((name, -c if sign == "-" else c))
    return terms


def parse(path):
    section = None
    objective, rows, binaries = [], [], []
    pending = ""
    for raw in open(path):
        line = raw.split("\\", 1)[0].strip()
        if not line:
            continue
        low = line.lower()
        if low in ("maximize", "subject to", "binary", "end"):
            section = low
            continue
        if section == "maximize":
            objective += parse_terms(line.split(":", 1)[-1])
        elif section == "subject to":
            pending += " " + line
            m = re.search(r"(<=|>=|=)\s*([-0-9.eE+]+)\s*$", pending)
            if m:
                body = pending[: m.start()].split(":", 1)[-1]
                rows.append((parse_terms(body), m.group(1), float(m.group(2))))
                pending = ""
        elif section == "binary":
            binaries += line.split()
    return objective, rows, binaries


def main():
    objective, rows, names = parse(sys.argv[1])
    best, best_value = None, None
    for bits in itertools.product((0, 1), repeat=len(names)):
        value = dict(zip(names, bits))
        ok = True
        for terms, sense, rhs in rows:
            lhs = sum(c * value.get(n, 0) for n, c in terms)
            if (sense == "<=" and lhs > rhs + 1e-9) or (sense == ">=" and lhs < rhs - 1e-9) or (
                sense == "=" and abs(lhs - rhs) > 1e-9
            ):
                ok = False
                break
        if not ok:
            continue
        obj = sum(c * value.get(n, 0) for n, c in objective)
        if best_value is None or obj > best_value + 1e-9:
            best, best_value = value, obj
    if best is None:
        sys.exit(1)
    with open(sys.argv[2], "w") as out:
        for n in names:
            out.write(f"{n} {best[n]}\n")


if __name__ == "__main__":
    main()
