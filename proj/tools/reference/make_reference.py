#!/usr/bin/env python3
"""Regenerates the committed power flow reference solutions with PYPOWER.

The reference is computed once and frozen under tests/fixtures/. It uses its
own MATPOWER reader so nothing here shares code with the C++ importer.

Conventions matched to the C++ solver:
  * reactive limits enforced for every in-service generator except the slack,
  * angles reported in radians relative to the slack bus,
  * mismatch tolerance 1e-10 p.u.

Usage: make_reference.py <matpower-dir> <fixture-dir>

Requires pypower (pip install pypower). Older pypower releases need integer
casts on the generator bus column in runpf's Q-limit branch under numpy >= 1.24.
"""

import math
import re
import sys
from pathlib import Path

import numpy as np
from pypower.api import ppoption, runpf

CASES = {
    "ieee14": "case14.m",
    "activsg200": "case_ACTIVSg200.m",
    "activsg500": "case_ACTIVSg500.m",
}


def read_matrix(text, name):
    m = re.search(r"mpc\." + name + r"\s*=\s*\[(.*?)\];", text, re.S)
    rows = []
    for line in m.group(1).split("\n"):
        line = line.split("%")[0].strip().rstrip(";")
        if line:
            rows.append([float(tok) for tok in line.replace(",", " ").split()])
    return np.array(rows)


def read_case(path):
    text = Path(path).read_text()
    base = float(re.search(r"mpc\.baseMVA\s*=\s*([\d.]+)", text).group(1))
    return {
        "version": "2",
        "baseMVA": base,
        "bus": read_matrix(text, "bus"),
        "gen": read_matrix(text, "gen"),
        "branch": read_matrix(text, "branch"),
    }


def solve(ppc, enforce_q):
    ppc = {k: (v.copy() if isinstance(v, np.ndarray) else v) for k, v in ppc.items()}
    slack = int(ppc["bus"][ppc["bus"][:, 1] == 3][0, 0])
    for g in ppc["gen"]:
        if int(g[0]) == slack:
            g[3], g[4] = 1e9, -1e9
    opt = ppoption(VERBOSE=0, OUT_ALL=0, PF_TOL=1e-10, PF_MAX_IT=30,
                   ENFORCE_Q_LIMS=1 if enforce_q else 0)
    result, ok = runpf(ppc, opt)
    return result, ok, slack


def main():
    src, out = Path(sys.argv[1]), Path(sys.argv[2])
    out.mkdir(parents=True, exist_ok=True)
    for key, fname in CASES.items():
        ppc = read_case(src / fname)
        result, ok, slack = solve(ppc, enforce_q=True)
        if not ok:
            raise SystemExit(f"{fname}: reference solve failed")
        bus = result["bus"]
        slack_va = bus[bus[:, 0] == slack][0, 8]
        lines = ["bus_id,vm_pu,va_rad"]
        for row in sorted(bus.tolist(), key=lambda r: r[0]):
            va = math.radians(row[8] - slack_va)
            lines.append(f"{int(row[0])},{row[7]:.12f},{va:.12f}")
        (out / f"reference_{key}.csv").write_text("\n".join(lines) + "\n")
        print(f"{key}: {len(bus)} buses written")

    # Heavily overloaded 14-bus case must fail in the reference tool too.
    ppc = read_case(src / CASES["ieee14"])
    ppc["bus"][:, 2:4] *= 20.0
    _, ok, _ = solve(ppc, enforce_q=True)
    print(f"ieee14 loads x20: {'converged' if ok else 'no solution'}")


if __name__ == "__main__":
    main()
