#!/usr/bin/env python3
"""Writes the synthetic desk-scale problems under data/problems.

Output is deterministic: rerunning reproduces the same CSV bytes.
"""
import csv
import json
import math
import random
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent / "data" / "problems"


def kepler(r):
    return r ** 1.5


def ratio_law(a, b, c, d):
    return a * b / (c * d)


def linear(x0, x1):
    return 2.5 * x0 - 1.3 * x1 + 0.7


def damped(t):
    return math.exp(-0.3 * t) * math.cos(2.0 * t)


def saturating(x0):
    return 4.0 * (1.0 - math.exp(-0.5 * x0))


PROBLEMS = [
    {
        "name": "kepler",
        "group": "physics",
        "fn": kepler,
        "ranges": [(0.4, 30.0)],
        "columns": ["R"],
        "target": "T",
        "rows": (100, 50),
        "variable_descriptions": ["semi-major axis of the orbit in astronomical units"],
        "target_description": "orbital period in years",
        "instructions": "Find the relation between the orbital period of a planet and the size of its orbit.",
        "ground_truth": "x0^1.5",
    },
    {
        "name": "ratio_law",
        "group": "physics",
        "fn": ratio_law,
        "ranges": [(1.0, 5.0)] * 4,
        "columns": ["q1", "q2", "r", "s"],
        "target": "F",
        "rows": (20, 40),
        "variable_descriptions": ["first source strength", "second source strength",
                                  "first separation factor", "second separation factor"],
        "target_description": "interaction strength",
        "instructions": "Find how the interaction strength depends on the two sources and two separation factors.",
        "ground_truth": "x0*x1/(x2*x3)",
    },
    {
        "name": "linear",
        "group": "baseline",
        "fn": linear,
        "ranges": [(-3.0, 3.0), (-3.0, 3.0)],
        "columns": ["u", "v"],
        "target": "w",
        "rows": (80, 40),
        "variable_descriptions": ["first control input", "second control input"],
        "target_description": "plant response",
        "instructions": "Find the response of the plant to its two inputs.",
        "ground_truth": "2.5*x0 - 1.3*x1 + 0.7",
    },
    {
        "name": "damped_oscillation",
        "group": "dynamics",
        "fn": damped,
        "ranges": [(0.0, 10.0)],
        "columns": ["t"],
        "target": "x",
        "rows": (120, 60),
        "variable_descriptions": ["time in seconds"],
        "target_description": "displacement of a damped spring",
        "instructions": "Find the displacement of a damped oscillator released from rest at unit amplitude.",
        "ground_truth": "exp(-0.3*x0)*cos(2*x0)",
    },
    {
        "name": "saturating_exponential",
        "group": "dynamics",
        "fn": saturating,
        "ranges": [(0.0, 10.0)],
        "columns": ["t"],
        "target": "c",
        "rows": (80, 40),
        "variable_descriptions": ["time since the start of charging"],
        "target_description": "accumulated charge",
        "instructions": "Find how the accumulated charge grows toward its limit over time.",
        "ground_truth": "4*(1 - exp(-0.5*x0))",
    },
]


def write_rows(path, columns, target, rows):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns + [target])
        for r in rows:
            w.writerow([repr(v) for v in r])


def sample(problem, n, rng):
    out = []
    for _ in range(n):
        xs = [rng.uniform(lo, hi) for lo, hi in problem["ranges"]]
        out.append(xs + [problem["fn"](*xs)])
    return out


def main():
    ROOT.mkdir(parents=True, exist_ok=True)
    for index, p in enumerate(PROBLEMS):
        rng = random.Random(1000 + index)
        n_train, n_test = p["rows"]
        write_rows(ROOT / f"{p['name']}_train.csv", p["columns"], p["target"], sample(p, n_train, rng))
        write_rows(ROOT / f"{p['name']}_test.csv", p["columns"], p["target"], sample(p, n_test, rng))
        spec = {
            "name": p["name"],
            "group": p["group"],
            "variable_descriptions": p["variable_descriptions"],
            "target_description": p["target_description"],
            "instructions": p["instructions"],
            "data_path": f"{p['name']}_train.csv",
            "test_path": f"{p['name']}_test.csv",
            "ground_truth": p["ground_truth"],
        }
        (ROOT / f"{p['name']}.json").write_text(json.dumps(spec, indent=2) + "\n")


if __name__ == "__main__":
    main()
