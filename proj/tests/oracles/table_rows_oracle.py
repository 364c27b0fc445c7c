#!/usr/bin/env python3
"""Independent oracle for the ten published sample rows.

Sums and means are computed with exact rationals so the frozen values in
test_harness.cpp and the acceptance suite do not depend on the C++ code path.
"""
from fractions import Fraction as F

ROWS = [
    (22, 419, "169.42", "275.97"),
    (24, 547, "1214.34", "1364.73"),
    (32, 668, "170.72", "279.82"),
    (44, 1078, "203.11", "313.98"),
    (22, 440, "182.38", "287.07"),
    (26, 502, "159.94", "255.80"),
    (22, 571, "163.03", "283.93"),
    (22, 585, "163.70", "299.47"),
    (24, 543, "157.18", "260.35"),
    (22, 361, "136.61", "239.50"),
]

loops = sum(F(r[0]) for r in ROWS)
tokens = sum(F(r[1]) for r in ROWS)
comm = sum(F(r[2]) for r in ROWS)
total = sum(F(r[3]) for r in ROWS)
n = len(ROWS)
print("sum loops", loops, "tokens", tokens, "comm", float(comm), "total", float(total))
print("mean loops", float(loops / n), "tokens", float(tokens / n),
      "comm", float(comm / n), "total", float(total / n))

# 3-sigma binomial bound for 300 runs at failure probability 0.1
import math
sigma = math.sqrt(0.1 * 0.9 / 300)
print("sigma", sigma, "bound", 0.1 - 3 * sigma, 0.1 + 3 * sigma)

# per-attempt transport error rate giving run failure 0.1 with 20 calls x 3 attempts
p = (1 - 0.9 ** (1 / 20)) ** (1 / 3)
print("per-attempt p", p)
