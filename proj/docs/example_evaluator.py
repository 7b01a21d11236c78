#!/usr/bin/env python3
# Reads one JSON request from stdin and prints a single number.
import json
import math
import random
import sys

req = json.loads(sys.stdin.readline())
p = req["params"]
rng = random.Random(req["seed"])
cost = (p["alpha"] - 3.0) ** 2 + 10.0 * (p["beta"] + 0.2) ** 2 + 0.1 * rng.gauss(0.0, 1.0)
print(cost + 0.01 * math.log1p(len(req["instance"])))
