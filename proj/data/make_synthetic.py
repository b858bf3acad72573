"""Regenerates synthetic_design.csv (fixed seed)."""
import numpy as np

rng = np.random.default_rng(20240611)
rows = []
for i in range(1, 121):
    n = 2 + (rng.poisson(0.6) if rng.random() < 0.3 else 0)
    age = rng.normal(40, 8)
    income = rng.lognormal(10, 0.3)
    a = rng.normal(-0.5, 1)
    for _ in range(n):
        z = rng.uniform(0, 5)
        p = 1 / (1 + np.exp(-(a + 0.4 * z - 1)))
        r = int(rng.random() < p)
        rows.append((f"s{i:03d}", z, r, age + rng.normal(0, 2), income * rng.lognormal(0, 0.05), int(rng.random() < 0.5)))

with open("synthetic_design.csv", "w") as f:
    f.write("set_id,dose,outcome,age,income,female\n")
    for s, z, r, age, inc, fem in rows:
        f.write(f"{s},{z:.4f},{r},{age:.2f},{inc:.1f},{fem}\n")
