"""Two LRU caches in series: the second one sees only what the first one missed.

Run with ``python demos/tandem.py``.  Popular items are filtered by the
first cache, so the second one hits them far less often.
"""
import numpy as np

from cachecascade import SimConfig, TandemScenario, build_zipf_catalog, evaluate_tandem, run_sim

cat = build_zipf_catalog(1000, 0.8, 1000.0)
scenario = TandemScenario(cat, (100, 100))
r1, r2 = evaluate_tandem(scenario)
sim = run_sim(SimConfig(scenario, measured=5_000_000, seed=1))

print(f"level 1: t_c={r1.t_c:.4g}  H={r1.hit_ratio:.4f} (sim {sim.hit_ratio(1):.4f})")
print(f"level 2: t_c={r2.t_c:.4g}  H={r2.hit_ratio:.4f} (sim {sim.hit_ratio(2):.4f}), "
      f"weighted by origin popularity {r2.hit_ratio_origin:.4f}")
print("\n item   H1 model   H1 sim   H2 model   H2 sim")
h1s, h2s = sim.item_hit_ratio(1), sim.item_hit_ratio(2)
for x in (1, 2, 5, 10, 20, 50, 100, 200, 500):
    k = x - 1
    print(f"{x:>5}{r1.hit[k]:>11.4f}{h1s[k]:>9.4f}{r2.hit[r2.index_of(x)]:>11.4f}{h2s[k]:>9.4f}")
busy = sim.requests[1] >= 1000
print(f"\nmax |H2 model - H2 sim| over {busy.sum()} items with >= 1e3 level-2 requests: "
      f"{np.max(np.abs(r2.hit[busy] - h2s[busy])):.4f}")
