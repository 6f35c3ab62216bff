"""Hit ratio of one LRU cache as the inter-arrival CV grows, model against simulation.

Run with ``python demos/cv_sweep.py``.  Burstier traffic (larger CV) packs
more requests of an item into short gaps, so more of them hit.
"""
from cachecascade import SimConfig, TandemScenario, aggregate_hit, build_zipf_catalog, hit_probabilities, run_sim, solve_tc

N, ALPHA, RATE, C = 10_000, 0.8, 1000.0, 100

print(f"N={N} alpha={ALPHA} C={C}, 1e6 measured requests per point")
print(f"{'family':<12}{'cv':>5}{'t_c':>11}{'H_model':>10}{'H_sim':>9}{'delta':>9}")
for family, cvs in (("exponential", [1.0]), ("hyperexp", [2.0, 4.0, 8.0]), ("lognormal", [0.5, 2.0, 4.0, 8.0])):
    for cv in cvs:
        cat = build_zipf_catalog(N, ALPHA, RATE, family, cv)
        ct = solve_tc(cat, C)
        h_model = aggregate_hit(cat, hit_probabilities(cat.laws, N, ct.t_c))
        h_sim = run_sim(SimConfig(TandemScenario(cat, (C,)), measured=1_000_000, seed=1)).hit_ratio(1)
        print(f"{family:<12}{cv:>5g}{ct.t_c:>11.4g}{h_model:>10.4f}{h_sim:>9.4f}{h_model - h_sim:>+9.4f}")
