"""What leaves a cache: the miss stream of the most popular item.

Run with ``python demos/miss_stream.py``.  Prints the closed-form miss
statistics, then compares the tabulated miss density with the gaps seen in
a simulation, bin by bin.
"""
import math

import numpy as np

from cachecascade import (ExponentialLaw, SimConfig, TandemScenario, build_zipf_catalog, hit_probabilities,
                          miss_cv2, miss_pdf, miss_trace_histogram, run_sim, solve_tc)

# smoothing of a Poisson item: the miss CV^2 is 1 - 2x e^-x, deepest at x = lambda t_c = 1
print("lambda*t_c   miss CV^2")
for x in (0.25, 0.5, 1.0, 2.0, 4.0):
    print(f"{x:>10g}   {miss_cv2(ExponentialLaw(1.0), x):.4f}")
print(f"minimum CV = sqrt(1 - 2/e) = {math.sqrt(1 - 2 / math.e):.6f}\n")

cat = build_zipf_catalog(1000, 0.8, 100.0, "lognormal", 2.0)
ct = solve_tc(cat, 50)
H = hit_probabilities(cat.laws, cat.n, ct.t_c)
law = cat.law(0)
dens = miss_pdf(law, ct.t_c)
print(f"item 1: H={H[0]:.4f}  t_c={ct.t_c:.4g}  series terms={dens.terms}  grid nodes={dens.nodes.size}")
print(f"  input  mean={law.mean:.4g}  CV^2={float(law.cv2):.4f}")
print(f"  misses mean={dens.mean:.4g}  CV^2={dens.cv2:.4f}  mass={dens.mass:.8f}")

rep = run_sim(SimConfig(TandemScenario(cat, (50,)), measured=2_000_000, seed=2, trace=(1,)))
width = ct.t_c / 2
edges, hist = miss_trace_histogram(rep, 1, 1, width)
gaps = rep.gaps[(1, 1)]
print(f"\n{gaps.size} simulated miss gaps, {np.mean(gaps < ct.t_c):.2%} shorter than t_c")
print("   bin start   simulated      model")
for k in range(2, 12):
    lo, hi = edges[k], edges[k + 1]
    model = (dens.cdf(hi) - dens.cdf(lo)) / width
    print(f"{lo:>12.4g}{hist[k]:>12.4g}{model:>11.4g}")
