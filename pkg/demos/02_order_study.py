"""
Convergence orders
==================

Errors at T = 10 against the exact matrix exponential, for several step sizes.
Peaceman-Rachford and Douglas(1/2) are second order, Douglas(1) and implicit
Euler first order. Pass an output directory to also write the CSV and a
plotting-friendly data file.
"""

# %%
import sys

from osmosis_adi.validation import order_study, synthetic_pair

f, v = synthetic_pair(32, 40)
taus = [0.05, 0.1, 0.2, 0.4, 0.8]
res = order_study(f, v, taus, T=10.0, schemes=["pr", "douglas:0.5", "douglas:1", "be"])

# %%
for (scheme, theta), slope in res.slopes.items():
    errs = " ".join(f"{e:.2e}" for e in res.errors(scheme, theta))
    name = scheme if theta is None else f"{scheme}({theta:g})"
    print(f"{name:<14} slope {slope:5.2f}   {errs}")

# %%
if len(sys.argv) > 1:
    res.write_csv(f"{sys.argv[1]}/order.csv")
    res.write_loglog(f"{sys.argv[1]}/order.dat")
