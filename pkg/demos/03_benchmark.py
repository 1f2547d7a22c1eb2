"""
Split versus unsplit
====================

The same problem solved with BiCGStab and banded LU on the full operator and
with the two ADI schemes. Grid size is the first argument (default 64x64);
``240x250`` matches the classic benchmark size but the LU rows are then
skipped (recorded as failed cells) because of their memory footprint.
"""

# %%
import sys

from osmosis_adi.validation import bench_grid, synthetic_pair

n_x, n_y = (int(t) for t in (sys.argv[1] if len(sys.argv) > 1 else "64x64").split("x"))
f, v = synthetic_pair(n_x, n_y)
table = bench_grid(f, v, taus=[1.0, 10.0, 100.0], T=1000.0)

# %%
print(f"{'method':<9}{'theta':>6}{'tau':>7}{'time [s]':>11}{'rrmse':>12}")
for r in table.rows:
    if r["status"] == "ok":
        print(f"{r['method']:<9}{r['theta']:>6}{r['tau']:>7}{float(r['time_s']):>11.4f}{float(r['rrmse']):>12.2e}")
    else:
        print(f"{r['method']:<9}{r['theta']:>6}{r['tau']:>7}   {r['status'][:60]}")
