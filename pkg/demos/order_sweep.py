"""Run the shipped heat2r structure sweep and print its Pareto frontier.

The sweep trades effectiveness (share of seeds that found a violation)
against mean iterations.  Expect a couple of minutes on one core.

    python3 demos/order_sweep.py [output-dir]
"""
import sys
import tempfile

from surrofal.campaign import load_sweep, sweep

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix="sweep-")
table = sweep(load_sweep("heat2r_sweep"), out)
for row in table:
    mark = "*" if row.pareto else " "
    print(f"{mark} {row.label:8s} eff={row.effectiveness:.2f} mean_iter={row.mean_iterations:.2f} errors={row.errors}")
print(f"results under {out} (sweep.csv has the full table)")
