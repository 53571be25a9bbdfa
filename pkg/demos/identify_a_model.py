"""Fit each surrogate structure to one heat2r run and score it on fresh inputs.

    python3 demos/identify_a_model.py
"""
import numpy as np

from surrofal import Armax, Arx, Bj, StateSpace, TrainingData, fit, generate, get_benchmark, mse, simulate
from surrofal.models import DivergenceError

bench = get_benchmark("heat2r")
rng = np.random.default_rng(7)
train = generate(bench.profile, rng).inputs
data = TrainingData.single(train, bench.model.execute(train))
tests = [generate(bench.profile, rng).inputs for _ in range(5)]

for structure in (Arx(4, 4, 1), Armax(4, 4, 2, 1), Bj(2, 1, 1, 2, 1), StateSpace(4)):
    model = fit(structure, data)
    try:
        errs = [mse(bench.model.execute(u), simulate(model, u)) for u in tests]
        held = f"{np.mean(errs):.4f}"
    except DivergenceError:
        held = "diverged"
    print(f"{structure.tag:6s} {str(structure.orders):18s} train {model.training_mse:.4f}  held-out {held}")

# a second experiment refits on both runs; regressors never straddle the join
extra = generate(bench.profile, rng).inputs
data = data.append(extra, bench.model.execute(extra))
model = fit(Arx(4, 4, 1), data)
print(f"arx after adding a run: {len(data)} experiments, train {model.training_mse:.4f}")
