"""Compare plain falsification with surrogate-assisted falsification on satlite.

Both searches look for an attitude-control input that drives the pointing
error above its bound.  The plain search spends every candidate on the model;
the surrogate search spends model runs only on building the surrogate and on
checking the candidates the surrogate proposes.

    python3 demos/baseline_vs_surrogate.py
"""
import statistics

from surrofal import Bj, FalsificationConfig, SurrogateConfig, falsify, get_benchmark, parse_stl, run_surrogate

bench = get_benchmark("satlite")
phi = parse_stl(bench.requirement, bench.model.output_names)
print(f"requirement: {bench.requirement}")

plain, assisted = [], []
for seed in range(10):
    res = falsify(bench.model, bench.profile, phi, FalsificationConfig(100, seed=seed))
    plain.append(res.executions_used)

    cfg = SurrogateConfig(Bj(2, 1, 1, 2, 1), max_refinements=10,
                          inner=FalsificationConfig(100, seed=seed))
    rep = run_surrogate(bench.model, bench.profile, phi, cfg, rng=seed)
    assisted.append(rep.mut_executions)
    print(f"seed {seed}: plain {res.executions_used:3d} runs (found={res.falsified}), "
          f"surrogate {rep.mut_executions:2d} runs ({rep.outcome.value}, {rep.refinements} refinements)")

print(f"median model runs: plain {statistics.median(plain)}, surrogate {statistics.median(assisted)}")
