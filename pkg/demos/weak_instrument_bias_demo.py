"""Weak-instrument bias: Monte Carlo means next to their approximations.

Two cells with ten equally weak instruments. One-sample 2SLS drifts toward
OLS; the two-sample estimator shrinks toward zero. A few hundred replicates
keep this quick; the acceptance suite runs 2000.
Run: python demos/weak_instrument_bias_demo.py
"""

from mrkit import BiasExperimentConfig, run_bias_experiment
from mrkit.types import AliceConfig

for n, g2 in [(2000, 0.005), (5000, 0.02)]:
    alice = AliceConfig.equal_strength(10, g2, beta=1.0, sigma_delta_eps=0.5, n1=n, n2=n)
    rep = run_bias_experiment(BiasExperimentConfig(alice, replicates=300, seed=1))
    print(f"\nn={n}, |gamma|^2={g2}  (weak: {rep.weak})")
    print(f"{'estimator':<9} {'MC mean':>9} {'MC se':>8} {'predicted':>10}")
    for row in rep.rows:
        pred = "" if row.predicted_mean is None else f"{row.predicted_mean:10.4f}"
        print(f"{row.estimator:<9} {row.mean:9.4f} {row.mc_se:8.4f} {pred}")
