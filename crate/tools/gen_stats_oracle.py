#!/usr/bin/env python3
"""Generate frozen reference values for the stats tests using SciPy.

Writes two JSON fixtures under crates/core/tests/data/:

  welch_cases.json   100 random sample pairs with Welch t, df and the
                     one-sided p-value (alternative: mean(a) > mean(b))
  t_tail_cases.json  Student-t upper-tail probabilities on a (t, df) grid

Rerun after any change here; the fixtures are committed so the Rust
tests do not need Python at test time.
"""

import json
import numpy as np
from scipy import stats

OUT_DIR = "crates/core/tests/data"


def welch_cases(n_cases=100, seed=20240817):
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(n_cases):
        na = int(rng.integers(5, 501))
        nb = int(rng.integers(5, 501))
        kind = rng.integers(0, 3)
        if kind == 0:
            a = rng.normal(rng.uniform(-2, 2), rng.uniform(0.1, 3.0), na)
            b = rng.normal(rng.uniform(-2, 2), rng.uniform(0.1, 3.0), nb)
        elif kind == 1:
            a = rng.lognormal(0.0, rng.uniform(0.2, 1.0), na)
            b = rng.lognormal(0.1, rng.uniform(0.2, 1.0), nb)
        else:
            a = rng.uniform(0, 5, na) ** 2
            b = rng.uniform(0, 5, nb) ** 2

        res = stats.ttest_ind(a, b, equal_var=False, alternative="greater")
        va, vb = a.var(ddof=1), b.var(ddof=1)
        sa, sb = va / na, vb / nb
        df = (sa + sb) ** 2 / (sa**2 / (na - 1) + sb**2 / (nb - 1))
        cases.append(
            {
                "a": a.tolist(),
                "b": b.tolist(),
                "t": float(res.statistic),
                "df": float(df),
                "p_greater": float(res.pvalue),
            }
        )
    return cases


def t_tail_cases():
    cases = []
    ts = [-30.0, -8.0, -3.5, -1.0, -0.25, 0.0, 0.25, 1.0, 1.96, 3.5, 8.0, 30.0]
    # Large df values show up when whole-test complements feed the test.
    dfs = [0.5, 1.0, 2.5, 4.96, 10.0, 29.0, 100.0, 1000.0, 20000.0, 2e6]
    for df in dfs:
        for t in ts:
            cases.append({"t": t, "df": df, "p_upper": float(stats.t.sf(t, df))})
    return cases


def main():
    with open(f"{OUT_DIR}/welch_cases.json", "w") as f:
        json.dump(welch_cases(), f, indent=1)
    with open(f"{OUT_DIR}/t_tail_cases.json", "w") as f:
        json.dump(t_tail_cases(), f, indent=1)
    spot = stats.ttest_ind(
        [3.0, 3.2, 3.4], [2.0, 2.2, 2.4, 2.6], equal_var=False, alternative="greater"
    )
    print("spot check t,p:", repr(spot.statistic), repr(spot.pvalue))


if __name__ == "__main__":
    main()
