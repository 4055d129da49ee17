"""A small end-to-end benchmark run through the harness API.

Compares the hierarchical solver against the ridge-on-everything baseline on
two problem dimensions with a couple of replicates.  The full protocol (ten
replicates, dimensions up to 32, two-loop cross-validation) runs through the
same entry point from a TOML file; see README for the CLI form.
"""

import tempfile

from hkl import BenchConfig, run_benchmark

config = BenchConfig(
    methods=["hkl", "l2"],
    p_values=[4, 8],
    n=150,
    r=2,
    snr=4.0,
    replicates=2,
    lambda_grid=[1e-2, 1e-3, 1e-4],
    beta_grid=[4.0],
    kernel="hermite",
    folds=3,
    n_test=200,
    seed=11,
    q_max=25,
)

with tempfile.TemporaryDirectory() as out:
    table, ok = run_benchmark(config, out)
    print(f"benchmark completed: {ok}, {len(table.rows)} cells\n")
    print(f"{'method':>8} {'p':>4} {'median':>9} {'q1':>9} {'q3':>9}")
    for row in table.aggregate():
        print(f"{row['method']:>8} {row['p']:>4} {row['median']:>9.4f} "
              f"{row['q1']:>9.4f} {row['q3']:>9.4f}")
