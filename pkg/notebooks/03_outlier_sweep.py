# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Robustness against the outlier percentage
#
# The benchmark protocol adds false closures as a percentage of the true
# ones, here from 10% to 100%, on a noisy random walk.  Outliers are drawn
# uniformly with no gross-outlier filter, so nothing guarantees that each
# one is detectable.  The `sweep` command of the CLI runs the same protocol
# on g2o files.

# %%
import numpy as np

from ipc_pgo import OutlierSpec, inject, run_ipc
from ipc_pgo.evaluation import actxc, ate, classify, precision_recall_f1, reference_trajectory, rpe
from ipc_pgo.synthetic import random_walk_graph

rng = np.random.default_rng(0)
sg = random_walk_graph(rng, n_poses=150, n_loops=30, odom_noise=(0.01, 0.005))
reference, _ = reference_trajectory(sg.graph)

# %%
rows = []
for pct in range(10, 101, 30):
    for seed in range(3):
        corrupted, labels = inject(sg.graph, OutlierSpec(pct, seed=seed))
        engine = run_ipc(corrupted)
        p, r, f1 = precision_recall_f1(classify(engine.accepted_ids, labels, len(corrupted.loop_edges)))
        rows.append((pct, p, r, f1, ate(engine.graph, reference), rpe(engine.graph, reference), actxc(engine.records)))

table = np.array(rows)
print(" pct  precision  recall   f1      ATE[m]   RPE[m]   ACTxC[ms]")
for pct in np.unique(table[:, 0]):
    m = table[table[:, 0] == pct].mean(axis=0)
    print(f"{pct:4.0f}  {m[1]:8.3f}  {m[2]:7.3f}  {m[3]:6.3f}  {m[4]:8.4f}  {m[5]:7.4f}  {1e3 * m[6]:8.2f}")

# %% [markdown]
# ## Local outliers
#
# Closures between nearby poses are harder to refute: a short stretch of
# odometry has little leverage against them.

# %%
for policy in ("random", "local"):
    corrupted, labels = inject(sg.graph, OutlierSpec(100, policy=policy, seed=4, local_window=10))
    engine = run_ipc(corrupted)
    c = classify(engine.accepted_ids, labels, len(corrupted.loop_edges))
    print(policy, c, "F1 = %.3f" % precision_recall_f1(c)[2])
