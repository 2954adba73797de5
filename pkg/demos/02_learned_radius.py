"""
Learning where a search will stop
=================================

Ground truth: the terminal radius of a from-1 search for many (query, k)
pairs.  A regressor maps the query's hash vector plus k to that radius,
and a search that starts at the predicted level skips the early levels.
"""

import numpy as np

from rolsh import lsh, radius, regress
from rolsh.data import split_queries, synth_dataset

X = synth_dataset("deep_like", 12000, 32, seed=4)
data, queries = split_queries(X, 1400, seed=5)
params = lsh.SensitivityParams.from_width()
table = lsh.build_index(data, lsh.default_projection_count(params), seed=6)

samples = radius.generate_ground_truth(table, data, queries, radius.ALL_K, params)
F, K, y = radius.samples_to_arrays(samples)
print(f"{len(samples)} samples, labels span {int(y.min())}..{int(y.max())}")
for k in radius.ALL_K:
    print(f"  k={k:3d}: median label {np.median(y[K == k]):.0f}")

# %%
# Scenario 2: five k values, 5000 training samples, query-disjoint test set.
train, test = radius.build_scenario(samples, radius.SCENARIOS[2], seed=7)
model = regress.fit("mlp", None, F[train], y[train], seed=0)
pred = model.predict(F[test])
print(f"MLP test MSE {np.mean((pred - y[test]) ** 2):.2f}")

# %%
# Replay held-out queries with and without the predicted start.
test_heads = {samples[i].features[:-1].tobytes() for i in test}
Fq = radius.extract_feature_matrix(table, queries, 10)
held = [i for i in range(len(queries)) if Fq[i, :-1].tobytes() in test_heads][:100]
levels_a, levels_b = [], []
for i in held:
    plan = lsh.make_plan(table, queries[i], 10, params)
    a = lsh.query_knn(table, plan, data)
    b = lsh.query_knn_predicted(table, plan, data, float(model.predict(Fq[i : i + 1])[0]))
    levels_a.append(a.levels_visited)
    levels_b.append(b.levels_visited)
print(f"mean levels visited: from radius 1 {np.mean(levels_a):.2f}, predicted start {np.mean(levels_b):.2f}")
