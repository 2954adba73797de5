"""
Virtual rehashing in a collision-counting index
===============================================

One set of m projections is built once.  Larger radii are searched by
integer-dividing the stored bucket ids, so no table is ever rebuilt.
"""

import numpy as np

from rolsh import lsh
from rolsh.data import split_queries, synth_dataset

# a clustered 16-d point set, with 50 points held back as queries
X = synth_dataset("sift_like", 5050, 16, seed=1)
data, queries = split_queries(X, 50, seed=2)

params = lsh.SensitivityParams.from_width()  # w = 2.184, c = 2, delta = 0.1
m = lsh.default_projection_count(params)
l = lsh.compute_collision_threshold(len(data), m, params)
print(f"p1={params.p1:.4f}  p2={params.p2:.4f}  m={m}  l={l}")

table = lsh.build_index(data, m, seed=3)

# %%
# Bucket ids coarsen by floor division: neighbours at level r stay together at 2r.
h = np.arange(-6, 7)
for r in (1, 2, 4):
    print(f"r={r}: {lsh.bucket_at_level(h, r)}")

# %%
# Candidates at each level for one query; the sets only ever grow.
q = queries[0]
qh = table.hash(q)
for r in (1, 2, 4, 8, 16, 32):
    counts = lsh.collision_counts(table, qh, r)
    print(f"level {r:4d}: {np.count_nonzero(counts >= l):5d} candidates")

# %%
# The search walks those levels until it can stop, then ranks by true distance.
res = lsh.query_knn(table, lsh.make_plan(table, q, 10, params), data)
true_ids, true_d = lsh.brute_force_knn(data, q, 10)
print(f"terminal radius {res.terminal_radius} after {res.levels_visited} levels")
print(f"returned max distance {res.distances[-1]:.2f}, exact 10th-NN distance {true_d[-1]:.2f}")
print(f"recall@10 = {len(set(res.ids) & set(true_ids)) / 10:.2f}")
