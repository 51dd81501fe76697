# ---
# jupyter:
#   jupytext:
#     text_representation:
#       extension: .py
#       format_name: percent
# ---

# %% [markdown]
# # Planar poses and the pose graph
#
# Poses are `(x, y, theta)` with the heading wrapped to (-pi, pi].  An edge
# stores a measured relative pose `z` between two vertices, and its residual
# is the local-frame difference between the predicted and the measured
# transform.

# %%
import math

import numpy as np

from ipc_pgo import EdgeRecord, Pose2, PoseGraph, append_odometry, compose, edge_chi2, edge_error, inverse, relative
from ipc_pgo.geometry import boxminus, normalize_angle

# %%
a = Pose2(2, 3, math.pi)
b = Pose2(1, -1, math.pi / 2)
print("a o b        =", compose(a, b))
print("inverse(a)   =", inverse(a))
print("relative(a,b)=", relative(a, b))
print("wrap(-pi)    =", normalize_angle(-math.pi))

# %% [markdown]
# `boxminus(p, z)` is `inverse(z) o p`: composing `z` with it gives `p` back.

# %%
p, z = Pose2(1.0, 2.0, 0.3), Pose2(0.8, 2.1, 0.25)
d = boxminus(p, z)
print(d, compose(z, Pose2(d.dx, d.dy, d.dtheta)))

# %% [markdown]
# ## Dead reckoning around a square
#
# Four unit steps that each turn left by 90 degrees bring the robot home.
# A loop closure from vertex 0 to vertex 4 with identity measurement is then
# satisfied exactly.

# %%
g = PoseGraph(Pose2())
step = Pose2(1, 0, math.pi / 2)
for _ in range(4):
    append_odometry(g, step, np.eye(3))
g.add_edge(EdgeRecord(0, 4, Pose2(), np.eye(3)))
print(np.round(g.poses, 12))
print("loop residual:", edge_error(g.loop_edges[0], g), "chi2:", edge_chi2(g.loop_edges[0], g))

# %% [markdown]
# ## A wrong closure
#
# Replace the closure with one claiming vertex 4 sits 5 m ahead of vertex 0.
# The chi-squared value uses the edge's information matrix.

# %%
bad = EdgeRecord(0, 4, Pose2(5, 0, 0), np.eye(3))
print("chi2 of the 5 m outlier at the dead-reckoned poses:", edge_chi2(bad, g))
