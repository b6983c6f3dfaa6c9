# %% [markdown]
# # Releasing a trajectory
#
# Over time the adversary tracks the user with a Markov model. Before each
# release we work out which cells are still possible, restrict the policy to
# them, repair isolated cells, release, and update the adversary's belief
# with the exact likelihood of what was released. The privacy ledger adds up
# epsilon and intersects the graphs that were actually enforced.

# %%
from pathlib import Path

import numpy as np

from pglp import GridMap, MarkovModel, TraceState, compose, disconnected_nodes, release_trace
from pglp.policy import load_policy
from pglp.trace import point_belief, read_trajectory

DATA = Path(__file__).resolve().parent / "data" if "__file__" in globals() else Path("data")
grid = GridMap.load(DATA / "map.json")
policy = load_policy(DATA / "g_k9.json", grid)
model = MarkovModel.load(DATA / "markov.json")
truth = read_trajectory(DATA / "trajectory.csv")
print(len(truth), "steps; first cells:", truth[:8])

# %% [markdown]
# Here the adversary knows where the trace starts. Early on only a few cells
# are possible, so the restricted policy keeps only a few edges and some
# cells lose all their neighbours. In this run the hull of the remaining
# edges still covers those cells, so no repair is needed. Later the noise
# spreads the belief over most of the map. At t=1 the adversary already
# knows the cell, so it is released as is.

# %%
start = point_belief(grid.n, truth[0])
state = TraceState.start(grid, model, policy, start)
records, state = release_trace(state, truth, 0.5, "ppim", np.random.default_rng(1))
for rec, s in list(zip(records, truth))[:10]:
    print(f"t={rec.t:2d} true={s:3d} released={rec.released:3d} |C_t|={len(rec.domain):3d} "
          f"edges={len(rec.graph.edges):3d} disconnected={disconnected_nodes(policy, rec.domain)} "
          f"repairs={list(rec.repairs)}")

# %% [markdown]
# ## How much does the adversary learn?
#
# Re-running the filter while keeping every intermediate belief shows the
# probability it assigns to the true cell.

# %%
state = TraceState.start(grid, model, policy, start)
rng = np.random.default_rng(1)
hits = []
for s in truth:
    recs, state = release_trace(state, [s], 0.5, "ppim", rng)
    hits.append(state.belief[s])
print("mean posterior mass on the true cell:", round(float(np.mean(hits)), 3))
print("uniform guess would give:", round(1 / grid.n, 3))

# %% [markdown]
# ## Composition

# %%
total, graph = compose(state.ledger)
print("total epsilon:", total)
print("edges guaranteed over the whole trace:", len(graph.edges), "of", len(policy.edges))
