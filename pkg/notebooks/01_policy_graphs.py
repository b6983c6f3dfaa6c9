# %% [markdown]
# # Maps and policy graphs
#
# A map is a grid of square cells indexed row by row from the origin corner.
# A policy graph says which pairs of cells must stay indistinguishable:
# every edge is a pair the released location must not tell apart.

# %%
from pathlib import Path

import numpy as np

from pglp import GridMap, PolicyGraph, build_block, build_g1, build_poi, graph_distance, intersect, restrict
from pglp.policy import load_policy

DATA = Path(__file__).resolve().parent / "data" if "__file__" in globals() else Path("data")
grid = GridMap.load(DATA / "map.json")
print(grid)
print("cell 23 sits at", grid.location_query(23), "km")
print("a point near (1.1, 0.5) km snaps to", grid.snap((1.1, 0.5)))

# %% [markdown]
# ## Built-in graphs
#
# `build_g1` joins every cell to its eight surrounding cells. `build_block`
# tiles the map into k x k blocks and fully connects each block, so cells in
# different blocks are never protected against each other.

# %%
g1 = build_g1(grid)
g9 = load_policy(DATA / "g_k9.json", grid)
g25 = build_block(grid, 5)
for name, g in [("G1", g1), ("G_k9", g9), ("G_k25", g25)]:
    sizes = sorted({len(c) for c in g.components()})
    print(f"{name:5s} edges={len(g.edges):4d} component sizes={sizes}")


def show_components(g, grid):
    labels = np.empty(grid.n, dtype=int)
    for k, comp in enumerate(sorted(g.components(), key=min)):
        labels[list(comp)] = k
    for row in reversed(range(grid.height)):
        print(" ".join(f"{labels[grid.index(c, row)]:2d}" for c in range(grid.width)))


show_components(g9, grid)

# %% [markdown]
# Graph distance counts hops; the protection between two cells degrades
# with it. Under G1 it is the Chebyshev distance in cells.

# %%
a, b = grid.index(0, 0), grid.index(3, 1)
print("d_G1 =", graph_distance(g1, a, b), " d_Gk9 =", graph_distance(g9, a, b))

# %% [markdown]
# ## Points of interest
#
# `build_poi` connects cells that share a category inside the same 6 x 6
# region, so a released location keeps its category but hides which shop.

# %%
cats = {grid.index(1, 1): "restaurant", grid.index(4, 2): "restaurant", grid.index(2, 5): "shop",
        grid.index(3, 3): "shop", grid.index(8, 8): "restaurant"}
poi = build_poi(grid, cats, region=6)
print(sorted(poi.edges))

# %% [markdown]
# ## Restriction and intersection
#
# When an adversary already rules cells out, only edges inside the remaining
# domain still mean anything. Intersection is how guarantees compose over time.

# %%
domain = {0, 1, 2, 10, 11, 55}
gc = restrict(g9, domain)
print("edges left:", sorted(gc.edges), " components:", sorted(map(sorted, gc.components())))
print("G1 & G_k9 keeps", len(intersect(g1, g9).edges), "edges")
print(PolicyGraph(4, [(0, 1), (2, 3)]).connected_component(2))
