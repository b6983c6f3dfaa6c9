# %% [markdown]
# # Isolated cells and graph repair
#
# When the adversary can rule cells out, a cell may lose every policy
# neighbour. It is still safe if the noise shape of the remaining graph
# already makes it look like some other possible cell. Otherwise it is
# isolated, and we add the one edge that grows the noise hull the least.

# %%
import json
from pathlib import Path

from pglp import GridMap, Status, classify, is_isolated, repair_min_area, repair_nearest, resolve
from pglp.exposure import candidate_areas, constrained_hull
from pglp.policy import load_policy

DATA = Path(__file__).resolve().parent / "data" if "__file__" in globals() else Path("data")
grid = GridMap.load(DATA / "map.json")
g = load_policy(DATA / "g_k9.json", grid)
domain = set(json.loads((DATA / "domain.json").read_text())["domain"])
print("possible cells:", sorted(domain))

# %%
statuses = classify(g, domain)
for cell, st in sorted(statuses.items()):
    if cell in domain:
        extra = ""
        if st is Status.DISCONNECTED:
            extra = " isolated" if is_isolated(grid, g, domain, cell) else " covered by the hull"
        print(f"cell {cell:3d} {st.value}{extra}")

# %% [markdown]
# ## Choosing a repair edge
#
# Each candidate partner gives a hull area; the smallest wins, ties going to
# the lower cell index. The nearest-cell baseline is shown for comparison.

# %%
s = 13
print({k: round(v, 4) for k, v in candidate_areas(grid, g, domain, s).items()})
best = repair_min_area(grid, g, domain, s)
near = repair_nearest(grid, g, domain, s)
for name, rep in (("min-area", best), ("nearest", near)):
    K = constrained_hull(grid, rep.graph.restrict(domain))
    print(f"{name:8s} adds {rep.edge}, hull area {K.area:.4f} km^2")

# %% [markdown]
# `resolve` handles every disconnected cell in index order and reports what it did.

# %%
res = resolve(grid, g, domain)
print("repairs:", res.repairs)
print("isolated before repair:", [c for c, st in res.statuses.items() if st is Status.ISOLATED])
