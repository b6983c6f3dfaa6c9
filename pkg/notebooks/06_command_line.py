# %% [markdown]
# # The command-line tool
#
# Everything above is also available as `pglp <subcommand>`. Outputs are
# JSON, JSONL or CSV and are byte-identical for the same `--seed`.

# %%
import json
import subprocess
import sys
import tempfile
from pathlib import Path

DATA = Path(__file__).resolve().parent / "data" if "__file__" in globals() else Path("data")
OUT = Path(tempfile.mkdtemp())


def pglp(*args):
    proc = subprocess.run([sys.executable, "-m", "pglp.cli", *map(str, args)], capture_output=True, text=True)
    shown = " ".join(a.name if isinstance(a, Path) else str(a) for a in args)
    print(f"$ pglp {shown}\n[exit {proc.returncode}]")
    return proc.stdout + proc.stderr


common = ["--map", DATA / "map.json", "--policy", DATA / "g_k9.json"]


def brief(report):
    # drop the long per-node list down to the cells that are possible at all
    report["nodes"] = [n for n in report["nodes"] if n["status"] != "excluded"]
    report.pop("graph_edges", None)
    return "\n".join(f"  {k}: {v}" for k, v in report.items())


# %% [markdown]
# `detect` and `repair` report per-cell status, hull areas and chosen edges.

# %%
print(brief(json.loads(pglp("detect", *common, "--domain", DATA / "domain.json"))))

# %%
print(brief(json.loads(pglp("repair", *common, "--domain", DATA / "domain.json", "--strategy", "min-area"))))

# %% [markdown]
# `release` writes one JSON record per timestamp and, optionally, the ledger.

# %%
out = pglp("release", *common, "--markov", DATA / "markov.json", "--trajectory", DATA / "trajectory.csv",
           "--epsilon", 0.5, "--seed", 7, "--summary", OUT / "ledger.json")
records = [json.loads(line) for line in out.splitlines()]
print("released cells:", [r["released"] for r in records])
print("record fields:", sorted(records[0]))
ledger = json.loads((OUT / "ledger.json").read_text())
print("total epsilon:", ledger["total_epsilon"], " guaranteed edges:", len(ledger["intersection_edges"]))

# %%
print(pglp("simulate", "--markov", DATA / "markov.json", "--length", 5, "--seed", 7, "--user", 3))

# %%
print(pglp("experiment", "--config", DATA / "experiment.toml", "--epsilon", 1.0, "--mechanism", "ppim"))

# %% [markdown]
# Errors come back as JSON on stderr with a stable code and exit status.

# %%
print(pglp("release", *common, "--markov", DATA / "markov.json", "--trajectory", DATA / "missing.csv"))
