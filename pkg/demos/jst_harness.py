# %% [markdown]
# # Four-condition cross-check
#
# Each instance gets proxies for the Lebesgue property, uniform integrability
# of the level sets, attainment, and attainment by the closed-form maximizer.

# %%
from __future__ import annotations

from lebex.membership_lab import CONDITIONS, jst_crosscheck, jst_suite

res = jst_crosscheck(None, jst_suite(), budget=32, seed=0)

# %%
print(f"{'instance':36s} " + " ".join(f"{c[:10]:>10s}" for c in CONDITIONS))
for rep in res["instances"]:
    cells = [str(rep.conditions[c]["pass"]) + "/" + rep.conditions[c]["grade"][:4] for c in CONDITIONS]
    print(f"{rep.label:36s} " + " ".join(f"{x:>10s}" for x in cells))
print("consistent:", res["consistent"], "certifying consistent:", res["certifying_consistent"])

# %%
for key, cell in res["matrix"].items():
    a, b = key.split("|")
    if a < b:
        print(f"{a:>18s} vs {b:<18s} {cell['agree']}/{cell['both_definite']}")
