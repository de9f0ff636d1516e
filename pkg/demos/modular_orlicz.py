# %% [markdown]
# # Modular with Phi(x) = e^|x| - 1
#
# ``E[e^{a X}]`` is finite exactly for ``a < 1`` when ``X ~ exp(1)``; the
# variable ``2X`` is therefore finite for ``alpha < 1/2`` and infinite beyond.

# %%
from __future__ import annotations

from lebex.extension_engine import gauge_norm_result
from lebex.functional_catalog import Modular
from lebex.losses import young_from_json
from lebex.membership_lab import classify, lebesgue_probe, truncation_interchange_check
from lebex.space_model import Exponential, QuantileRV

mod = Modular(young_from_json("exp"))
X = QuantileRV(Exponential(1.0)).scale(2.0)

# %%
v = classify(mod, X)
for a, r in v.finiteness:
    print(f"alpha = {a:g}: {r.status} {r.value}")
print(v.cls, v.note)

# %%
rec = lebesgue_probe(mod, X, probes=("tail",), alphas=(1,)).lebesgue_probes[0]
print(rec["probe"], rec["values"], "target", rec["target"], "pass", rec["pass"])

# %%
g = gauge_norm_result(mod, X)
print(f"||X|| = {g.value:.8f} after {g.steps} evaluations")
ic = truncation_interchange_check(mod, X.shift(-1.0))
print("interchange for 2X - 1:", ic.ok, ic.discrepancy)
