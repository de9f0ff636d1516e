# %% [markdown]
# # AV@R and the spike-block Kusuoka family on exp(1)
#
# The tail column compares the computed ``phi_hat(X 1{X > N})`` with the limit
# term ``1 + e/(e-1) e^{-N} (1 + N)`` and with the largest finite member.

# %%
from __future__ import annotations

import math

from lebex.extension_engine import hat_eval_nonneg, tail_functional
from lebex.functional_catalog import KusuokaSup, SpikeBlockFamily, avar
from lebex.membership_lab import classify
from lebex.space_model import Exponential, QuantileRV

X = QuantileRV(Exponential(1.0))
spec = KusuokaSup(SpikeBlockFamily())

# %%
for lam in (0.01, 0.1, 0.5, 1.0):
    print(f"v_{lam}(X) = {avar(lam, X):.10f}   1 - log(lam) = {1 - math.log(lam):.10f}")

# %%
h = hat_eval_nonneg(spec, X)
print(f"phi_hat(X) = {h.value:.10f}   4 - e/(e-1) = {4 - math.e / (math.e - 1):.10f}")

# %%
ratio = math.e / (math.e - 1)
print(" N   computed      limit term    argmax member")
for N in range(1, 11):
    r = tail_functional(spec, X, 1, N)
    _, arg = spec.sup_detail(X.truncate_tail(N))
    print(f"{N:2d}   {r.value:.8f}   {1 + ratio * math.exp(-N) * (1 + N):.8f}   {arg if arg is not None else 'limit'}")

# %%
print(classify(spec, X).cls)
