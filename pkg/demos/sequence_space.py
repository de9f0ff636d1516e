# %% [markdown]
# # Spike family on the geometric model
#
# ``X(k) = k`` under ``P({k}) = 2^{-k}`` with the measures
# ``Q_n = (1 - 1/n) delta_1 + (1/n) delta_n``.  Every tail carries the same
# value, so ``X`` lies in the heart but not in the Lebesgue domain.

# %%
from __future__ import annotations

from fractions import Fraction

from lebex.extension_engine import hat_eval_nonneg, tail_profile
from lebex.functional_catalog import SpikeFamily
from lebex.membership_lab import attainment_check, classify
from lebex.space_model import RATIONAL, AtomicModel, AtomicRV

geo = AtomicModel.geometric(64, RATIONAL)
fam = SpikeFamily(geo)
X = AtomicRV.from_sequence(geo)

# %%
for n in (2, 5, 100):
    print(f"E_Q{n}[X] = {fam.spike_expectation(X, n)}")
for a in (Fraction(1, 2), 1, 3):
    r = hat_eval_nonneg(fam, X.scale(a))
    print(f"phi_hat({a} X) = {r.value}  ({r.note})")

# %%
prof = tail_profile(fam, X, alphas=(Fraction(1, 2), 1, 3), Ns=(1, 4, 16, 20))
for a, v in prof.verdicts.items():
    print(f"alpha = {a}: tail {v}, values {[str(r.value) for r in prof.row(a)]}")

# %%
v = classify(fam, X)
att = attainment_check(fam, X, budget=16, seed=0).attainment
print(v.cls, "certifying" if v.certifying else "", v.note)
print(f"best dual value {att['best']} against {att['hat']}, gap {att['gap']}")
