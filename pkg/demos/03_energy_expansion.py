# %% [markdown]
# # Energy of a bubble necklace
#
# The energy of k bubbles in the perturbed metric splits into the flat energy,
# a first-order term that vanishes by structure, and a second-order term
# carrying the sign.  At the canonical scale t = e^-k the prefactors underflow
# doubles, so every term travels as (mantissa, power of t).

# %%
import math

from yamabe_blowup import HField, MultiBubble, canonical_lattice, canonical_weyl, make_lattice
from yamabe_blowup.energy import (I0, energy_breakdown, exponent_report, interaction_energy,
                                  volume_scan)

H = HField(-7.040728686322099, canonical_weyl(25))
for k in (3, 6, 12):
    lat = canonical_lattice(25, k)
    bd = energy_breakdown(MultiBubble.on_lattice(lat), lat, H, n_samples=128)
    print(f"k={k:2d}  G1 = {bd.G1}   G2 = {bd.G2}")

# %%
rep = exponent_report(25, 1)
print("admissible at n=25, c0=1:", rep["admissible"], " weight window", rep["weight_window"])
print("admissible at n=18:", exponent_report(18, 1)["admissible"])

# %% [markdown]
# ## Flat interaction and volume
#
# Two bubbles at distance D attract with energy ~ -(n-2) omega D^(2-n); the
# volume of the k-bubble sum grows linearly in k with slope V1.

# %%
n = 6
for D in (20.0, 40.0, 80.0):
    mb = MultiBubble.on_lattice(make_lattice(n, 2, D / 2))
    v = interaction_energy(mb)["value"]
    print(f"D = {D:5.1f}  I - 2 I0 = {v: .4e}   D^4 (I - 2 I0) = {v * D ** 4: .3f}")
print("prediction:", -(n - 2) * math.pi ** 3)

scan = volume_scan(n, range(2, 8))
print("volume slope / V1 - 1 =", f"{scan['slope_rel_err']:.1e}", " I0 =", I0(n))
