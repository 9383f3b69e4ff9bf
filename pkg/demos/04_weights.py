# %% [markdown]
# # Multi-center weights
#
# The weighted spaces measure functions against sum_j <x - P_j>^-s.  Near a
# center one term dominates; far away all k terms add up.  The step function
# gamma counts how many centers sit at comparable distance.

# %%
import numpy as np

from yamabe_blowup import make_lattice
from yamabe_blowup.weighted import (certify_interaction, certify_step_lemma, dist_min,
                                    embedding_ratios, gamma, weight_sum)

lat = make_lattice(5, 8, 16.0)
x = np.zeros((4, 5))
x[:, 2] = [1.0, 10.0, 100.0, 1e4]
d = dist_min(x, lat)
print("axis ratio:", np.round(weight_sum(x, 3.0, lat) / (gamma(d, 8, 16.0) * d ** -3.0), 4))
print("far-field limit k/([k/2]+1) =", 8 / 5)

# %%
for n, s in ((5, 4.0), (25, 12.5)):
    _, summ = certify_step_lemma(n, [4, 8, 16], [2.0, 8.0], s)
    print(f"step lemma n={n}: constants {np.round(summ['constants'], 2)} drift {summ['drift']:.2f}")

# %% [markdown]
# The interaction inequalities with and without the extra factor k: the
# plain form is valid but loose by 1/k, the sharp form is stable in k.

# %%
for sharp in (False, True):
    m = [certify_interaction(k, 8.0 * k, 2.5, 3.5, 1.0, sharp=sharp)[2].max_ratio for k in (4, 8, 16)]
    print("sharp" if sharp else "plain", np.round(m, 4))

# %%
for k, r in ((4, 8.0), (8, 64.0), (16, 512.0)):
    row = embedding_ratios(5, k, r)
    print(f"k={k:2d} r={r:6.0f}  stated {row['ratio_stated']:.3f}  diagonal kept {row['ratio_diagonal']:.3f}")
