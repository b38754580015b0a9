"""
A two-command chain by hand
===========================

The smallest shipped model has one variable and two competing commands out
of the initial state, ``a`` with rate 1 and ``b`` with rate 3. Both targets
are absorbing, so every trace has exactly one step. This makes every number
below checkable with pencil and paper.
"""

# %%
# Load the model and a property. ``F (x = 2)`` holds on traces that take
# command ``b``, which happens with probability 3/4.
import numpy as np

from cesmc import (build_state_space, ce_update, exact_probability, is_estimate, load_model,
                   mc_estimate, model_path, normalize, parse_property, simulate_batch)
from cesmc import rng

model = load_model(model_path("tiny-t1"))
prop = parse_property("F (x = 2)", model)
print(model.command_names)

# %%
# The exact oracle enumerates the three reachable states.
chain = build_state_space(model)
print(chain.size, exact_probability(chain, prop))

# %%
# Crude Monte Carlo samples the untilted chain.
print(mc_estimate(model, prop, 10_000, seed=0))

# %%
# Tilting with ``lam = (3, 1)`` makes ``a`` and ``b`` equally likely. A
# ``b`` trace then carries the likelihood ratio (1/1) * (6/4) = 1.5, and the
# weighted estimate stays unbiased.
print(is_estimate(model, [3.0, 1.0], prop, 10_000, seed=0))

# %%
# One cross-entropy update from the untilted chain. Every satisfying trace
# fires ``b`` once and accumulates ``D_b = 3/4``, so the new parameter is
# ``1 / (3/4) = 4/3``. Command ``a`` never fires on a satisfying trace and is
# reported as unseen.
batch = simulate_batch(model, [1.0, 1.0], prop, 1000, master_seed=0, stream=rng.CE)
raw, seen = ce_update(batch)
print(raw, seen)

# %%
# Halving the unseen parameter and renormalising to the command count gives
# the next vector. Repeating this drives ``lam_a`` down geometrically, which
# is the zero-variance limit for this model.
lam = normalize(np.where(seen, raw, 0.5), 2.0, fixed=~seen)
print(lam)
