"""
Exact probabilities on the repair model
=======================================

The repair model has six component types with 3, 4, ..., 8 components and
one failure and one repair command per type: 12 commands and 40,320
reachable states. That is small enough for an exact answer on the embedded
chain, which the simulation demos use as ground truth.
"""

# %%
import time

from cesmc import build_state_space, exact_probability, load_model, model_path, parse_property

model = load_model(model_path("repair"))
prop = parse_property("X ((! init) U failure)", model)

t = time.perf_counter()
chain = build_state_space(model)
print(f"{chain.size} states in {time.perf_counter() - t:.1f}s")

# %%
# Value iteration is the default solver. The linear solve of the same until
# equations is an independent check; the two agree to about 1e-15.
p_it, resid = exact_probability(chain, prop, return_residual=True)
p_lin = exact_probability(chain, prop, method="linear")
print(p_it, p_lin, resid)

# %%
# The property reads: leave the all-working state, then reach a state where
# some type has no working component before returning to it. Without
# tilting, a crude Monte Carlo run would need on the order of 1e9 traces to
# see a handful of such paths.
print(f"expected hits per 1e6 untilted traces: {p_it * 1e6:.3f}")
