"""
From trained network to rules
=============================

The trained model is discretized, constants are folded away and the
remaining gates simplified. What is left can be read as text or drawn.
"""

# %%
import numpy as np
from dlnkit import Column, FeatureMatrix, SteFlags, TrainConfig, build, hard_predict, train
from dlnkit.circuit import count_ops, discretize, evaluate, export_text, fold_constants, simplify_rules

rng = np.random.default_rng(3)
x = rng.random((1000, 2))
y = ((x[:, 0] > 0.5) & (x[:, 1] > 0.5)).astype(int)
data = FeatureMatrix(x, [Column("x0"), Column("x1")], y, ["no", "yes"])
model = train(build(TrainConfig(hidden_sizes=[16], group_size=10, learning_rate=0.02,
                                ste=SteFlags(True, True, True)), data), data)

# %% Each stage and its cost
raw = discretize(model)
folded = fold_constants(raw)
simple = simplify_rules(folded)
for name, c in [("discretized", raw), ("folded", folded), ("simplified", simple)]:
    r = count_ops(c)
    print(f"{name:<12} gates={r.n_gates:3d} comparators={r.n_comparators:3d} OPs={r.total_ops}")

# %% Same predictions as the network
probe = rng.random((5000, 2))
print("agree:", np.array_equal(hard_predict(model, probe)[0], evaluate(simple, probe)[0]))

# %%
print(export_text(simple))
