"""
Learning XOR of two thresholds
==============================

Two uniform features, label = (x0 > 0.5) xor (x1 > 0.5). A single hidden
logic layer is enough, provided the comparators land near 0.5.
"""

# %%
import numpy as np
from dlnkit import Column, FeatureMatrix, SteFlags, TrainConfig, balanced_accuracy, build, hard_predict, train

def make(n, seed):
    x = np.random.default_rng(seed).random((n, 2))
    y = ((x[:, 0] > 0.5) ^ (x[:, 1] > 0.5)).astype(int)
    return FeatureMatrix(x, [Column("x0"), Column("x1")], y, ["0", "1"])

tr, te = make(1000, 0), make(1000, 1)

# %% Straight-through estimators on every layer keep training and inference aligned
cfg = TrainConfig(hidden_sizes=[16], group_size=10, learning_rate=0.02, epochs=40,
                  ste=SteFlags(True, True, True), seed=1)
model = train(build(cfg, tr), tr)
print("loss", [round(h["loss"], 3) for h in model.history[::8]])

# %%
pred, _ = hard_predict(model, te)
print("test balanced accuracy", balanced_accuracy(te.labels, pred))

# %% Thresholds that ended up inside [0, 1]
b = model.threshold.bias
print(np.round(np.sort(b[(b >= 0) & (b <= 1)]), 3))
