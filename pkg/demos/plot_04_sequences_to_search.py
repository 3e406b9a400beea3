"""
Sequences, features and a small search
======================================

Raw sequences are summarized into fourteen statistics, cleaned and scaled,
and a short random search picks a configuration by cross-validation.
"""

# %%
import numpy as np
from dlnkit import SequenceDataset, extract_basic_features, preprocess
from dlnkit.hpo import SearchSpace, config_stats, run_search

rng = np.random.default_rng(0)
t = np.linspace(0, 1, 64)
waves = [np.sin(2 * np.pi * rng.uniform(2, 4) * t) + 0.3 * rng.normal(size=64) for _ in range(60)]
ramps = [t * rng.uniform(1, 2) + 0.3 * rng.normal(size=64) for _ in range(60)]
seqs = np.array(waves + ramps)
labels = np.array([0] * 60 + [1] * 60)
order = rng.permutation(120)
ds = SequenceDataset(seqs[order], labels[order], ["wave", "ramp"])

# %%
fm = extract_basic_features(ds)
tr, te = preprocess(fm.subset(np.arange(80)), fm.subset(np.arange(80, 120)))
print(len(fm.columns), "features ->", len(tr.columns), "columns after preprocessing")

# %% Four trials, short training
space = SearchSpace.for_data(tr, epochs=(10,), width_multiplier=(1,))
best, records = run_search(space, tr, n_trials=4, seed=0)
for r in records:
    print(r.trial, round(r.cv_score, 3), r.config.hidden_sizes, r.config.subset_gate_num)

# %%
print(config_stats([best]).render())
