"""
Soft and hard two-input operators
=================================

Every two-input Boolean function is a bilinear polynomial in its inputs.
Evaluated on {0, 1} it is the truth table; anywhere in between it is a
smooth relaxation that gradients can flow through.
"""

# %%
import numpy as np
from dlnkit import logic_kernel as lk

for op in lk.OPERATORS:
    print(f"{op.op_id:2d} {op.name:<10} truth={op.truth}  cost={op.cost}")

# %% The relaxation agrees with the table at the corners
for a, b in [(0, 0), (0, 1), (1, 0), (1, 1)]:
    print(a, b, lk.soft_logic(6, a, b), lk.hard_logic(6, bool(a), bool(b)))

# %% Between the corners XOR is a saddle
a = np.linspace(0, 1, 5)
print(np.round(lk.soft_logic_array(6, a[:, None], a[None, :]), 3))
