"""Independent oracles and fixture builders shared by the test modules."""
import itertools
import math

import numpy as np

from dlnkit.data import Column, FeatureMatrix, ONEHOT
from dlnkit.layers import LogicLayer, SteFlags, SumLayer, ThresholdLayer
from dlnkit.network import DlnModel, FeatureMeta, TrainConfig

# Truth columns 00 01 10 11 transcribed from the operator table
TABLE_TRUTH = [
    (0, 0, 0, 0), (0, 0, 0, 1), (0, 0, 1, 0), (0, 0, 1, 1),
    (0, 1, 0, 0), (0, 1, 0, 1), (0, 1, 1, 0), (0, 1, 1, 1),
    (1, 0, 0, 0), (1, 0, 0, 1), (1, 0, 1, 0), (1, 0, 1, 1),
    (1, 1, 0, 0), (1, 1, 0, 1), (1, 1, 1, 0), (1, 1, 1, 1),
]

# Real-valued forms written out independently of the library's coefficient table
SOFT_FORMS = [
    lambda a, b: 0.0,
    lambda a, b: a * b,
    lambda a, b: a - a * b,
    lambda a, b: a,
    lambda a, b: b - a * b,
    lambda a, b: b,
    lambda a, b: a + b - 2 * a * b,
    lambda a, b: a + b - a * b,
    lambda a, b: 1 - (a + b - a * b),
    lambda a, b: 1 - (a + b - 2 * a * b),
    lambda a, b: 1 - b,
    lambda a, b: 1 - b + a * b,
    lambda a, b: 1 - a,
    lambda a, b: 1 - a + a * b,
    lambda a, b: 1 - a * b,
    lambda a, b: 1.0,
]


def scalar_sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def scalar_softmax(values):
    m = max(values)
    e = [math.exp(v - m) for v in values]
    s = sum(e)
    return [v / s for v in e]


def scalar_logic_neuron(w, u, v, gate_ids, link_a, link_b, x, tau):
    """Nested softmax mixture for one neuron with loops over plain floats."""
    p = scalar_softmax([w[k] / tau for k in gate_ids])
    alpha = scalar_softmax([u[j] / tau for j in link_a])
    beta = scalar_softmax([v[j] / tau for j in link_b])
    a = sum(al * x[j] for al, j in zip(alpha, link_a))
    b = sum(be * x[j] for be, j in zip(beta, link_b))
    return sum(pk * SOFT_FORMS[k](a, b) for pk, k in zip(p, gate_ids))


def scalar_sum(S, x, tau):
    n_in, n_cls = len(S), len(S[0])
    return [sum(scalar_sigmoid(S[j][c] / tau) * x[j] for j in range(n_in)) for c in range(n_cls)]


def threshold_task(kind, n, seed):
    rng = np.random.default_rng(seed)
    x = rng.random((n, 2))
    a, b = x[:, 0] > 0.5, x[:, 1] > 0.5
    y = (a & b) if kind == "and" else (a ^ b)
    return FeatureMatrix(x, [Column("x0"), Column("x1")], y.astype(np.int64), ["0", "1"])


def random_model(rng, n_cont=2, n_bits=0, group_size=2, hidden=(4,), num_classes=2,
                 concat=False, gate_num=16, link_num=16, scale=1.0, ste=None,
                 bias_range=(-0.2, 1.2)):
    """A network with random parameters (no training) for structural tests."""
    cols = [Column(f"c{i}") for i in range(n_cont)] + \
           [Column(f"b{i}", ONEHOT, "g") for i in range(n_bits)]
    t = n_cont * group_size
    threshold = ThresholdLayer(
        rng.uniform(*bias_range, t),
        rng.choice([-1.0, 1.0], t) * rng.uniform(0.5, 3.0, t),
        np.repeat(np.arange(n_cont), group_size),
        group_size,
    )
    base = t + n_bits
    layers, in_dim = [], base
    for i, w in enumerate(hidden):
        if i > 0 and concat:
            in_dim += base
        layer = LogicLayer.init(in_dim, w, gate_num, link_num, rng)
        layer.gate_weights = rng.normal(0, scale, layer.gate_weights.shape)
        layer.link_a_weights = rng.normal(0, scale, layer.link_a_weights.shape)
        layer.link_b_weights = rng.normal(0, scale, layer.link_b_weights.shape)
        layers.append(layer)
        in_dim = w
    summ = SumLayer(rng.normal(0, 2.0 * scale, (in_dim, num_classes)))
    cfg = TrainConfig(hidden_sizes=list(hidden), group_size=group_size, concat_input=concat,
                      subset_gate_num=gate_num, subset_link_num=link_num,
                      ste=ste or SteFlags())
    meta = FeatureMeta(cols, [str(c) for c in range(num_classes)])
    bits = np.arange(n_cont, n_cont + n_bits, dtype=np.int64)
    return DlnModel(threshold, layers, summ, cfg, float(rng.uniform(0.1, 1.0)), meta, bits)


def probe_grid(model):
    """Feature rows covering every cell of every comparator and every bit pattern.

    For each continuous feature the candidate values are 0, 1, every threshold
    and the midpoints between neighbouring thresholds, which realizes every
    reachable combination of that feature's comparator outcomes.
    """
    per_feature = []
    for f, col in enumerate(model.feature_meta.columns):
        if f in set(model.bit_index.tolist()):
            per_feature.append([0.0, 1.0])
            continue
        b = model.threshold.bias[model.threshold.input_index == f]
        pts = sorted({0.0, 1.0, *[float(v) for v in b if 0.0 <= v <= 1.0]})
        mids = [(lo + hi) / 2 for lo, hi in zip(pts[:-1], pts[1:])]
        per_feature.append(sorted(set(pts) | set(mids)))
    return np.array(list(itertools.product(*per_feature)), dtype=np.float64)


def central_differences(f, arr, h=1e-5):
    """Gradient of scalar ``f()`` w.r.t. every entry of ``arr`` (mutated in place, restored)."""
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = arr[i]
        arr[i] = old + h
        fp = f()
        arr[i] = old - h
        fm = f()
        arr[i] = old
        grad[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic, numeric, floor=1e-8):
    """Elementwise |a - n| / max(|a|, |n|), with ``floor`` guarding exact zeros."""
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
