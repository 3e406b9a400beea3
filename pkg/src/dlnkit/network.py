"""Assembling, training and serializing a differentiable logic network."""
from __future__ import annotations

import base64
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp, softmax

from .data import CONTINUOUS, Column, FeatureMatrix, Preprocessor
from .layers import LogicLayer, SteFlags, StructureError, SumLayer, ThresholdLayer, check_tau

FORMAT_NAME = "dlnkit-model"
FORMAT_VERSION = 1

GATE_OPTIONS = (16, 8, 4)
LINK_OPTIONS = (16, 8, 4, 2, 1)

FUNCTION_PARAMS = ("bias", "slope", "gate_weights")
CONNECTION_PARAMS = ("link_a_weights", "link_b_weights", "link_weights")


class ConfigError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    def __init__(self, message, offset=None):
        super().__init__(message if offset is None else f"{message} (at offset {offset})")
        self.offset = offset


class ModelVersionError(ModelFormatError):
    pass


@dataclass
class TrainConfig:
    hidden_sizes: list[int] = field(default_factory=lambda: [32])
    group_size: int = 10
    phase_unified: bool = True
    ste: SteFlags = field(default_factory=SteFlags)
    subset_gate_num: int = 16
    subset_link_num: int = 16
    concat_input: bool = False
    learning_rate: float = 0.02
    epochs: int = 40
    batch_size: int = 64
    tau_start: float = 1.0
    tau_end: float = 0.05
    seed: int = 0

    def validate(self) -> "TrainConfig":
        if not self.hidden_sizes:
            raise ConfigError("hidden_sizes must name at least one logic layer")
        if any(int(w) < 1 for w in self.hidden_sizes):
            raise ConfigError(f"logic layer widths must be positive: {self.hidden_sizes}")
        if self.group_size < 1:
            raise ConfigError("group_size must be >= 1")
        if self.subset_gate_num not in GATE_OPTIONS:
            raise ConfigError(f"subset_gate_num must be one of {GATE_OPTIONS}")
        if self.subset_link_num not in LINK_OPTIONS:
            raise ConfigError(f"subset_link_num must be one of {LINK_OPTIONS}")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")
        if not (self.tau_start >= self.tau_end > 0):
            raise ConfigError("need tau_start >= tau_end > 0")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = [int(w) for w in self.hidden_sizes]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        ste = d.pop("ste", {})
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "hidden_sizes" in d:
            d["hidden_sizes"] = [int(w) for w in d["hidden_sizes"]]
        return cls(ste=SteFlags(**ste) if isinstance(ste, dict) else ste, **d)


_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def format_config(config: TrainConfig) -> str:
    """``key = value`` lines; STE flags flatten to ``ste_threshold`` etc."""
    d = config.to_dict()
    ste = d.pop("ste")
    lines = []
    for k, v in d.items():
        if k == "hidden_sizes":
            v = ",".join(str(w) for w in v)
        elif isinstance(v, bool):
            v = str(v).lower()
        elif isinstance(v, float):
            v = repr(v)
        lines.append(f"{k} = {v}")
    lines.extend(f"ste_{k} = {str(v).lower()}" for k, v in ste.items())
    return "\n".join(lines) + "\n"


def parse_config(text: str, base: TrainConfig | None = None) -> TrainConfig:
    """Inverse of :func:`format_config`; unspecified keys keep ``base`` values."""
    d = (base or TrainConfig()).to_dict()
    types = {k: type(v) for k, v in d.items()}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        try:
            if key.startswith("ste_") and key[4:] in d["ste"]:
                d["ste"][key[4:]] = _BOOL[value.lower()]
            elif key == "hidden_sizes":
                d[key] = [int(w) for w in value.replace(" ", "").split(",") if w]
            elif key not in types or key == "ste":
                raise ConfigError(f"config line {lineno}: unknown key {key!r}")
            elif types[key] is bool:
                d[key] = _BOOL[value.lower()]
            else:
                d[key] = types[key](value)
        except (KeyError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"config line {lineno}: bad value {value!r} for {key}") from None
    return TrainConfig.from_dict(d).validate()


@dataclass
class FeatureMeta:
    columns: list[Column]
    classes: list[str]
    preprocessor: Preprocessor | None = None

    def to_dict(self):
        return {
            "columns": [c.to_dict() for c in self.columns],
            "classes": list(self.classes),
            "preprocessor": None if self.preprocessor is None else self.preprocessor.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        pre = d.get("preprocessor")
        return cls([Column(**c) for c in d["columns"]], list(d["classes"]),
                   None if pre is None else Preprocessor.from_dict(pre))


@dataclass
class DlnModel:
    threshold: ThresholdLayer
    logic_layers: list[LogicLayer]
    sum: SumLayer
    config: TrainConfig
    final_tau: float
    feature_meta: FeatureMeta
    bit_index: np.ndarray  # feature columns that enter the logic layers directly
    history: list[dict] = field(default_factory=list)

    @property
    def num_features(self) -> int:
        return len(self.feature_meta.columns)

    @property
    def num_classes(self) -> int:
        return self.sum.num_classes

    @property
    def binarized_width(self) -> int:
        return self.threshold.width + len(self.bit_index)

    def parameters(self) -> dict[str, np.ndarray]:
        params = {"threshold.bias": self.threshold.bias, "threshold.slope": self.threshold.slope}
        for i, layer in enumerate(self.logic_layers):
            params[f"logic{i}.gate_weights"] = layer.gate_weights
            params[f"logic{i}.link_a_weights"] = layer.link_a_weights
            params[f"logic{i}.link_b_weights"] = layer.link_b_weights
        params["sum.link_weights"] = self.sum.link_weights
        return params


# --------------------------------------------------------------------------
# construction


def build(config: TrainConfig, train_data: FeatureMatrix, num_classes: int | None = None) -> DlnModel:
    """Threshold layer on continuous columns, logic layers, sum layer; thresholds tree-initialized."""
    config.validate()
    num_classes = train_data.num_classes if num_classes is None else num_classes
    if num_classes < 2:
        raise ConfigError("need at least two classes")
    cols = train_data.columns
    if not cols:
        raise ConfigError("need at least one feature column")
    continuous = [i for i, c in enumerate(cols) if c.kind == CONTINUOUS]
    bits = np.array([i for i, c in enumerate(cols) if c.kind != CONTINUOUS], dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[0])

    threshold = ThresholdLayer.from_data(train_data.values, train_data.labels, continuous,
                                         config.group_size)
    base = threshold.width + len(bits)
    layers = []
    in_dim = base
    for i, width in enumerate(config.hidden_sizes):
        if i > 0 and config.concat_input:
            in_dim += base
        layers.append(LogicLayer.init(in_dim, int(width), config.subset_gate_num,
                                      config.subset_link_num, rng))
        in_dim = int(width)
    summ = SumLayer.init(in_dim, num_classes, rng)
    meta = FeatureMeta(list(cols), list(train_data.classes), train_data.scaling)
    return DlnModel(threshold, layers, summ, config, float(config.tau_start), meta, bits)


# --------------------------------------------------------------------------
# forward / backward


def _as_matrix(model: DlnModel, x) -> np.ndarray:
    x = x.values if isinstance(x, FeatureMatrix) else np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2 or x.shape[1] != model.num_features:
        raise StructureError(f"expected {model.num_features} features, got shape {x.shape}")
    return x


def forward(model: DlnModel, x, tau: float):
    """Soft forward on a batch; returns ``(scores, caches)`` for ``backward``."""
    tau = check_tau(tau)
    x = _as_matrix(model, x)
    ste = model.config.ste
    z_thr, c_thr = model.threshold.soft_forward(x, tau, ste.threshold)
    base = np.hstack([z_thr, x[:, model.bit_index]])
    h = base
    caches = []
    for i, layer in enumerate(model.logic_layers):
        inp = np.hstack([h, base]) if (i > 0 and model.config.concat_input) else h
        h, c = layer.soft_forward(inp, tau, ste.logic)
        caches.append(c)
    scores, c_sum = model.sum.soft_forward(h, tau, ste.sum)
    return scores, (c_thr, caches, c_sum)


def backward(model: DlnModel, grad_scores, caches) -> dict[str, np.ndarray]:
    c_thr, logic_caches, c_sum = caches
    grads = {}
    g, gh = model.sum.backward(grad_scores, c_sum)
    grads["sum.link_weights"] = g["link_weights"]
    width = model.binarized_width
    grad_base = 0.0
    for i in reversed(range(len(model.logic_layers))):
        g, gin = model.logic_layers[i].backward(gh, logic_caches[i])
        for k, v in g.items():
            grads[f"logic{i}.{k}"] = v
        if i > 0 and model.config.concat_input:
            gh, gb = gin[:, :-width], gin[:, -width:]
            grad_base = grad_base + gb
        else:
            gh = gin
    grad_base = grad_base + gh  # first layer input is the binarized base
    g, _ = model.threshold.backward(grad_base[:, :model.threshold.width], c_thr)
    grads["threshold.bias"] = g["bias"]
    grads["threshold.slope"] = g["slope"]
    return grads


def soft_predict(model: DlnModel, x, tau: float) -> np.ndarray:
    """Relaxed class scores; a 1-D input gives a 1-D score vector."""
    single = np.asarray(x.values if isinstance(x, FeatureMatrix) else x).ndim == 1
    scores, _ = forward(model, x, tau)
    return scores[0] if single else scores


def hard_scores(model: DlnModel, x) -> np.ndarray:
    x = _as_matrix(model, x)
    base = np.hstack([model.threshold.hard_forward(x),
                      (x[:, model.bit_index] >= 0.5).astype(np.uint8)])
    h = base
    for i, layer in enumerate(model.logic_layers):
        inp = np.hstack([h, base]) if (i > 0 and model.config.concat_input) else h
        h = layer.hard_forward(inp)
    return model.sum.hard_forward(h, model.final_tau)


def hard_predict(model: DlnModel, x):
    """Discrete inference: ``(class, scores)``; ties go to the lowest class ID."""
    single = np.asarray(x.values if isinstance(x, FeatureMatrix) else x).ndim == 1
    scores = hard_scores(model, x)
    pred = np.argmax(scores, axis=1)
    if single:
        return int(pred[0]), scores[0]
    return pred, scores


def loss(scores, label: int) -> float:
    """Softmax cross-entropy of one score vector against ``label``."""
    scores = np.asarray(scores, dtype=np.float64)
    if not 0 <= label < len(scores):
        raise ValueError(f"label {label} outside 0..{len(scores) - 1}")
    return float(logsumexp(scores) - scores[label])


def cross_entropy(scores, labels):
    """Mean batch cross-entropy and its gradient w.r.t. ``scores``."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    n, c = scores.shape
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError("label out of range")
    rows = np.arange(n)
    value = float(np.mean(logsumexp(scores, axis=1) - scores[rows, labels]))
    grad = softmax(scores, axis=1)
    grad[rows, labels] -= 1.0
    return value, grad / n


def loss_and_grads(model: DlnModel, x, labels, tau: float):
    scores, caches = forward(model, x, tau)
    value, grad = cross_entropy(scores, labels)
    return value, backward(model, grad, caches)


# --------------------------------------------------------------------------
# training


def temperature_schedule(config: TrainConfig) -> np.ndarray:
    """Exponential decay from ``tau_start`` to exactly ``tau_end`` over the epochs."""
    n = config.epochs
    if n == 0:
        return np.zeros(0)
    if n == 1:
        return np.array([config.tau_end])
    e = np.arange(n) / (n - 1)
    taus = config.tau_start * (config.tau_end / config.tau_start) ** e
    taus[0], taus[-1] = config.tau_start, config.tau_end
    return np.minimum.accumulate(taus)


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float,
                 beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = {k: 0 for k in params}

    def step(self, params, grads, names):
        for k in names:
            g = grads[k]
            self.t[k] += 1
            self.m[k] = self.beta1 * self.m[k] + (1 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1 - self.beta2) * g * g
            m_hat = self.m[k] / (1 - self.beta1 ** self.t[k])
            v_hat = self.v[k] / (1 - self.beta2 ** self.t[k])
            params[k] -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _phase_names(names, phase: str):
    if phase == "unified":
        return list(names)
    suffixes = FUNCTION_PARAMS if phase == "function" else CONNECTION_PARAMS
    return [n for n in names if n.rsplit(".", 1)[1] in suffixes]


def train(model: DlnModel, data: FeatureMatrix, log=None) -> DlnModel:
    """Mini-batch Adam on the relaxed network, in place; returns the model.

    Two-phase mode updates function parameters on even epochs and connection
    parameters on odd epochs. Per-epoch losses land in ``model.history``.
    """
    cfg = model.config.validate()
    x = _as_matrix(model, data)
    y = np.asarray(data.labels)
    if len(y) == 0:
        raise TrainingError("empty training set")
    if y.min() < 0 or y.max() >= model.num_classes:
        raise TrainingError("labels out of range for this model")
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed).spawn(2)[1])
    params = model.parameters()
    opt = Adam(params, cfg.learning_rate)
    batch = min(cfg.batch_size, len(y))
    for epoch, tau in enumerate(temperature_schedule(cfg)):
        phase = "unified" if cfg.phase_unified else ("function", "connection")[epoch % 2]
        active = _phase_names(params, phase)
        order = rng.permutation(len(y))
        total = 0.0
        for bi, start in enumerate(range(0, len(y), batch)):
            idx = order[start:start + batch]
            value, grads = loss_and_grads(model, x[idx], y[idx], tau)
            if not math.isfinite(value):
                raise TrainingError(
                    f"non-finite loss {value} at epoch {epoch}, batch {bi}, tau {tau:.4g}")
            opt.step(params, grads, active)
            total += value * len(idx)
        record = {"epoch": epoch, "tau": float(tau), "phase": phase, "loss": total / len(y)}
        model.history.append(record)
        if log is not None:
            log(record)
        model.final_tau = float(tau)
    return model


# --------------------------------------------------------------------------
# serialization


def _enc(arr: np.ndarray) -> dict:
    arr = np.ascontiguousarray(arr)
    dt = arr.dtype.newbyteorder("<") if arr.dtype.byteorder not in ("|", "<") else arr.dtype
    return {"dtype": dt.str, "shape": list(arr.shape),
            "data": base64.b64encode(arr.astype(dt).tobytes()).decode("ascii")}


def _dec(d: dict) -> np.ndarray:
    raw = base64.b64decode(d["data"], validate=True)
    return np.frombuffer(raw, dtype=np.dtype(d["dtype"])).reshape(d["shape"]).copy()


def to_dict(model: DlnModel) -> dict:
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "final_tau": model.final_tau,
        "feature_meta": model.feature_meta.to_dict(),
        "bit_index": _enc(model.bit_index),
        "threshold": {
            "bias": _enc(model.threshold.bias),
            "slope": _enc(model.threshold.slope),
            "input_index": _enc(model.threshold.input_index),
            "group_size": model.threshold.group_size,
        },
        "logic_layers": [
            {name: _enc(getattr(layer, name)) for name in (
                "gate_weights", "link_a_weights", "link_b_weights",
                "gate_mask", "link_a_mask", "link_b_mask")}
            for layer in model.logic_layers
        ],
        "sum": {"link_weights": _enc(model.sum.link_weights)},
    }


def save(model: DlnModel) -> bytes:
    """Canonical JSON (sorted keys, no whitespace); tensors are base64 little-endian."""
    return json.dumps(to_dict(model), sort_keys=True, separators=(",", ":")).encode("utf-8")


def load(payload: bytes) -> DlnModel:
    try:
        text = payload.decode("utf-8") if isinstance(payload, (bytes, bytearray)) else payload
        d = json.loads(text)
    except UnicodeDecodeError as exc:
        raise ModelFormatError(f"payload is not UTF-8: {exc.reason}", exc.start) from None
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"malformed model payload: {exc.msg}", exc.pos) from None
    if not isinstance(d, dict) or d.get("format") != FORMAT_NAME:
        raise ModelFormatError("not a dlnkit model payload", 0)
    if d.get("version") != FORMAT_VERSION:
        raise ModelVersionError(
            f"model format version {d.get('version')!r}, this build reads {FORMAT_VERSION}")
    try:
        t = d["threshold"]
        threshold = ThresholdLayer(_dec(t["bias"]), _dec(t["slope"]), _dec(t["input_index"]),
                                   int(t["group_size"]))
        layers = [LogicLayer(**{k: _dec(v) for k, v in layer.items()}) for layer in d["logic_layers"]]
        return DlnModel(
            threshold=threshold,
            logic_layers=layers,
            sum=SumLayer(_dec(d["sum"]["link_weights"])),
            config=TrainConfig.from_dict(d["config"]),
            final_tau=float(d["final_tau"]),
            feature_meta=FeatureMeta.from_dict(d["feature_meta"]),
            bit_index=_dec(d["bit_index"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"invalid model structure: {exc!r}") from None
