"""Random search over network configurations, scored by cross-validated balanced accuracy."""
from __future__ import annotations

import json
import math
import time
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import CONTINUOUS, FeatureMatrix, balanced_accuracy
from .layers import SteFlags
from .network import GATE_OPTIONS, LINK_OPTIONS, TrainConfig, build, hard_predict, train

MAX_HIDDEN = 512


class StratificationError(ValueError):
    pass


@dataclass
class SearchSpace:
    """Option sets per axis.

    ``n_continuous`` and ``n_binary`` describe the input so hidden widths can
    be expressed as multiples of the binarized input width.
    """

    n_continuous: int
    n_binary: int = 0
    phase_unified: tuple = (True, False)
    ste_threshold: tuple = (True, False)
    ste_logic: tuple = (True, False)
    ste_sum: tuple = (True, False)
    subset_gate_num: tuple = GATE_OPTIONS
    subset_link_num: tuple = LINK_OPTIONS
    concat_input: tuple = (True, False)
    group_size: tuple = (10, 14)
    depth: tuple = (1, 2)
    width_multiplier: tuple = (2, 4, 8)
    learning_rate: tuple = (3e-3, 1e-1)  # log-uniform bounds
    epochs: tuple = (40,)
    batch_size: tuple = (64,)
    tau_start: float = 1.0
    tau_end: float = 0.05
    max_hidden: int = MAX_HIDDEN

    @classmethod
    def for_data(cls, data: FeatureMatrix, **overrides) -> "SearchSpace":
        n_cont = sum(c.kind == CONTINUOUS for c in data.columns)
        return cls(n_continuous=n_cont, n_binary=len(data.columns) - n_cont, **overrides)


def _pick(rng: np.random.Generator, options):
    return options[int(rng.integers(len(options)))]


def sample_config(space: SearchSpace, rng: np.random.Generator, seed: int = 0) -> TrainConfig:
    """One independent uniform draw per categorical axis, log-uniform learning rate."""
    group_size = _pick(rng, space.group_size)
    depth = _pick(rng, space.depth)
    mult = _pick(rng, space.width_multiplier)
    width = min(space.max_hidden, max(1, mult * (space.n_continuous * group_size + space.n_binary)))
    lo, hi = space.learning_rate
    lr = lo if lo == hi else float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
    cfg = TrainConfig(
        hidden_sizes=[int(width)] * depth,
        group_size=int(group_size),
        phase_unified=bool(_pick(rng, space.phase_unified)),
        ste=SteFlags(bool(_pick(rng, space.ste_threshold)), bool(_pick(rng, space.ste_logic)),
                     bool(_pick(rng, space.ste_sum))),
        subset_gate_num=int(_pick(rng, space.subset_gate_num)),
        subset_link_num=int(_pick(rng, space.subset_link_num)),
        concat_input=bool(_pick(rng, space.concat_input)),
        learning_rate=lr,
        epochs=int(_pick(rng, space.epochs)),
        batch_size=int(_pick(rng, space.batch_size)),
        tau_start=space.tau_start,
        tau_end=space.tau_end,
        seed=int(seed),
    )
    return cfg.validate()


def choose_folds(train_size: int) -> int:
    """4 folds up to 200 samples, 3 up to 1000, 2 above."""
    if train_size < 4:
        raise ValueError(f"training set of {train_size} samples is too small for cross-validation")
    if train_size <= 200:
        return 4
    if train_size <= 1000:
        return 3
    return 2


def stratified_folds(labels, folds: int, seed: int) -> list[np.ndarray]:
    """Per-class shuffled round-robin assignment; returns the held-out indices of each fold."""
    labels = np.asarray(labels)
    rng = np.random.default_rng(seed)
    assign = np.empty(len(labels), dtype=np.int64)
    offset = 0
    for c in np.unique(labels):
        idx = np.flatnonzero(labels == c)
        if len(idx) < folds:
            raise StratificationError(f"class {c} has {len(idx)} samples, fewer than {folds} folds")
        idx = rng.permutation(idx)
        assign[idx] = (np.arange(len(idx)) + offset) % folds
        offset += len(idx)
    return [np.flatnonzero(assign == f) for f in range(folds)]


@dataclass
class TrialRecord:
    config: TrainConfig
    cv_score: float
    fold_scores: list[float]
    seed: int
    trial: int = 0
    wall_time: float = 0.0
    error: str | None = None

    def to_dict(self) -> dict:
        return {"trial": self.trial, "seed": self.seed, "config": self.config.to_dict(),
                "fold_scores": self.fold_scores,
                "cv_score": None if math.isinf(self.cv_score) else self.cv_score,
                "wall_time": self.wall_time, "error": self.error}


def cross_validate(config: TrainConfig, data: FeatureMatrix, folds: int, seed: int) -> TrialRecord:
    """Stratified k-fold; trains on k-1 folds and scores hard-inference balanced accuracy."""
    if folds < 2:
        raise ValueError("need at least two folds")
    t0 = time.perf_counter()
    held_out = stratified_folds(data.labels, folds, seed)
    scores = []
    for f, test_idx in enumerate(held_out):
        train_idx = np.setdiff1d(np.arange(len(data.labels)), test_idx)
        tr, va = data.subset(train_idx), data.subset(test_idx)
        model = train(build(config, tr, data.num_classes), tr)
        pred, _ = hard_predict(model, va)
        scores.append(balanced_accuracy(va.labels, pred))
    return TrialRecord(config, float(np.mean(scores)), scores, seed,
                       wall_time=time.perf_counter() - t0)


def _run_trial(args):
    i, space, data, folds, seed = args
    ss = np.random.SeedSequence([seed, i])
    rng = np.random.default_rng(ss)
    trial_seed = int(ss.generate_state(1)[0])
    config = sample_config(space, rng, seed=trial_seed)
    t0 = time.perf_counter()
    try:
        rec = cross_validate(config, data, folds, trial_seed)
    except Exception as exc:  # a failed trial must not end the search
        rec = TrialRecord(config, -math.inf, [], trial_seed, error=f"{type(exc).__name__}: {exc}",
                          wall_time=time.perf_counter() - t0)
    rec.trial = i
    return rec


def run_search(space: SearchSpace, data: FeatureMatrix, n_trials: int, seed: int,
               folds: int | None = None, workers: int = 1, log=None):
    """Returns ``(best config, records)``; the earliest trial wins ties."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    folds = choose_folds(len(data.labels)) if folds is None else folds
    jobs = [(i, space, data, folds, seed) for i in range(n_trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_trial, jobs))  # map keeps trial order
    else:
        records = []
        for job in jobs:
            records.append(_run_trial(job))
            if log is not None:
                log(records[-1])
    best = max(range(n_trials), key=lambda i: (records[i].cv_score, -i))
    return records[best].config, records


def write_history(records, path) -> None:
    """One JSON object per line, in trial order."""
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_dict(), sort_keys=True) + "\n")


AXES = {
    "phase_unified": lambda c: c.phase_unified,
    "ste_threshold_layer": lambda c: c.ste.threshold,
    "ste_logic_layer": lambda c: c.ste.logic,
    "ste_sum_layer": lambda c: c.ste.sum,
    "subset_gate_num": lambda c: c.subset_gate_num,
    "subset_link_num": lambda c: c.subset_link_num,
    "concat_input": lambda c: c.concat_input,
}


@dataclass
class ConfigStats:
    runs: int
    axes: dict[str, Counter] = field(default_factory=dict)
    joint_subset: Counter = field(default_factory=Counter)  # (gate, link) -> count

    def render(self) -> str:
        lines = [f"selected configurations over {self.runs} run(s)"]
        for axis, counts in self.axes.items():
            parts = ", ".join(f"{k}: {v} ({100 * v / self.runs:.0f}%)"
                              for k, v in sorted(counts.items(), key=lambda kv: str(kv[0])))
            lines.append(f"  {axis:<20} {parts}")
        lines.append("  subset_gate_num x subset_link_num:")
        links = sorted({k[1] for k in self.joint_subset}, reverse=True)
        lines.append("    gate\\link " + " ".join(f"{l:>4}" for l in links))
        for g in sorted({k[0] for k in self.joint_subset}, reverse=True):
            lines.append(f"    {g:>9} " + " ".join(f"{self.joint_subset[(g, l)]:>4}" for l in links))
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"runs": self.runs,
                "axes": {a: {str(k): v for k, v in c.items()} for a, c in self.axes.items()},
                "joint_subset": {f"{g},{l}": v for (g, l), v in self.joint_subset.items()}}


def config_stats(selected: list[TrainConfig]) -> ConfigStats:
    """Per-axis counts of the configurations chosen across runs."""
    stats = ConfigStats(runs=len(selected))
    for axis, get in AXES.items():
        stats.axes[axis] = Counter(get(c) for c in selected)
    stats.joint_subset = Counter((c.subset_gate_num, c.subset_link_num) for c in selected)
    return stats
