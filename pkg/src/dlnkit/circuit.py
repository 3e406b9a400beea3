"""Discretized networks as Boolean circuits: folding, simplification, costs, export.

A :class:`CircuitModel` is a topologically ordered list of nodes (constants,
threshold comparators, raw bit inputs, two-input gates) plus, per class, the
multiset of nodes whose outputs are summed. Class scores are
``offset[c] + sum(node values)``; prediction is the arg-max, lowest class on ties.

Rule text format (UTF-8, one summed rule per line, ``#`` starts a comment)::

    line   := "class" INT ":" expr
    expr   := unary [BINOP unary]
    unary  := "¬" unary | "(" expr ")" | atom
    atom   := "True" | "False" | NAME [("≥" | "≤") NUMBER]
    BINOP  := "∧" | "∨" | "⊕"

``NAME`` is a bare identifier or a JSON-quoted string; ``NAME`` alone is a
binary (one-hot) input. Numbers are printed with full float precision.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from .logic_kernel import (
    COMMUTATIVE, OPERATORS, TRUTH, diagonal_restriction, op_cost, unary_restriction,
)

COMPARATOR_OPS = 16  # one 16-bit magnitude comparison, ~1 two-input gate per bit
NOT_OP = 12
AND, OR = 1, 7


@dataclass(frozen=True)
class Const:
    value: bool


@dataclass(frozen=True)
class Compare:
    feature: int
    direction: str  # ">=" or "<="
    threshold: float


@dataclass(frozen=True)
class Literal:
    feature: int


@dataclass(frozen=True)
class Gate:
    op: int
    a: int
    b: int


@dataclass
class CircuitModel:
    nodes: list
    class_rules: list[list[int]]
    class_offsets: list[int]
    feature_names: list[str]
    class_names: list[str] = field(default_factory=list)
    constants: list[dict] = field(default_factory=list)  # neurons folded to True/False

    @property
    def num_classes(self) -> int:
        return len(self.class_rules)

    @property
    def comparators(self) -> list[Compare]:
        return [n for n in self.nodes if isinstance(n, Compare)]

    @property
    def gates(self) -> list[Gate]:
        return [n for n in self.nodes if isinstance(n, Gate)]

    def validate(self) -> None:
        for i, n in enumerate(self.nodes):
            if isinstance(n, Gate) and not (0 <= n.a < i and 0 <= n.b < i):
                raise ValueError(f"node {i} references a later node")
        for rules in self.class_rules:
            for r in rules:
                if not 0 <= r < len(self.nodes):
                    raise ValueError(f"class rule references missing node {r}")

    def to_dict(self) -> dict:
        def node(n):
            if isinstance(n, Const):
                return {"kind": "const", "value": n.value}
            if isinstance(n, Compare):
                return {"kind": "compare", "feature": n.feature, "direction": n.direction,
                        "threshold": n.threshold}
            if isinstance(n, Literal):
                return {"kind": "literal", "feature": n.feature}
            return {"kind": "gate", "op": n.op, "a": n.a, "b": n.b}
        return {"nodes": [node(n) for n in self.nodes], "class_rules": self.class_rules,
                "class_offsets": self.class_offsets, "feature_names": self.feature_names,
                "class_names": self.class_names, "constants": self.constants}


# --------------------------------------------------------------------------
# evaluation


def node_values(circuit: CircuitModel, x) -> list[np.ndarray]:
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    n = x.shape[0]
    vals: list[np.ndarray] = []
    for node in circuit.nodes:
        if isinstance(node, Const):
            v = np.full(n, node.value)
        elif isinstance(node, Compare):
            col = x[:, node.feature]
            v = col >= node.threshold if node.direction == ">=" else col <= node.threshold
        elif isinstance(node, Literal):
            v = x[:, node.feature] >= 0.5
        else:
            v = TRUTH[node.op][2 * vals[node.a].astype(np.intp) + vals[node.b].astype(np.intp)] == 1
        vals.append(v)
    return vals


def evaluate(circuit: CircuitModel, x):
    """``(predictions, integer scores)`` for a batch of feature rows."""
    vals = node_values(circuit, x)
    n = len(vals[0]) if vals else np.atleast_2d(x).shape[0]
    scores = np.zeros((n, circuit.num_classes), dtype=np.int64)
    for c, rules in enumerate(circuit.class_rules):
        scores[:, c] = circuit.class_offsets[c]
        for r in rules:
            scores[:, c] += vals[r]
    return np.argmax(scores, axis=1), scores


# --------------------------------------------------------------------------
# discretization


def discretize(model) -> CircuitModel:
    """Arg-max every gate and link, binarize sum connections, fold out-of-range thresholds."""
    nodes: list = []
    constants: list[dict] = []
    thr = model.threshold
    base_refs = []
    for i in range(thr.width):
        b, s, f = float(thr.bias[i]), float(thr.slope[i]), int(thr.input_index[i])
        if s == 0:
            node = Const(True)
        elif b < 0.0 or b > 1.0:
            # always x >= b (or x <= b) over the input range [0, 1]
            node = Const((b < 0.0) == (s > 0))
        else:
            node = Compare(f, ">=" if s > 0 else "<=", b)
        if isinstance(node, Const):
            constants.append({"source": f"threshold[{i}]", "feature": f, "value": node.value})
        nodes.append(node)
        base_refs.append(len(nodes) - 1)
    for f in model.bit_index:
        nodes.append(Literal(int(f)))
        base_refs.append(len(nodes) - 1)

    refs = base_refs
    for li, layer in enumerate(model.logic_layers):
        inputs = refs + base_refs if (li > 0 and model.config.concat_input) else refs
        k, ia, ib = layer.choices()
        refs = []
        for op, a, b in zip(k, ia, ib):
            nodes.append(Gate(int(op), inputs[a], inputs[b]))
            refs.append(len(nodes) - 1)

    conn = model.sum.connections(model.final_tau)
    rules = [[refs[j] for j in range(conn.shape[0]) if conn[j, c]] for c in range(conn.shape[1])]
    names = [c.name for c in model.feature_meta.columns]
    return CircuitModel(nodes, rules, [0] * len(rules), names,
                        list(model.feature_meta.classes), constants)


# --------------------------------------------------------------------------
# rewriting


class _Builder:
    """Rebuilds a circuit node by node with hash-consing and local rewrites."""

    def __init__(self, simplify: bool):
        self.simplify = simplify
        self.nodes: list = []
        self.index: dict = {}

    def emit(self, node) -> int:
        key = node
        if isinstance(node, Gate) and not self.simplify:
            self.nodes.append(node)
            return len(self.nodes) - 1
        if key not in self.index:
            self.nodes.append(node)
            self.index[key] = len(self.nodes) - 1
        return self.index[key]

    def const(self, value) -> int:
        return self.emit(Const(bool(value)))

    def is_const(self, ref):
        n = self.nodes[ref]
        return isinstance(n, Const), (n.value if isinstance(n, Const) else None)

    def negated(self, ref):
        n = self.nodes[ref]
        return n.a if isinstance(n, Gate) and n.op == NOT_OP else None

    def unary(self, kind, x: int) -> int:
        if kind in (0, 1):
            return self.const(kind)
        return x if kind == "x" else self.not_(x)

    def not_(self, x: int) -> int:
        is_c, v = self.is_const(x)
        if is_c:
            return self.const(not v)
        inner = self.negated(x)
        if inner is not None:
            return inner
        return self.emit(Gate(NOT_OP, x, x))

    def gate(self, op: int, a: int, b: int) -> int:
        ca, va = self.is_const(a)
        cb, vb = self.is_const(b)
        if ca and cb:
            return self.const(TRUTH[op][2 * int(va) + int(vb)])
        if ca:
            return self.unary(unary_restriction(op, int(va), const_is_a=True), b)
        if cb:
            return self.unary(unary_restriction(op, int(vb), const_is_a=False), a)
        if not self.simplify:
            return self.emit(Gate(op, a, b))
        if op in (0, 15):
            return self.const(op == 15)
        if op == 3:
            return a
        if op == 5:
            return b
        if op in (NOT_OP, 10):
            return self.not_(a if op == NOT_OP else b)
        if a == b:
            return self.unary(diagonal_restriction(op), a)
        if self.negated(b) == a or self.negated(a) == b:
            return self.unary(diagonal_restriction(op, negated=True), a)
        if op == 2:
            return self.gate(AND, a, self.not_(b))
        if op == 4:
            return self.gate(AND, self.not_(a), b)
        if op == 11:
            return self.gate(OR, a, self.not_(b))
        if op == 13:
            return self.gate(OR, self.not_(a), b)
        if op in COMMUTATIVE and b < a:
            a, b = b, a
        return self.emit(Gate(op, a, b))


def _rebuild(circuit: CircuitModel, simplify: bool) -> CircuitModel:
    bld = _Builder(simplify)
    remap = []
    for node in circuit.nodes:
        if isinstance(node, Gate):
            remap.append(bld.gate(node.op, remap[node.a], remap[node.b]))
        else:
            remap.append(bld.emit(node))
    rules, offsets = [], []
    for c, refs in enumerate(circuit.class_rules):
        kept, offset = [], circuit.class_offsets[c]
        for r in refs:
            is_c, v = bld.is_const(remap[r])
            if is_c:
                offset += int(v)
            else:
                kept.append(remap[r])
        rules.append(kept)
        offsets.append(offset)
    out = CircuitModel(bld.nodes, rules, offsets, list(circuit.feature_names),
                       list(circuit.class_names), list(circuit.constants))
    return prune(out)


def prune(circuit: CircuitModel) -> CircuitModel:
    """Drop nodes unreachable from any class rule."""
    live = set(r for rules in circuit.class_rules for r in rules)
    for i in range(len(circuit.nodes) - 1, -1, -1):
        n = circuit.nodes[i]
        if i in live and isinstance(n, Gate):
            live.update((n.a, n.b))
    order = sorted(live)
    new = {old: i for i, old in enumerate(order)}
    nodes = []
    for old in order:
        n = circuit.nodes[old]
        nodes.append(Gate(n.op, new[n.a], new[n.b]) if isinstance(n, Gate) else n)
    rules = [[new[r] for r in rules] for rules in circuit.class_rules]
    return CircuitModel(nodes, rules, list(circuit.class_offsets), list(circuit.feature_names),
                        list(circuit.class_names), list(circuit.constants))


def _fixpoint(circuit: CircuitModel, simplify: bool) -> CircuitModel:
    while True:
        out = _rebuild(circuit, simplify)
        if out.nodes == circuit.nodes and out.class_rules == circuit.class_rules:
            return out
        circuit = out


def fold_constants(circuit: CircuitModel) -> CircuitModel:
    """Propagate constant inputs through gates and drop dead nodes."""
    return _fixpoint(circuit, simplify=False)


def simplify_rules(circuit: CircuitModel) -> CircuitModel:
    """Local rewrites plus sharing of identical gates.

    Covers double negation, idempotence, complementation, pass-through and
    constant operators, and rewriting implications as AND/OR with a NOT.
    """
    return _fixpoint(circuit, simplify=True)


def compile_model(model) -> CircuitModel:
    return simplify_rules(fold_constants(discretize(model)))


# --------------------------------------------------------------------------
# cost


@dataclass
class CostReport:
    gate_ops: int
    comparator_ops: int
    total_ops: int
    live_feature_count: int
    n_gates: int = 0
    n_comparators: int = 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def live_nodes(circuit: CircuitModel) -> set[int]:
    live = set(r for rules in circuit.class_rules for r in rules)
    for i in range(len(circuit.nodes) - 1, -1, -1):
        n = circuit.nodes[i]
        if i in live and isinstance(n, Gate):
            live.update((n.a, n.b))
    return live


def count_ops(circuit: CircuitModel, comparator_ops: int = COMPARATOR_OPS) -> CostReport:
    """Gate OPs of live gates plus ``comparator_ops`` per live comparator.

    Class-score summation and the final arg-max are not counted.
    """
    live = [circuit.nodes[i] for i in sorted(live_nodes(circuit))]
    gates = [n for n in live if isinstance(n, Gate)]
    comps = [n for n in live if isinstance(n, Compare)]
    feats = {n.feature for n in live if isinstance(n, (Compare, Literal))}
    g = sum(op_cost(n.op) for n in gates)
    c = comparator_ops * len(comps)
    return CostReport(g, c, g + c, len(feats), len(gates), len(comps))


# --------------------------------------------------------------------------
# export

_BARE_NAME = re.compile(r"[A-Za-z_][A-Za-z0-9_.\[\]=:+\-]*")


def format_name(name: str) -> str:
    if _BARE_NAME.fullmatch(name) and name not in ("True", "False", "class"):
        return name
    return json.dumps(name, ensure_ascii=False)


_TEMPLATES = {
    1: "({A} ∧ {B})", 2: "({A} ∧ ¬{B})", 4: "(¬{A} ∧ {B})", 6: "({A} ⊕ {B})",
    7: "({A} ∨ {B})", 8: "¬({A} ∨ {B})", 9: "¬({A} ⊕ {B})", 11: "({A} ∨ ¬{B})",
    13: "(¬{A} ∨ {B})", 14: "¬({A} ∧ {B})",
}


def _expressions(circuit: CircuitModel) -> list[str]:
    names = circuit.feature_names
    out: list[str] = []
    for node in circuit.nodes:
        if isinstance(node, Const):
            out.append("True" if node.value else "False")
        elif isinstance(node, Compare):
            sym = "≥" if node.direction == ">=" else "≤"
            out.append(f"({format_name(names[node.feature])} {sym} {node.threshold!r})")
        elif isinstance(node, Literal):
            out.append(format_name(names[node.feature]))
        else:
            a, b = out[node.a], out[node.b]
            if node.op in (0, 15):
                out.append("True" if node.op == 15 else "False")
            elif node.op in (3, 5):
                out.append(a if node.op == 3 else b)
            elif node.op in (10, 12):
                inner = b if node.op == 10 else a
                out.append(inner[1:] if inner.startswith("¬") else "¬" + inner)
            else:
                out.append(_TEMPLATES[node.op].format(A=a, B=b))
    return out


def _strip_outer(expr: str) -> str:
    if not (expr.startswith("(") and expr.endswith(")")):
        return expr
    depth = 0
    for i, ch in enumerate(expr):
        depth += ch == "("
        depth -= ch == ")"
        if depth == 0 and i < len(expr) - 1:
            return expr
    return expr[1:-1]


def export_text(circuit: CircuitModel) -> str:
    """One line per summed rule: ``class <c>: <expr>``; constant-True rules print as ``True``."""
    exprs = _expressions(circuit)
    lines = ["# dlnkit rules v1"]
    for c, rules in enumerate(circuit.class_rules):
        label = circuit.class_names[c] if c < len(circuit.class_names) else str(c)
        lines.append(f"# class {c} = label {label!r}: {circuit.class_offsets[c] + len(rules)} rules")
        lines.extend(f"class {c}: True" for _ in range(circuit.class_offsets[c]))
        lines.extend(f"class {c}: {_strip_outer(exprs[r])}" for r in rules)
    return "\n".join(lines) + "\n"


def _dot_str(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def export_graph(circuit: CircuitModel) -> str:
    """Graphviz DOT: features -> comparators -> gates -> class sums."""
    names = circuit.feature_names
    live = live_nodes(circuit)
    lines = ["digraph dln {", "  rankdir=LR;"]
    used = sorted({circuit.nodes[i].feature for i in live
                   if isinstance(circuit.nodes[i], (Compare, Literal))})
    for f in used:
        lines.append(f"  f{f} [label={_dot_str(names[f])}, shape=box, style=filled, "
                     f"fillcolor=lightyellow];")
    for i in sorted(live):
        n = circuit.nodes[i]
        if isinstance(n, Const):
            lines.append(f"  n{i} [label={_dot_str(str(n.value))}, shape=plaintext];")
        elif isinstance(n, Compare):
            sym = "≥" if n.direction == ">=" else "≤"
            lines.append(f"  n{i} [label={_dot_str(f'{sym} {n.threshold:.4g}')}, shape=ellipse];")
            lines.append(f"  f{n.feature} -> n{i};")
        elif isinstance(n, Literal):
            lines.append(f"  n{i} [label={_dot_str('bit')}, shape=ellipse];")
            lines.append(f"  f{n.feature} -> n{i};")
        else:
            lines.append(f"  n{i} [label={_dot_str(OPERATORS[n.op].symbol)}, shape=diamond];")
            lines.append(f"  n{n.a} -> n{i};")
            if n.b != n.a:
                lines.append(f"  n{n.b} -> n{i};")
    for c, rules in enumerate(circuit.class_rules):
        label = f"class {circuit.class_names[c] if c < len(circuit.class_names) else c}"
        if circuit.class_offsets[c]:
            label += f" (+{circuit.class_offsets[c]})"
        lines.append(f"  c{c} [label={_dot_str(label)}, shape=doubleoctagon];")
        lines.extend(f"  n{r} -> c{c};" for r in rules)
    lines.append("}")
    return "\n".join(lines) + "\n"
