import json
import re

import numpy as np
import pydot
import pytest

from dlnkit.circuit import (
    CircuitModel, Compare, Const, Gate, Literal, count_ops, discretize, evaluate, export_graph,
    export_text, fold_constants, simplify_rules,
)
from dlnkit.network import hard_predict
from helpers import probe_grid, random_model


def circuit(nodes, rules, names=None, offsets=None):
    names = names or [f"x{i}" for i in range(8)]
    c = CircuitModel(nodes, rules, offsets or [0] * len(rules), names)
    c.validate()
    return c


def all_bits(n):
    return np.array([[(i >> k) & 1 for k in range(n)] for i in range(2 ** n)], dtype=float)


def assert_equivalent(c1, c2, x):
    p1, s1 = evaluate(c1, x)
    p2, s2 = evaluate(c2, x)
    np.testing.assert_array_equal(s1, s2)


# ------------------------------------------------------------ discretize


def test_out_of_range_thresholds_fold(rng):
    m = random_model(rng, n_cont=1, group_size=4, hidden=(2,))
    m.threshold.bias[:] = [1.3, -0.2, 1.3, -0.2]
    m.threshold.slope[:] = [2.0, 2.0, -1.0, -1.0]
    c = discretize(m)
    assert [n.value for n in c.nodes[:4]] == [False, True, True, False]
    assert len(c.constants) == 4


def test_in_range_threshold_becomes_comparator(rng):
    m = random_model(rng, n_cont=1, group_size=2, hidden=(2,))
    m.threshold.bias[:] = [0.3, 0.6]
    m.threshold.slope[:] = [2.0, -1.0]
    c = discretize(m)
    assert c.nodes[0] == Compare(0, ">=", 0.3)
    assert c.nodes[1] == Compare(0, "<=", 0.6)


def test_sum_connection_below_threshold_dropped(rng):
    m = random_model(rng, n_cont=1, group_size=1, hidden=(1,), num_classes=2)
    m.final_tau = 1.0
    m.sum.link_weights[:] = [[np.log(0.79 / 0.21), np.log(0.81 / 0.19)]]
    c = discretize(m)
    assert c.class_rules[0] == [] and len(c.class_rules[1]) == 1


def test_discretize_exhaustive_on_ten_bits(rng):
    m = random_model(rng, n_cont=0, n_bits=10, hidden=(12, 8), concat=True)
    x = all_bits(10)
    pred, scores = hard_predict(m, x)
    cp, cs = evaluate(discretize(m), x)
    np.testing.assert_array_equal(scores, cs)
    np.testing.assert_array_equal(pred, cp)


def test_discretize_matches_on_feature_grid(rng):
    for _ in range(5):
        m = random_model(rng, n_cont=2, n_bits=2, group_size=3, hidden=(6, 5), concat=True)
        x = probe_grid(m)
        np.testing.assert_array_equal(hard_predict(m, x)[1], evaluate(discretize(m), x)[1])


# ------------------------------------------------------------ folding


def test_and_with_true_is_identity():
    c = circuit([Const(True), Literal(0), Literal(1), Gate(1, 0, 1), Gate(6, 3, 2)], [[4]])
    f = fold_constants(c)
    assert Const(True) not in f.nodes
    assert f.gates == [Gate(6, 0, 1)]
    assert_equivalent(c, f, all_bits(2))


def test_or_with_true_becomes_offset():
    c = circuit([Const(True), Literal(0), Gate(7, 0, 1)], [[2], [1]])
    f = fold_constants(c)
    assert f.class_offsets == [1, 0] and f.class_rules[0] == []
    assert_equivalent(c, f, all_bits(1))


def test_xor_with_false_and_true():
    c = circuit([Const(False), Const(True), Literal(0), Gate(6, 2, 0), Gate(6, 1, 2)], [[3, 4]])
    f = fold_constants(c)
    assert_equivalent(c, f, all_bits(1))
    assert f.gates == [Gate(12, 0, 0)]  # XOR(True, x) -> NOT x


def test_no_gate_references_constant_after_fold(rng):
    for _ in range(20):
        m = random_model(rng, n_cont=2, group_size=3, hidden=(6, 4), bias_range=(-1, 2))
        f = fold_constants(discretize(m))
        for g in f.gates:
            assert not isinstance(f.nodes[g.a], Const) and not isinstance(f.nodes[g.b], Const)
        assert not any(isinstance(n, Const) for n in f.nodes)


def random_circuit(rng, n_inputs, n_gates, n_classes=2, p_const=0.15):
    nodes = []
    for i in range(n_inputs):
        nodes.append(Const(bool(rng.integers(2))) if rng.random() < p_const else Literal(i))
    for _ in range(n_gates):
        n = len(nodes)
        nodes.append(Gate(int(rng.integers(16)), int(rng.integers(n)), int(rng.integers(n))))
    rules = [[int(r) for r in rng.integers(n_inputs, len(nodes), rng.integers(1, 6))]
             for _ in range(n_classes)]
    return circuit(nodes, rules, names=[f"x{i}" for i in range(n_inputs)])


def test_fold_preserves_semantics_random_inputs(rng):
    for _ in range(10):
        c = random_circuit(rng, 20, 40)
        x = rng.integers(0, 2, (10_000, 20)).astype(float)
        assert_equivalent(c, fold_constants(c), x)


# ------------------------------------------------------------ simplify


def test_xor_self_is_false():
    c = circuit([Literal(0), Gate(6, 0, 0)], [[1]])
    s = simplify_rules(fold_constants(c))
    assert s.nodes == [] and s.class_rules == [[]] and s.class_offsets == [0]


def test_identical_gates_shared():
    c = circuit([Literal(0), Literal(1), Gate(1, 0, 1), Gate(1, 1, 0)], [[2], [3]])
    s = simplify_rules(c)
    assert len(s.gates) == 1
    assert s.class_rules[0] == s.class_rules[1]
    assert_equivalent(c, s, all_bits(2))


def test_double_negation_and_complement():
    c = circuit([Literal(0), Literal(1), Gate(12, 0, 0), Gate(12, 2, 2), Gate(1, 3, 1),
                 Gate(1, 0, 2), Gate(7, 2, 0)], [[4], [5, 6]])
    s = simplify_rules(c)
    assert s.gates == [Gate(1, 0, 1)]
    assert s.class_offsets == [0, 1]  # AND(x, ~x) dropped, OR(~x, x) -> True
    assert_equivalent(c, s, all_bits(2))


def test_implications_canonicalized():
    for op in (2, 4, 11, 13):
        c = circuit([Literal(0), Literal(1), Gate(op, 0, 1)], [[2]])
        s = simplify_rules(c)
        assert {g.op for g in s.gates} <= {1, 7, 12}
        assert_equivalent(c, s, all_bits(2))
        assert count_ops(s).gate_ops == count_ops(c).gate_ops


def test_simplify_preserves_semantics_exhaustively(rng):
    for _ in range(30):
        c = random_circuit(rng, 12, 30, n_classes=3)
        f = fold_constants(c)
        s = simplify_rules(f)
        x = all_bits(12)
        assert_equivalent(c, s, x)
        s.validate()
        assert count_ops(f).total_ops <= count_ops(c).total_ops
        assert count_ops(s).total_ops <= count_ops(f).total_ops


def test_simplify_idempotent(rng):
    c = simplify_rules(fold_constants(random_circuit(rng, 10, 30)))
    assert simplify_rules(c) == c


# ------------------------------------------------------------ costs


def test_cost_of_and_or_xor():
    c = circuit([Literal(0), Literal(1), Gate(1, 0, 1), Gate(7, 0, 1), Gate(6, 0, 1)], [[2, 3, 4]])
    assert count_ops(c).gate_ops == 5


def test_empty_circuit_cost():
    r = count_ops(CircuitModel([], [[], []], [0, 0], []))
    assert (r.gate_ops, r.comparator_ops, r.total_ops, r.live_feature_count) == (0, 0, 0, 0)


def test_cost_report_fields():
    c = circuit([Compare(0, ">=", 0.2), Compare(0, "<=", 0.7), Compare(3, ">=", 0.5),
                 Literal(5), Gate(1, 0, 1), Gate(6, 2, 3)], [[4], [5]])
    r = count_ops(c)
    assert r.comparator_ops == 3 * 16
    assert r.total_ops == r.gate_ops + r.comparator_ops == 4 + 48
    assert r.live_feature_count == 3
    assert json.loads(r.to_json())["total_ops"] == 52


def test_dead_nodes_not_counted():
    c = circuit([Literal(0), Literal(1), Gate(6, 0, 1), Gate(1, 0, 1)], [[3]])
    assert count_ops(c).gate_ops == 1


# ------------------------------------------------------------ export


TOKEN = re.compile(r'\s*(¬|∧|∨|⊕|≥|≤|\(|\)|"(?:[^"\\]|\\.)*"|[A-Za-z_][A-Za-z0-9_.\[\]=:+\-]*|[-+0-9.eE]+)')


def parse_rules(text):
    """Tiny recursive-descent parser for the rule grammar; returns per-line (class, evaluator)."""
    out = []
    for line in text.splitlines():
        if not line or line.startswith("#"):
            continue
        head, expr = line.split(":", 1)
        toks = TOKEN.findall(expr)
        pos = [0]

        def peek():
            return toks[pos[0]] if pos[0] < len(toks) else None

        def take():
            pos[0] += 1
            return toks[pos[0] - 1]

        def unary():
            t = take()
            if t == "¬":
                inner = unary()
                return lambda env: not inner(env)
            if t == "(":
                e = expr_()
                assert take() == ")"
                return e
            if t in ("True", "False"):
                return lambda env, v=(t == "True"): v
            name = json.loads(t) if t.startswith('"') else t
            if peek() in ("≥", "≤"):
                op, thr = take(), float(take())
                if op == "≥":
                    return lambda env: env[name] >= thr
                return lambda env: env[name] <= thr
            return lambda env: env[name] >= 0.5

        def expr_():
            left = unary()
            if peek() in ("∧", "∨", "⊕"):
                op, right = take(), unary()
                return {"∧": lambda e: left(e) and right(e), "∨": lambda e: left(e) or right(e),
                        "⊕": lambda e: left(e) != right(e)}[op]
            return left

        fn = expr_()
        assert pos[0] == len(toks), line
        out.append((int(head.split()[1]), fn))
    return out


def test_single_comparator_rule_text():
    c = circuit([Compare(3, ">=", 0.42)], [[0], []], names=["a", "b", "c", "feat[3]"])
    lines = [l for l in export_text(c).splitlines() if not l.startswith("#")]
    assert lines == ["class 0: feat[3] ≥ 0.42"]


def test_rule_text_reparses_to_same_outputs(rng):
    for _ in range(10):
        m = random_model(rng, n_cont=2, n_bits=2, group_size=3, hidden=(6, 4), concat=True)
        m.feature_meta.columns[0].name = "weird name \"q\""
        c = simplify_rules(fold_constants(discretize(m)))
        rules = parse_rules(export_text(c))
        x = rng.random((300, 4))
        x[:, 2:] = rng.integers(0, 2, (300, 2))
        _, scores = evaluate(c, x)
        names = c.feature_names
        for n in range(300):
            env = {name: x[n, i] for i, name in enumerate(names)}
            got = np.zeros(c.num_classes, dtype=int)
            for cls, fn in rules:
                got[cls] += fn(env)
            np.testing.assert_array_equal(got, scores[n])


def test_graph_export_parses(rng):
    m = random_model(rng, n_cont=2, n_bits=1, group_size=2, hidden=(5, 3))
    c = simplify_rules(fold_constants(discretize(m)))
    graphs = pydot.graph_from_dot_data(export_graph(c))
    assert graphs and len(graphs) == 1
    g = graphs[0]
    class_nodes = [n for n in g.get_nodes() if n.get_name().startswith("c")]
    assert len(class_nodes) == c.num_classes
    n_edges = sum(len(r) for r in c.class_rules)
    assert sum(1 for e in g.get_edges() if e.get_destination().startswith("c")) == n_edges


def test_topological_validity(rng):
    m = random_model(rng, n_cont=2, group_size=3, hidden=(6, 6), concat=True)
    for c in (discretize(m), fold_constants(discretize(m)), simplify_rules(fold_constants(discretize(m)))):
        c.validate()
        for i, n in enumerate(c.nodes):
            if isinstance(n, Gate):
                assert n.a < i and n.b < i
