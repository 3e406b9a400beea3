"""The sixteen two-input Boolean operators.

Each operator is stored as a degree-2 polynomial ``c0 + ca*A + cb*B + cab*A*B``
(its real-valued relaxation), a 4-bit truth table ordered as inputs
``(0,0), (0,1), (1,0), (1,1)``, and a gate cost in OPs.

| id | operator   | soft           | 00 01 10 11 | cost |
|----|------------|----------------|-------------|------|
|  0 | False      | 0              | 0  0  0  0  | 0    |
|  1 | A and B    | AB             | 0  0  0  1  | 1    |
|  2 | A and ~B   | A - AB         | 0  0  1  0  | 1    |
|  3 | A          | A              | 0  0  1  1  | 0    |
|  4 | ~A and B   | B - AB         | 0  1  0  0  | 1    |
|  5 | B          | B              | 0  1  0  1  | 0    |
|  6 | A xor B    | A + B - 2AB    | 0  1  1  0  | 3    |
|  7 | A or B     | A + B - AB     | 0  1  1  1  | 1    |
|  8 | A nor B    | 1 - (A+B-AB)   | 1  0  0  0  | 1    |
|  9 | A xnor B   | 1 - (A+B-2AB)  | 1  0  0  1  | 3    |
| 10 | ~B         | 1 - B          | 1  0  1  0  | 0    |
| 11 | A or ~B    | 1 - B + AB     | 1  0  1  1  | 1    |
| 12 | ~A         | 1 - A          | 1  1  0  0  | 0    |
| 13 | ~A or B    | 1 - A + AB     | 1  1  0  1  | 1    |
| 14 | A nand B   | 1 - AB         | 1  1  1  0  | 1    |
| 15 | True       | 1              | 1  1  1  1  | 0    |
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

NUM_OPS = 16


class InvalidOperatorError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Operator:
    op_id: int
    name: str
    symbol: str
    coef: tuple[float, float, float, float]  # c0, ca, cb, cab
    truth: tuple[int, int, int, int]
    cost: int

    @property
    def soft(self) -> Callable[[float, float], float]:
        c0, ca, cb, cab = self.coef
        return lambda a, b: c0 + ca * a + cb * b + cab * a * b


def _op(op_id, name, symbol, coef, truth, cost):
    return Operator(op_id, name, symbol, tuple(float(c) for c in coef), truth, cost)


OPERATORS: tuple[Operator, ...] = (
    _op(0, "FALSE", "False", (0, 0, 0, 0), (0, 0, 0, 0), 0),
    _op(1, "AND", "A∧B", (0, 0, 0, 1), (0, 0, 0, 1), 1),
    _op(2, "A_AND_NOT_B", "¬(A⇒B)", (0, 1, 0, -1), (0, 0, 1, 0), 1),
    _op(3, "A", "A", (0, 1, 0, 0), (0, 0, 1, 1), 0),
    _op(4, "NOT_A_AND_B", "¬(A⇐B)", (0, 0, 1, -1), (0, 1, 0, 0), 1),
    _op(5, "B", "B", (0, 0, 1, 0), (0, 1, 0, 1), 0),
    _op(6, "XOR", "A⊕B", (0, 1, 1, -2), (0, 1, 1, 0), 3),
    _op(7, "OR", "A∨B", (0, 1, 1, -1), (0, 1, 1, 1), 1),
    _op(8, "NOR", "¬(A∨B)", (1, -1, -1, 1), (1, 0, 0, 0), 1),
    _op(9, "XNOR", "¬(A⊕B)", (1, -1, -1, 2), (1, 0, 0, 1), 3),
    _op(10, "NOT_B", "¬B", (1, 0, -1, 0), (1, 0, 1, 0), 0),
    _op(11, "A_OR_NOT_B", "A⇐B", (1, 0, -1, 1), (1, 0, 1, 1), 1),
    _op(12, "NOT_A", "¬A", (1, -1, 0, 0), (1, 1, 0, 0), 0),
    _op(13, "NOT_A_OR_B", "A⇒B", (1, -1, 0, 1), (1, 1, 0, 1), 1),
    _op(14, "NAND", "¬(A∧B)", (1, 0, 0, -1), (1, 1, 1, 0), 1),
    _op(15, "TRUE", "True", (1, 0, 0, 0), (1, 1, 1, 1), 0),
)

# (16, 4) polynomial coefficients and truth tables, used by the vectorized layers
COEFFS = np.array([op.coef for op in OPERATORS], dtype=np.float64)
TRUTH = np.array([op.truth for op in OPERATORS], dtype=np.uint8)
COSTS = np.array([op.cost for op in OPERATORS], dtype=np.int64)

# operators whose output is symmetric in (A, B)
COMMUTATIVE = frozenset({0, 1, 6, 7, 8, 9, 14, 15})


def _check_op(op_id) -> int:
    if isinstance(op_id, bool) or not isinstance(op_id, (int, np.integer)):
        raise InvalidOperatorError(f"operator id must be an integer, got {op_id!r}")
    if not 0 <= op_id < NUM_OPS:
        raise InvalidOperatorError(f"operator id {op_id} outside 0..15")
    return int(op_id)


def soft_logic(op_id: int, a: float, b: float) -> float:
    """Real-valued relaxation of operator ``op_id`` at ``(a, b)`` in [0, 1]^2."""
    k = _check_op(op_id)
    for v in (a, b):
        if not 0.0 <= v <= 1.0:
            raise DomainError(f"soft logic input {v!r} outside [0, 1]")
    c0, ca, cb, cab = OPERATORS[k].coef
    return c0 + ca * a + cb * b + cab * a * b


def hard_logic(op_id: int, a: int, b: int) -> int:
    k = _check_op(op_id)
    if a not in (0, 1) or b not in (0, 1):
        raise DomainError(f"hard logic inputs must be bits, got ({a!r}, {b!r})")
    return int(TRUTH[k, 2 * int(a) + int(b)])


def op_cost(op_id: int) -> int:
    """Gate OPs for one instance: AND/OR/NAND/NOR-like 1, XOR/XNOR 3, wiring and NOT 0."""
    return int(COSTS[_check_op(op_id)])


def soft_logic_array(op_ids, a, b):
    """Vectorized soft logic; broadcasting over all three arguments."""
    c = COEFFS[np.asarray(op_ids)]
    return c[..., 0] + c[..., 1] * a + c[..., 2] * b + c[..., 3] * a * b


def hard_logic_array(op_ids, a, b):
    a = np.asarray(a).astype(np.intp)
    b = np.asarray(b).astype(np.intp)
    return TRUTH[np.asarray(op_ids), 2 * a + b]


def unary_restriction(op_id: int, const: int, const_is_a: bool) -> int | str:
    """Operator with one input fixed, as a function of the remaining input x.

    Returns ``0`` or ``1`` when the result is constant, ``"x"`` for identity
    and ``"not"`` for negation.
    """
    t = TRUTH[op_id]
    if const_is_a:
        f0, f1 = t[2 * const + 0], t[2 * const + 1]
    else:
        f0, f1 = t[0 + const], t[2 + const]
    return _classify(int(f0), int(f1))


def diagonal_restriction(op_id: int, negated: bool = False):
    """Operator applied to ``(x, x)``, or to ``(x, ~x)`` when ``negated``."""
    t = TRUTH[op_id]
    if negated:
        return _classify(int(t[1]), int(t[2]))  # x=0 -> (0,1); x=1 -> (1,0)
    return _classify(int(t[0]), int(t[3]))


def _classify(f0: int, f1: int):
    if f0 == f1:
        return f0
    return "x" if (f0, f1) == (0, 1) else "not"
