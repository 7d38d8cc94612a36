"""Flat union/intersection specifications over barrier-defined sets.

A specification is a sequence of constraint leaves joined by ``|`` (union)
and ``&`` (intersection).  There is no operator precedence and there are no
parentheses: the expression is folded strictly left to right, so
``S1 | S2 & S3`` means ``(S1 | S2) & S3``.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .fields import ScalarField


class Op(str, Enum):
    UNION = "|"
    INTERSECTION = "&"

    @property
    def symbol(self) -> str:
        return "∪" if self is Op.UNION else "∩"


LEAF_KINDS = ("state", "input", "stability")
NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


class SpecParseError(ValueError):
    """Malformed specification text; ``position`` is a 0-based character offset."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} (at position {position})")


@dataclass(frozen=True)
class ConstraintLeaf:
    id: str
    kind: str
    barrier: ScalarField
    relative_degree: int = 1

    def __post_init__(self):
        if self.kind not in LEAF_KINDS:
            raise ValueError(f"leaf {self.id!r}: unknown kind {self.kind!r}")
        if int(self.relative_degree) < 1:
            raise ValueError(f"leaf {self.id!r}: relative degree must be >= 1")
        if self.kind != "state" and self.relative_degree != 1:
            raise ValueError(f"leaf {self.id!r}: only state leaves may have relative degree > 1")


@dataclass(frozen=True)
class SpecExpr:
    leaves: tuple[ConstraintLeaf, ...]
    ops: tuple[Op, ...] = ()
    runs: tuple[tuple[Op, tuple[int, ...]], ...] = field(init=False, repr=False)

    def __post_init__(self):
        if not self.leaves:
            raise ValueError("a specification needs at least one leaf")
        if len(self.ops) != len(self.leaves) - 1:
            raise ValueError("need exactly N-1 operators for N leaves")
        object.__setattr__(self, "runs", tuple(level_decomposition(self.ops)))

    @property
    def n_leaves(self) -> int:
        return len(self.leaves)

    @property
    def union_indices(self) -> set[int]:
        """1-based positions of union operators (the P set)."""
        return {i + 1 for i, op in enumerate(self.ops) if op is Op.UNION}

    @property
    def intersection_indices(self) -> set[int]:
        """1-based positions of intersection operators (the Q set)."""
        return {i + 1 for i, op in enumerate(self.ops) if op is Op.INTERSECTION}

    @property
    def n_levels(self) -> int:
        return len(self.runs)

    @property
    def union_run_lengths(self) -> list[int]:
        return [len(idx) for op, idx in self.runs if op is Op.UNION]

    def render(self) -> str:
        parts = [self.leaves[0].id]
        for op, leaf in zip(self.ops, self.leaves[1:]):
            parts += [op.value, leaf.id]
        return " ".join(parts)

    def with_stability(self, leaf: ConstraintLeaf) -> "SpecExpr":
        """Append the stability leaf as a final intersection."""
        if leaf.kind != "stability":
            raise ValueError("expected a stability leaf")
        return SpecExpr(self.leaves + (leaf,), self.ops + (Op.INTERSECTION,))

    def __str__(self):
        return self.render()


def level_decomposition(ops: Sequence[Op]) -> list[tuple[Op, tuple[int, ...]]]:
    """Maximal runs of identical operators, with 1-based operator indices."""
    runs: list[tuple[Op, list[int]]] = []
    for i, op in enumerate(ops, start=1):
        op = Op(op)
        if runs and runs[-1][0] is op:
            runs[-1][1].append(i)
        else:
            runs.append((op, [i]))
    return [(op, tuple(idx)) for op, idx in runs]


_TOKEN_RE = re.compile(r"\s*(?:(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<op>[|&])|(?P<bad>\S))")


def _tokens(text: str):
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:  # trailing whitespace
            break
        kind = m.lastgroup
        yield kind, m.group(kind), m.start(kind)
        pos = m.end()


def parse_spec(text: str, registry: Mapping[str, ConstraintLeaf],
               stability: ConstraintLeaf | None = None) -> SpecExpr:
    """Parse ``"S1 | S2 & U1"`` into a SpecExpr, resolving names in ``registry``.

    Stability leaves cannot appear in the text; pass one as ``stability`` and it
    is appended as a final intersection.
    """
    if not text or not text.strip():
        raise SpecParseError("empty specification", 0, text or "")
    leaves: list[ConstraintLeaf] = []
    ops: list[Op] = []
    expect_name = True
    last_op_pos = 0
    for kind, tok, pos in _tokens(text):
        if kind == "bad":
            raise SpecParseError(f"unexpected character {tok!r}", pos, text)
        if expect_name:
            if kind != "name":
                raise SpecParseError(f"expected a leaf name, got operator {tok!r}", pos, text)
            if tok not in registry:
                raise SpecParseError(f"unknown leaf {tok!r}", pos, text)
            leaf = registry[tok]
            if leaf.kind == "stability":
                raise SpecParseError(
                    f"stability leaf {tok!r} is appended automatically and may not appear in the text",
                    pos, text)
            leaves.append(leaf)
        else:
            if kind != "op":
                raise SpecParseError(f"expected '|' or '&', got {tok!r}", pos, text)
            ops.append(Op(tok))
            last_op_pos = pos
        expect_name = not expect_name
    if expect_name:
        raise SpecParseError("trailing operator", last_op_pos, text)
    spec = SpecExpr(tuple(leaves), tuple(ops))
    if stability is not None:
        spec = spec.with_stability(stability)
    return spec


def crisp_fold(ops: Sequence[Op], values) -> np.ndarray:
    """Left-fold leaf values with exact max (union) / min (intersection).

    ``values`` has the leaf axis first; any trailing batch shape is kept.
    """
    values = np.asarray(values, dtype=float)
    acc = values[0]
    for op, v in zip(ops, values[1:]):
        acc = np.maximum(acc, v) if op is Op.UNION else np.minimum(acc, v)
    return acc


def leaf_values(spec: SpecExpr, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return np.stack([np.asarray(leaf.barrier.value(x, u), dtype=float) for leaf in spec.leaves])


def exact_membership(spec: SpecExpr, x, u) -> bool:
    """Crisp set membership: fold the leaf tests ``h_i >= 0`` with OR/AND."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    for leaf in spec.leaves:
        f = leaf.barrier
        if f.n_x is not None and x.shape[-1] != f.n_x:
            raise ValueError(f"leaf {leaf.id!r} expects a state of dimension {f.n_x}, got {x.shape[-1]}")
        if f.n_u is not None and u.shape[-1] != f.n_u:
            raise ValueError(f"leaf {leaf.id!r} expects an input of dimension {f.n_u}, got {u.shape[-1]}")
    tests = leaf_values(spec, x, u) >= 0.0
    acc = tests[0]
    for op, t in zip(spec.ops, tests[1:]):
        acc = (acc | t) if op is Op.UNION else (acc & t)
    return bool(acc) if np.ndim(acc) == 0 else acc
