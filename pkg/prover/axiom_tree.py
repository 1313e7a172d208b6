"""
Two-level k-wise combinatorial axiom tree.

First level: M axioms proposed by the model for a theorem. Second level: one
synthesized axiom per k-combination of first-level indices, created lazily
when the combination is consumed.
"""
import logging
import random
import re
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from math import comb
from typing import Any, Dict, List, Optional, Tuple

from .llm_gateway import ModelGateway, PromptRole
from .theorem import Theorem

logger = logging.getLogger(__name__)

IndexTuple = Tuple[int, ...]


class InvalidArgumentError(ValueError):
    """Raised for out-of-range arguments (combination sizes, revision indices)."""


class TreeConstructionError(RuntimeError):
    """Raised when the model proposes no usable first-level axioms."""


class AxiomTreeExhausted(LookupError):
    """Raised by next_leaf once every combination has been consumed."""


class AxiomOrigin(str, Enum):
    MODEL_PROPOSED = "ModelProposed"
    FROM_CONTEXT = "FromContext"


@dataclass(frozen=True)
class Axiom:
    id: str
    statement: str
    origin: AxiomOrigin = AxiomOrigin.MODEL_PROPOSED

    def __post_init__(self) -> None:
        if not self.statement.strip():
            raise ValueError(f"axiom {self.id!r} has an empty statement")

    def to_dict(self) -> Dict[str, Any]:
        return {"id": self.id, "statement": self.statement, "origin": self.origin.value}


@dataclass(frozen=True)
class SecondLevelAxiom:
    parent_indices: IndexTuple
    statement: str

    def __post_init__(self) -> None:
        if any(b <= a for a, b in zip(self.parent_indices, self.parent_indices[1:])):
            raise ValueError(f"parent indices must be strictly increasing: {self.parent_indices}")
        if not self.statement.strip():
            raise ValueError("second-level axiom statement must be non-empty")

    def to_dict(self) -> Dict[str, Any]:
        return {"parent_indices": list(self.parent_indices), "statement": self.statement}


def k_combinations(m: int, k: int) -> List[IndexTuple]:
    """All strictly increasing k-tuples over 1..m, in lexicographic order."""
    if m < 1 or k < 1 or k > m:
        raise InvalidArgumentError(f"need 1 <= k <= m, got m={m}, k={k}")
    return list(combinations(range(1, m + 1), k))


@dataclass
class AxiomTree:
    theorem_id: str
    first_level: List[Axiom]
    k: int
    order: List[IndexTuple]
    leaves: Dict[IndexTuple, SecondLevelAxiom] = field(default_factory=dict)
    cursor: int = 0
    warnings: List[str] = field(default_factory=list)
    reuses: int = 0

    @property
    def m(self) -> int:
        return len(self.first_level)

    @property
    def capacity(self) -> int:
        return comb(self.m, self.k)

    @property
    def exhausted(self) -> bool:
        return self.cursor >= self.capacity

    def reuse_leaf(self) -> SecondLevelAxiom:
        """Round-robin over consumed leaves once the tree is exhausted."""
        consumed = [self.leaves[key] for key in self.order[: self.cursor] if key in self.leaves]
        if not consumed:
            raise AxiomTreeExhausted(f"tree for {self.theorem_id} has no leaves to reuse")
        leaf = consumed[self.reuses % len(consumed)]
        self.reuses += 1
        return leaf

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theorem_id": self.theorem_id,
            "k": self.k,
            "first_level": [a.to_dict() for a in self.first_level],
            "order": [list(key) for key in self.order],
            "leaves": {
                ",".join(str(i) for i in key): leaf.statement
                for key, leaf in sorted(self.leaves.items())
            },
            "cursor": self.cursor,
            "reuses": self.reuses,
            "warnings": list(self.warnings),
        }


_LIST_ITEM = re.compile(r"^\s*(?:\d+[.)]|[-*+•])\s+(?P<body>.+?)\s*$")
_NAMED = re.compile(r"^\**(?P<name>[A-Za-z0-9_.' -]{1,60}?)\**\s*:\s+(?P<statement>.+)$")


def parse_axiom_list(completion: str) -> List[Axiom]:
    """
    Parse a numbered or bulleted list into axioms. Items may be written as
    `name: statement`; other items get positional ids.
    """
    axioms: List[Axiom] = []
    seen: set = set()
    for line in completion.splitlines():
        m = _LIST_ITEM.match(line)
        if not m:
            continue
        body = m.group("body").strip()
        named = _NAMED.match(body)
        if named:
            name, statement = named.group("name").strip(), named.group("statement").strip()
        else:
            name, statement = "", body
        if not statement:
            continue
        axiom_id = re.sub(r"\W+", "_", name).strip("_") or f"a{len(axioms) + 1}"
        base, n = axiom_id, 2
        while axiom_id in seen:
            axiom_id = f"{base}_{n}"
            n += 1
        seen.add(axiom_id)
        axioms.append(Axiom(id=axiom_id, statement=statement))
    return axioms


def build_axiom_tree(
    theorem: Theorem,
    gateway: ModelGateway,
    m_target: Tuple[int, int] = (3, 5),
    k: int = 2,
    selection: str = "lexicographic",
    seed: Optional[int] = None,
) -> AxiomTree:
    low, high = m_target
    if not 1 <= low <= high:
        raise InvalidArgumentError(f"m_target must satisfy 1 <= low <= high, got {m_target}")
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")

    response = gateway.complete(
        PromptRole.PROPOSE_AXIOMS, {"theorem": theorem, "m_min": low, "m_max": high}
    )
    proposed = parse_axiom_list(response.text)
    warnings: List[str] = []
    if not proposed:
        raise TreeConstructionError(f"model proposed no axioms for {theorem.id}")
    if len(proposed) > high:
        warnings.append(f"truncated {len(proposed)} proposals to {high}")
        proposed = proposed[:high]
    if len(proposed) < low:
        warnings.append(f"only {len(proposed)} axioms proposed, expected at least {low}")
    if k > len(proposed):
        raise TreeConstructionError(
            f"{len(proposed)} axioms proposed for {theorem.id}, fewer than combination size k={k}"
        )
    for w in warnings:
        logger.warning("axiom tree %s: %s", theorem.id, w)

    order = k_combinations(len(proposed), k)
    if selection == "random":
        random.Random(seed).shuffle(order)
    elif selection != "lexicographic":
        raise InvalidArgumentError(f"unknown selection {selection!r}")

    return AxiomTree(theorem_id=theorem.id, first_level=proposed, k=k, order=order, warnings=warnings)


def next_leaf(tree: AxiomTree, gateway: ModelGateway, theorem: Theorem) -> SecondLevelAxiom:
    """
    Return the leaf under the cursor, synthesizing it on first use, and
    advance the cursor.
    """
    if tree.exhausted:
        raise AxiomTreeExhausted(
            f"all {tree.capacity} combinations of the tree for {tree.theorem_id} are consumed"
        )
    key = tree.order[tree.cursor]
    leaf = tree.leaves.get(key)
    if leaf is None:
        selected = [tree.first_level[i - 1] for i in key]
        response = gateway.complete(
            PromptRole.SYNTHESIZE_AXIOM,
            {"theorem": theorem, "selected_axioms": [a.to_dict() for a in selected]},
        )
        statement = response.text.strip()
        if not statement:
            # An empty synthesis still yields a usable leaf: the conjunction of its parents.
            statement = " and ".join(a.statement for a in selected)
        leaf = SecondLevelAxiom(parent_indices=key, statement=statement)
        tree.leaves[key] = leaf
    tree.cursor += 1
    return leaf
