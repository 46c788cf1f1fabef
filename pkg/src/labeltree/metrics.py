"""Evaluation measures for paired true/predicted taxonomy paths.

All functions take a sequence of ``(true_path, predicted_path)`` pairs,
where each path is the full root-to-leaf node sequence.  The root carries
no information (it is on every path) and is excluded from all set-based
measures.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from .hierarchy import Tree

__all__ = [
    "EvaluationReport",
    "zero_one_loss",
    "symmetric_loss",
    "hierarchical_loss",
    "h_fmeasure",
    "evaluate",
]

Pair = tuple[tuple[str, ...], tuple[str, ...]]


def _check_pairs(pairs: Sequence[Pair]) -> None:
    if not pairs:
        raise ValueError("no evaluation pairs given")


def zero_one_loss(pairs: Sequence[Pair]) -> float:
    """Fraction of samples whose predicted path is not exactly the true one."""
    _check_pairs(pairs)
    wrong = sum(1 for true, pred in pairs if tuple(pred) != tuple(true))
    return wrong / len(pairs)


def symmetric_loss(pairs: Sequence[Pair]) -> float:
    """Mean symmetric-difference size of the two paths' non-root node sets."""
    _check_pairs(pairs)
    total = 0
    for true, pred in pairs:
        total += len(set(true[1:]) ^ set(pred[1:]))
    return total / len(pairs)


def hierarchical_loss(
    pairs: Sequence[Pair], tree: Tree, weighting: str = "sib"
) -> float:
    """Depth-discounted loss charging only the first point of divergence.

    Each path maps to a binary indicator over the tree's node order; the
    first position where the two indicators disagree is charged its node
    coefficient, and later positions are ignored (their prefix already
    mismatches).  Coefficients:

    * ``"sib"``: the root has weight 1 and each node divides its parent's
      weight by the parent's child count, so mistakes high in the tree
      cost more and sibling weights sum to the parent's.
    * ``"sub"``: subtree size (node plus offspring) over the number of
      non-root nodes.
    """
    _check_pairs(pairs)
    if weighting not in ("sib", "sub"):
        raise ValueError(f"weighting must be 'sib' or 'sub', got {weighting!r}")
    if weighting == "sib":
        coef = {}
        for node in tree.node_order:
            parent = tree.parent(node)
            parent_coef = 1.0 if parent == tree.root else coef[parent]
            coef[node] = parent_coef / len(tree.children(parent))
    else:
        coef = {
            node: tree.subtree_size(node) / tree.q for node in tree.node_order
        }

    total = 0.0
    for true, pred in pairs:
        true_idx = {tree.order_index(node) for node in true[1:]}
        pred_idx = {tree.order_index(node) for node in pred[1:]}
        diverging = true_idx ^ pred_idx
        if diverging:
            first = min(diverging)
            total += coef[tree.node_order[first - 1]]
    return total / len(pairs)


def h_fmeasure(pairs: Sequence[Pair], tree: Tree) -> tuple[float, float, float]:
    """Hierarchical precision, recall, and F-measure.

    Each path is augmented with all ancestors of its nodes (a no-op for
    full root-to-leaf paths, root excluded); precision and recall pool the
    intersection sizes over samples against the predicted and true
    augmented sizes respectively.
    """
    _check_pairs(pairs)
    inter = pred_size = true_size = 0
    for true, pred in pairs:
        for node in (*true, *pred):
            if node not in tree:
                raise ValueError(f"node {node!r} is not in the tree")
        true_set, pred_set = set(true[1:]), set(pred[1:])
        inter += len(true_set & pred_set)
        pred_size += len(pred_set)
        true_size += len(true_set)
    hp = inter / pred_size if pred_size else 0.0
    hr = inter / true_size if true_size else 0.0
    hf = 2.0 * hp * hr / (hp + hr) if hp + hr > 0 else 0.0
    return hp, hr, hf


@dataclass
class EvaluationReport:
    """All measures for one set of prediction pairs."""

    l01: float
    l_delta: float
    l_h_sib: float
    l_h_sub: float
    hp: float
    hr: float
    hf: float
    n_te: int
    wall_time_seconds: float = 0.0

    _FIELDS = (
        ("l01", "zero-one loss"),
        ("l_delta", "symmetric loss"),
        ("l_h_sib", "hierarchical loss (sibling weights)"),
        ("l_h_sub", "hierarchical loss (subtree weights)"),
        ("hp", "hierarchical precision"),
        ("hr", "hierarchical recall"),
        ("hf", "hierarchical F-measure"),
    )

    def to_dict(self, include_timing: bool = True) -> dict:
        out = {name: getattr(self, name) for name, _ in self._FIELDS}
        out["n_te"] = self.n_te
        if include_timing:
            out["wall_time_seconds"] = self.wall_time_seconds
        return out

    def to_json(self, include_timing: bool = True) -> str:
        return json.dumps(self.to_dict(include_timing), indent=2) + "\n"

    def to_text(self, include_timing: bool = True) -> str:
        rows = [(label, f"{getattr(self, name):.6f}") for name, label in self._FIELDS]
        rows.append(("samples", str(self.n_te)))
        if include_timing:
            rows.append(("wall time (s)", f"{self.wall_time_seconds:.3f}"))
        width = max(len(label) for label, _ in rows)
        return "\n".join(f"{label:<{width}}  {value}" for label, value in rows) + "\n"


def evaluate(
    pairs: Sequence[Pair], tree: Tree, wall_time_seconds: float = 0.0
) -> EvaluationReport:
    """Compute every measure on the given pairs."""
    hp, hr, hf = h_fmeasure(pairs, tree)
    return EvaluationReport(
        l01=zero_one_loss(pairs),
        l_delta=symmetric_loss(pairs),
        l_h_sib=hierarchical_loss(pairs, tree, "sib"),
        l_h_sub=hierarchical_loss(pairs, tree, "sub"),
        hp=hp,
        hr=hr,
        hf=hf,
        n_te=len(pairs),
        wall_time_seconds=wall_time_seconds,
    )
