"""Join ground truth: classification of column pairs as exact / PK-FK /
semantic, difficulty labeling, and mechanical propagation across perturbation
lineage.

A pair is pkfk when one side is its table's primary key and the other side's
non-empty value set is contained in it; exact when the raw value sets
intersect; semantic when some recorded lineage mapping h connects the value
sets (mapped intersection non-empty). Kinds are mutually exclusive, in that
precedence order. "Semantic" deliberately requires a recorded mapping: the
ground truth stays mechanical and auditable, open-world equivalence detection
is the matcher's job.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import (
    ColumnRef,
    Corpus,
    JoinPair,
    KIND_EXACT,
    KIND_PKFK,
    KIND_SEMANTIC,
    classify_pair_difficulty,
    dedupe_pairs,
)
from .ontology import DeclaredJoin


@dataclass
class Classification:
    kind: str  # exact | pkfk | semantic | none
    key_side: str | None = None
    mapping_id: str | None = None


class _Classifier:
    """Corpus-wide classifier with memoized value sets and mapped value sets."""

    def __init__(self, corpus: Corpus):
        self.corpus = corpus
        self._values: dict[ColumnRef, set[str]] = {}
        self._mapped: dict[tuple[str, ColumnRef], set[str]] = {}
        self._mappings = sorted(corpus.mappings(), key=lambda ev: ev.event_id)

    def values(self, ref: ColumnRef) -> set[str]:
        if ref not in self._values:
            self._values[ref] = self.corpus.table(ref[0]).value_set(ref[1])
        return self._values[ref]

    def mapped(self, event_id: str, vm: dict[str, str], ref: ColumnRef) -> set[str]:
        key = (event_id, ref)
        if key not in self._mapped:
            self._mapped[key] = {vm[v] for v in self.values(ref) if v in vm}
        return self._mapped[key]

    def is_pk(self, ref: ColumnRef) -> bool:
        return self.corpus.table(ref[0]).schema.primary_key == ref[1]

    def classify(self, left: ColumnRef, right: ColumnRef) -> Classification:
        lv, rv = self.values(left), self.values(right)
        if self.is_pk(left) and rv and rv <= lv:
            return Classification(KIND_PKFK, key_side="left")
        if self.is_pk(right) and lv and lv <= rv:
            return Classification(KIND_PKFK, key_side="right")
        if lv & rv:
            return Classification(KIND_EXACT)
        for ev in self._mappings:
            vm = ev.value_map or {}
            if self.mapped(ev.event_id, vm, left) & rv:
                return Classification(KIND_SEMANTIC, mapping_id=ev.event_id)
            if self.mapped(ev.event_id, vm, right) & lv:
                return Classification(KIND_SEMANTIC, mapping_id=ev.event_id)
        return Classification("none")


def classify_join(corpus: Corpus, left: ColumnRef, right: ColumnRef) -> Classification:
    """Classify one cross-table column pair. Symmetric up to pkfk orientation."""
    return _Classifier(corpus).classify(left, right)


def classify_difficulty(corpus: Corpus, left: ColumnRef, right: ColumnRef) -> str:
    """easy iff the normalized (case-folded, whitespace-collapsed) headers match."""
    return classify_pair_difficulty(left[1], right[1])


def _type_candidates(corpus: Corpus) -> set[tuple[ColumnRef, ColumnRef]]:
    by_tag: dict[str, list[ColumnRef]] = {}
    for t in corpus.tables:
        for c in t.schema.columns:
            if c.semantic_type:
                by_tag.setdefault(c.semantic_type, []).append((t.name, c.name))
    out: set[tuple[ColumnRef, ColumnRef]] = set()
    for refs in by_tag.values():
        for i in range(len(refs)):
            for j in range(i + 1, len(refs)):
                a, b = refs[i], refs[j]
                if a[0] == b[0]:
                    continue  # within-table pairs are never joins
                out.add((a, b) if a <= b else (b, a))
    return out


def _lineage_candidates(corpus: Corpus) -> set[tuple[ColumnRef, ColumnRef]]:
    out: set[tuple[ColumnRef, ColumnRef]] = set()
    names = set(corpus.table_names())

    def resolves(table: str, column: str) -> bool:
        return any(c.name == column for c in corpus.table(table).schema.columns)

    for ev in corpus.lineage:
        st, sc = ev.source
        rt, rc = ev.result
        if sc is None or rc is None:
            continue
        if st in names and rt in names and st != rt:
            if not (resolves(st, sc) and resolves(rt, rc)):
                continue  # columns may have been renamed or dropped downstream
            a, b = (st, sc), (rt, rc)
            out.add((a, b) if a <= b else (b, a))
    return out


def infer_joins_from_types(corpus: Corpus) -> list[JoinPair]:
    """Candidate pairs from shared semantic types, classified; non-joins dropped."""
    clf = _Classifier(corpus)
    pairs = []
    for a, b in sorted(_type_candidates(corpus)):
        c = clf.classify(a, b)
        if c.kind != "none":
            pairs.append(
                JoinPair(
                    left=a,
                    right=b,
                    kind=c.kind,
                    difficulty=classify_pair_difficulty(a[1], b[1]),
                    key_side=c.key_side,
                    mapping_id=c.mapping_id,
                )
            )
    return dedupe_pairs(pairs)


def recompute_ground_truth(
    corpus: Corpus,
    declared: list[DeclaredJoin] | None = None,
    parent_pairs: list[JoinPair] | None = None,
) -> list[JoinPair]:
    """Full mechanical ground truth from semantic types, declared joins,
    lineage-adjacent columns and any parent pairs, each (re)classified."""
    candidates = _type_candidates(corpus)
    candidates |= _lineage_candidates(corpus)
    names = set(corpus.table_names())
    for j in declared or []:
        a, b = (j.source_table, j.source_column), (j.target_table, j.target_column)
        if a[0] in names and b[0] in names and a[0] != b[0]:
            candidates.add((a, b) if a <= b else (b, a))
    for p in parent_pairs or []:
        if p.left[0] in names and p.right[0] in names:
            try:
                corpus.table(p.left[0]).schema.column_index(p.left[1])
                corpus.table(p.right[0]).schema.column_index(p.right[1])
            except Exception:
                continue
            candidates.add((p.left, p.right))

    clf = _Classifier(corpus)
    pairs = []
    for a, b in sorted(candidates):
        c = clf.classify(a, b)
        if c.kind != "none":
            pairs.append(
                JoinPair(
                    left=a,
                    right=b,
                    kind=c.kind,
                    difficulty=classify_pair_difficulty(a[1], b[1]),
                    key_side=c.key_side,
                    mapping_id=c.mapping_id,
                )
            )
    return dedupe_pairs(pairs)


def propagate_ground_truth(
    corpus: Corpus, parent_pairs: list[JoinPair] | None = None
) -> list[JoinPair]:
    """Derive the current ground truth from parent pairs plus lineage.

    Shared columns of splits classify exact, a fully value-mapped column
    rewrites its pairs to semantic (with mapping_id), header-only changes
    keep the kind but may flip difficulty, and exact joinability closes
    transitively over copy lineage because copied value sets stay equal.
    Mappings are never composed.
    """
    if parent_pairs is None:
        parent_pairs = corpus.ground_truth
    return recompute_ground_truth(corpus, parent_pairs=parent_pairs)
