"""Corpus data model: schemas, table data, join ground truth, lineage, and the
on-disk layout (one RFC-4180 CSV per table plus a JSON manifest with a content
digest). All cell values are strings; the empty string is the null token.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path

from .common import NULL, CorpusError, canonical_json, norm_header, slugify

DATATYPES = ("text", "integer", "decimal", "date", "categorical")

KIND_EXACT = "exact"
KIND_PKFK = "pkfk"
KIND_SEMANTIC = "semantic"
JOIN_KINDS = (KIND_EXACT, KIND_PKFK, KIND_SEMANTIC)

EASY = "easy"
DIFFICULT = "difficult"

MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1


@dataclass
class Column:
    name: str
    semantic_type: str
    datatype: str = "text"

    def validate(self) -> None:
        if self.datatype not in DATATYPES:
            raise CorpusError(f"unknown datatype {self.datatype!r} for column {self.name!r}")


@dataclass
class TableSchema:
    name: str
    columns: list[Column]
    primary_key: str | None = None

    def validate(self) -> None:
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            dupes = sorted({n for n in names if names.count(n) > 1})
            raise CorpusError(f"table {self.name!r}: duplicate column names {dupes}")
        if self.primary_key is not None and self.primary_key not in names:
            raise CorpusError(
                f"table {self.name!r}: primary key {self.primary_key!r} does not resolve"
            )
        for c in self.columns:
            c.validate()

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> Column:
        for c in self.columns:
            if c.name == name:
                return c
        raise CorpusError(f"table {self.name!r} has no column {name!r}")

    def column_index(self, name: str) -> int:
        for i, c in enumerate(self.columns):
            if c.name == name:
                return i
        raise CorpusError(f"table {self.name!r} has no column {name!r}")


@dataclass
class TableData:
    schema: TableSchema
    rows: list[tuple[str, ...]]

    @property
    def name(self) -> str:
        return self.schema.name

    def validate(self) -> None:
        self.schema.validate()
        width = len(self.schema.columns)
        for i, row in enumerate(self.rows, start=1):
            if len(row) != width:
                raise CorpusError(
                    f"table {self.name!r} row {i}: arity {len(row)} != column count {width}"
                )
        if self.schema.primary_key is not None and self.rows:
            idx = self.schema.column_index(self.schema.primary_key)
            seen: set[str] = set()
            for i, row in enumerate(self.rows, start=1):
                v = row[idx]
                if v == NULL:
                    raise CorpusError(f"table {self.name!r} row {i}: null primary key")
                if v in seen:
                    raise CorpusError(
                        f"table {self.name!r} row {i}: duplicate primary key {v!r}"
                    )
                seen.add(v)

    def column_values(self, column: str) -> list[str]:
        idx = self.schema.column_index(column)
        return [row[idx] for row in self.rows]

    def value_set(self, column: str) -> set[str]:
        """Distinct non-null values; nulls never participate in joins."""
        return {v for v in self.column_values(column) if v != NULL}


ColumnRef = tuple[str, str]  # (table name, column name)


@dataclass
class JoinPair:
    left: ColumnRef
    right: ColumnRef
    kind: str
    difficulty: str = EASY
    key_side: str | None = None  # "left"/"right" for pkfk pairs
    mapping_id: str | None = None

    def __post_init__(self):
        self.left = tuple(self.left)
        self.right = tuple(self.right)
        if self.right < self.left:
            self.left, self.right = self.right, self.left
            if self.key_side == "left":
                self.key_side = "right"
            elif self.key_side == "right":
                self.key_side = "left"

    def key(self) -> tuple[ColumnRef, ColumnRef]:
        return (self.left, self.right)

    def to_dict(self) -> dict:
        return {
            "left": list(self.left),
            "right": list(self.right),
            "kind": self.kind,
            "difficulty": self.difficulty,
            "key_side": self.key_side,
            "mapping_id": self.mapping_id,
        }

    @staticmethod
    def from_dict(d: dict) -> "JoinPair":
        return JoinPair(
            left=tuple(d["left"]),
            right=tuple(d["right"]),
            kind=d["kind"],
            difficulty=d.get("difficulty", EASY),
            key_side=d.get("key_side"),
            mapping_id=d.get("mapping_id"),
        )


@dataclass
class LineageEvent:
    event_id: str
    op: str
    source: tuple[str, str | None]
    result: tuple[str, str | None]
    params: dict = field(default_factory=dict)
    # Value-level mapping h (old -> new), defined when the op rewrites whole
    # values consistently; this is what semantic classification consumes.
    value_map: dict[str, str] | None = None
    # Cell-level record [(row index, old, new), ...] for ops that change
    # individual cells (nulls, duplicates); used for byte-exact replay.
    cell_changes: list[tuple[int, str, str]] | None = None

    def to_dict(self) -> dict:
        return {
            "event_id": self.event_id,
            "op": self.op,
            "source": list(self.source),
            "result": list(self.result),
            "params": self.params,
            "value_map": self.value_map,
            "cell_changes": [list(c) for c in self.cell_changes] if self.cell_changes else None,
        }

    @staticmethod
    def from_dict(d: dict) -> "LineageEvent":
        cells = d.get("cell_changes")
        return LineageEvent(
            event_id=d["event_id"],
            op=d["op"],
            source=tuple(d["source"]),
            result=tuple(d["result"]),
            params=d.get("params", {}),
            value_map=d.get("value_map"),
            cell_changes=[(c[0], c[1], c[2]) for c in cells] if cells else None,
        )


def replay_mapping(
    values: list[str],
    value_map: dict[str, str] | None = None,
    cell_changes: list[tuple[int, str, str]] | None = None,
) -> list[str]:
    """Re-apply a recorded mapping to source values; reproduces the perturbed column."""
    out = list(values)
    if value_map:
        out = [value_map.get(v, v) for v in out]
    if cell_changes:
        for i, _old, new in cell_changes:
            out[i] = new
    return out


@dataclass
class CorpusStats:
    tables: int = 0
    base_tables: int = 0
    avg_rows: float = 0.0
    avg_cols: float = 0.0
    exact_joins: int = 0
    semantic_joins: int = 0

    def to_dict(self) -> dict:
        return {
            "tables": self.tables,
            "base_tables": self.base_tables,
            "avg_rows": self.avg_rows,
            "avg_cols": self.avg_cols,
            "exact_joins": self.exact_joins,
            "semantic_joins": self.semantic_joins,
        }

    @staticmethod
    def from_dict(d: dict) -> "CorpusStats":
        return CorpusStats(**d)


def dedupe_pairs(pairs: list[JoinPair]) -> list[JoinPair]:
    """Canonical, deduplicated, sorted ground truth (first occurrence wins)."""
    seen: dict[tuple, JoinPair] = {}
    for p in pairs:
        seen.setdefault(p.key(), p)
    return [seen[k] for k in sorted(seen)]


@dataclass
class Corpus:
    tables: list[TableData]
    ground_truth: list[JoinPair] = field(default_factory=list)
    lineage: list[LineageEvent] = field(default_factory=list)
    seed: int = 0
    stats: CorpusStats = field(default_factory=CorpusStats)

    def __post_init__(self):
        # canonical table order makes save/load the identity on the model
        self.tables = sorted(self.tables, key=lambda t: t.name)
        self.ground_truth = dedupe_pairs(self.ground_truth)

    def table(self, name: str) -> TableData:
        for t in self.tables:
            if t.name == name:
                return t
        raise CorpusError(f"no table named {name!r}")

    def has_table(self, name: str) -> bool:
        return any(t.name == name for t in self.tables)

    def table_names(self) -> list[str]:
        return [t.name for t in self.tables]

    def base_table_names(self) -> list[str]:
        """Tables not produced as the result of any lineage event."""
        derived = {ev.result[0] for ev in self.lineage if ev.op != "noop"}
        return [t.name for t in self.tables if t.name not in derived]

    def mappings(self) -> list[LineageEvent]:
        return [ev for ev in self.lineage if ev.value_map]

    def validate(self) -> None:
        names = self.table_names()
        if len(set(names)) != len(names):
            raise CorpusError("duplicate table names in corpus")
        base = set(self.base_table_names())
        for t in self.tables:
            t.validate()
            if t.name in base:
                for c in t.schema.columns:
                    if not c.semantic_type:
                        raise CorpusError(
                            f"base table {t.name!r} column {c.name!r} lacks a semantic type"
                        )
        for p in self.ground_truth:
            for ref in (p.left, p.right):
                if not self.has_table(ref[0]):
                    raise CorpusError(f"ground truth references missing table {ref[0]!r}")
                self.table(ref[0]).schema.column_index(ref[1])
            if p.kind not in JOIN_KINDS:
                raise CorpusError(f"unknown join kind {p.kind!r}")
        for ev in self.lineage:
            if ev.op == "noop":
                continue
            rt = ev.result[0]
            if not self.has_table(rt):
                raise CorpusError(f"lineage event {ev.event_id} result table {rt!r} missing")
        expect = compute_stats(self)
        if expect != self.stats:
            raise CorpusError(
                f"corpus stats out of date: stored {self.stats.to_dict()} != recomputed {expect.to_dict()}"
            )

    def refresh_stats(self) -> None:
        self.stats = compute_stats(self)


def compute_stats(corpus: Corpus) -> CorpusStats:
    n = len(corpus.tables)
    avg_rows = round(sum(len(t.rows) for t in corpus.tables) / n, 4) if n else 0.0
    avg_cols = round(sum(len(t.schema.columns) for t in corpus.tables) / n, 4) if n else 0.0
    exact = sum(1 for p in corpus.ground_truth if p.kind in (KIND_EXACT, KIND_PKFK))
    semantic = sum(1 for p in corpus.ground_truth if p.kind == KIND_SEMANTIC)
    return CorpusStats(
        tables=n,
        base_tables=len(corpus.base_table_names()),
        avg_rows=avg_rows,
        avg_cols=avg_cols,
        exact_joins=exact,
        semantic_joins=semantic,
    )


def classify_pair_difficulty(left_col: str, right_col: str) -> str:
    return EASY if norm_header(left_col) == norm_header(right_col) else DIFFICULT


def _csv_bytes(table: TableData) -> bytes:
    buf = io.StringIO(newline="")
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(table.schema.column_names())
    writer.writerows(table.rows)
    return buf.getvalue().encode("utf-8")


def _table_files(corpus: Corpus) -> dict[str, str]:
    files: dict[str, str] = {}
    used: set[str] = set()
    for name in sorted(corpus.table_names()):
        base = slugify(name)
        candidate = base
        k = 2
        while candidate in used:
            candidate = f"{base}_{k}"
            k += 1
        used.add(candidate)
        files[name] = candidate + ".csv"
    return files


def _manifest_core(corpus: Corpus, files: dict[str, str]) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "seed": corpus.seed,
        "stats": corpus.stats.to_dict(),
        "tables": [
            {
                "name": t.name,
                "file": files[t.name],
                "primary_key": t.schema.primary_key,
                "rows": len(t.rows),
                "columns": [
                    {"name": c.name, "semantic_type": c.semantic_type, "datatype": c.datatype}
                    for c in t.schema.columns
                ],
            }
            for t in sorted(corpus.tables, key=lambda t: t.name)
        ],
        "ground_truth": [p.to_dict() for p in dedupe_pairs(corpus.ground_truth)],
        "lineage": [ev.to_dict() for ev in corpus.lineage],
    }


def _digest(core: dict, blobs: dict[str, bytes]) -> str:
    import hashlib

    h = hashlib.sha256()
    for name in sorted(blobs):
        h.update(name.encode("utf-8") + b"\x00" + blobs[name] + b"\x00")
    h.update(canonical_json(core).encode("utf-8"))
    return h.hexdigest()


def save_corpus(corpus: Corpus, directory: str | Path) -> str:
    """Write one CSV per table plus manifest.json; returns the content digest.

    Invariant violations abort before anything is written. Identical corpora
    produce byte-identical manifests.
    """
    corpus.validate()
    directory = Path(directory)
    files = _table_files(corpus)
    blobs = {files[t.name]: _csv_bytes(t) for t in corpus.tables}
    core = _manifest_core(corpus, files)
    digest = _digest(core, blobs)
    manifest = dict(core)
    manifest["digest"] = digest

    directory.mkdir(parents=True, exist_ok=True)
    for fname, blob in blobs.items():
        (directory / fname).write_bytes(blob)
    text = json.dumps(manifest, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    (directory / MANIFEST_NAME).write_text(text, encoding="utf-8")
    return digest


def load_corpus(directory: str | Path) -> Corpus:
    """Load and verify a corpus directory written by save_corpus."""
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.exists():
        raise CorpusError(f"no {MANIFEST_NAME} in {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))

    tables: list[TableData] = []
    blobs: dict[str, bytes] = {}
    for entry in manifest.get("tables", []):
        schema = TableSchema(
            name=entry["name"],
            columns=[
                Column(c["name"], c["semantic_type"], c["datatype"]) for c in entry["columns"]
            ],
            primary_key=entry.get("primary_key"),
        )
        path = directory / entry["file"]
        if not path.exists():
            raise CorpusError(f"manifest references missing CSV {entry['file']!r}")
        blob = path.read_bytes()
        blobs[entry["file"]] = blob
        reader = csv.reader(io.StringIO(blob.decode("utf-8"), newline=""))
        rows = [tuple(r) for r in reader]
        if not rows:
            raise CorpusError(f"table {entry['name']!r}: empty CSV (missing header)")
        header = list(rows[0])
        if header != schema.column_names():
            raise CorpusError(
                f"table {entry['name']!r}: CSV header {header} != schema columns"
            )
        width = len(schema.columns)
        for i, row in enumerate(rows[1:], start=1):
            if len(row) != width:
                raise CorpusError(
                    f"table {entry['name']!r} row {i}: arity {len(row)} != column count {width}"
                )
        tables.append(TableData(schema=schema, rows=rows[1:]))

    corpus = Corpus(
        tables=tables,
        ground_truth=[JoinPair.from_dict(d) for d in manifest.get("ground_truth", [])],
        lineage=[LineageEvent.from_dict(d) for d in manifest.get("lineage", [])],
        seed=manifest.get("seed", 0),
        stats=CorpusStats.from_dict(manifest.get("stats", {})),
    )

    files = {t["name"]: t["file"] for t in manifest.get("tables", [])}
    core = _manifest_core(corpus, files)
    expect = _digest(core, blobs)
    if expect != manifest.get("digest"):
        raise CorpusError(
            f"digest mismatch: manifest says {manifest.get('digest')}, contents give {expect}"
        )
    corpus.validate()
    return corpus
