"""Joinability-discovery baselines.

jl_match     fuzzy Jaccard over distinct instance values, where two values
             count as equal when their normalized Levenshtein similarity
             reaches the threshold; the value matching is optimal (maximum
             cardinality), computed with Hopcroft-Karp over the admissible
             pairs after an exact-equality fast path.
sf_match     similarity flooding: build typed schema graphs, form the pairwise
             connectivity graph over same-typed node pairs, then iterate
             sigma' = normalize(sigma0 + sigma + propagate(sigma)) until the
             residual drops below epsilon.
hybrid_match weighted blend of header similarity and instance containment.
external_match  run an external matcher process and read its predictions CSV.

All matchers are stateless and symmetric; scores live in [0, 1].
"""

from __future__ import annotations

import csv
import io
import subprocess
from collections import deque
from dataclasses import dataclass

from .common import EvaluationError, lev_ratio, seeded_rng, token_jaccard
from .model import ColumnRef, Corpus, TableData

VALUE_SAMPLE_CAP = 500  # distinct values per column fed to instance matchers


@dataclass
class MatchPrediction:
    left: ColumnRef
    right: ColumnRef
    score: float

    def __post_init__(self):
        self.left = tuple(self.left)
        self.right = tuple(self.right)
        if self.right < self.left:
            self.left, self.right = self.right, self.left

    def key(self) -> tuple[ColumnRef, ColumnRef]:
        return (self.left, self.right)


def dedupe_predictions(preds: list[MatchPrediction]) -> list[MatchPrediction]:
    """Canonical ordering, max score kept on duplicates."""
    best: dict[tuple, MatchPrediction] = {}
    for p in preds:
        cur = best.get(p.key())
        if cur is None or p.score > cur.score:
            best[p.key()] = p
    return [best[k] for k in sorted(best)]


def sample_values(table: TableData, column: str, cap: int = VALUE_SAMPLE_CAP, seed: int = 0) -> list[str]:
    values = sorted(table.value_set(column))
    if len(values) <= cap:
        return values
    rng = seeded_rng("sample_values", seed, table.name, column)
    return sorted(rng.sample(values, cap))


# --------------------------------------------------------------------------
# Jaccard-Levenshtein
# --------------------------------------------------------------------------


def _max_bipartite_matching(adj: dict[int, list[int]], n_left: int, n_right: int) -> int:
    """Hopcroft-Karp maximum cardinality matching size."""
    INF = float("inf")
    match_l = [-1] * n_left
    match_r = [-1] * n_right
    dist = [0.0] * n_left

    def bfs() -> bool:
        q = deque()
        for u in range(n_left):
            if match_l[u] == -1:
                dist[u] = 0
                q.append(u)
            else:
                dist[u] = INF
        found = False
        while q:
            u = q.popleft()
            for v in adj.get(u, ()):
                w = match_r[v]
                if w == -1:
                    found = True
                elif dist[w] == INF:
                    dist[w] = dist[u] + 1
                    q.append(w)
        return found

    def dfs(u: int) -> bool:
        for v in adj.get(u, ()):
            w = match_r[v]
            if w == -1 or (dist[w] == dist[u] + 1 and dfs(w)):
                match_l[u] = v
                match_r[v] = u
                return True
        dist[u] = INF
        return False

    size = 0
    while bfs():
        for u in range(n_left):
            if match_l[u] == -1 and dfs(u):
                size += 1
    return size


def _lev_within(a: str, b: str, k: int) -> int:
    """Banded Levenshtein: the exact distance when it is <= k, else k + 1."""
    if a == b:
        return 0
    la, lb = len(a), len(b)
    big = k + 1
    if abs(la - lb) > k or k <= 0:
        return big
    prev = [j if j <= k else big for j in range(lb + 1)]
    for i in range(1, la + 1):
        lo, hi = max(1, i - k), min(lb, i + k)
        cur = [big] * (lb + 1)
        if i <= k:
            cur[0] = i
        row_min = big
        for j in range(lo, hi + 1):
            cost = prev[j - 1] + (a[i - 1] != b[j - 1])
            if prev[j] + 1 < cost:
                cost = prev[j] + 1
            if cur[j - 1] + 1 < cost:
                cost = cur[j - 1] + 1
            cur[j] = cost if cost < big else big
            if cur[j] < row_min:
                row_min = cur[j]
        if row_min > k:
            return big
        prev = cur
    return prev[lb]


def fuzzy_jaccard(values_a: list[str], values_b: list[str], delta: float) -> float:
    """Jaccard over two value sets with Levenshtein-thresholded equality.

    The value-to-value matching is maximum cardinality (Hopcroft-Karp) over
    every admissible pair, so the score never depends on tie-breaking. With
    delta = 1.0 this reduces to classical Jaccard over the distinct sets.
    """
    sa, sb = set(values_a), set(values_b)
    if not sa or not sb:
        return 0.0
    if delta >= 1.0:
        return len(sa & sb) / len(sa | sb)
    left = sorted(sa)
    right = sorted(sb)
    right_len = [len(v) for v in right]
    adj: dict[int, list[int]] = {}
    for i, va in enumerate(left):
        la = len(va)
        for j, vb in enumerate(right):
            m = max(la, right_len[j], 1)
            kmax = int((1.0 - delta) * m + 1e-9)  # ratio >= delta iff dist <= kmax
            if abs(la - right_len[j]) > kmax:
                continue
            if va == vb or (kmax > 0 and _lev_within(va, vb, kmax) <= kmax):
                adj.setdefault(i, []).append(j)
    matched = _max_bipartite_matching(adj, len(left), len(right))
    union = len(sa) + len(sb) - matched
    return matched / union if union else 0.0


def jl_match(
    a: TableData,
    b: TableData,
    delta: float = 0.8,
    cap: int = VALUE_SAMPLE_CAP,
    seed: int = 0,
) -> list[MatchPrediction]:
    samples_b = {cb.name: sample_values(b, cb.name, cap, seed) for cb in b.schema.columns}
    preds = []
    for ca in a.schema.columns:
        va = sample_values(a, ca.name, cap, seed)
        for cb in b.schema.columns:
            score = fuzzy_jaccard(va, samples_b[cb.name], delta)
            preds.append(MatchPrediction((a.name, ca.name), (b.name, cb.name), score))
    return dedupe_predictions(preds)


# --------------------------------------------------------------------------
# Similarity Flooding
# --------------------------------------------------------------------------

DATATYPE_BONUS = 0.05
TOP_TOKENS = 10


def _top_tokens(t: TableData, column: str) -> frozenset[str]:
    counts: dict[str, int] = {}
    for v in t.column_values(column):
        for tok in v.lower().split():
            counts[tok] = counts.get(tok, 0) + 1
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return frozenset(tok for tok, _n in ranked[:TOP_TOKENS])


def _schema_graph(t: TableData, include_tokens: bool) -> list[tuple[tuple, str, tuple]]:
    """Typed edges: table -column-> column nodes, column -type-> datatype nodes,
    optionally column -tokens-> a frequent-instance-token node."""
    edges = []
    tnode = ("table", t.name)
    for c in t.schema.columns:
        cnode = ("column", c.name)
        edges.append((tnode, "column", cnode))
        edges.append((cnode, "type", ("datatype", c.datatype)))
        if include_tokens:
            edges.append((cnode, "tokens", ("tokens", _top_tokens(t, c.name))))
    return edges


def sf_match(
    a: TableData,
    b: TableData,
    epsilon: float = 1e-3,
    max_iters: int = 200,
    include_tokens: bool = False,
) -> tuple[list[MatchPrediction], bool]:
    """Similarity-flooding fixpoint over the pairwise connectivity graph.

    Returns (predictions for column pairs, converged flag). Initial scores are
    name similarities (plus a small datatype-equality bonus for columns);
    propagation coefficients are the inverse product of same-label edge
    multiplicities on both sides, applied along and against pair edges. The
    default graphs are schema-only; include_tokens adds one node per column
    carrying its most frequent instance tokens.
    """
    edges_a = _schema_graph(a, include_tokens)
    edges_b = _schema_graph(b, include_tokens)
    nodes_a = sorted({n for e in edges_a for n in (e[0], e[2])})
    nodes_b = sorted({n for e in edges_b for n in (e[0], e[2])})

    def initial(na: tuple, nb: tuple) -> float:
        kind = na[0]
        if kind == "datatype":
            return 1.0 if na[1] == nb[1] else 0.0
        if kind == "tokens":
            sets_a, sets_b = na[1], nb[1]
            union = sets_a | sets_b
            return len(sets_a & sets_b) / len(union) if union else 0.0
        if kind == "table":
            return lev_ratio(na[1].lower(), nb[1].lower())
        sim = lev_ratio(na[1].lower(), nb[1].lower())
        return sim  # datatype bonus added below, needs column objects

    pairs: list[tuple[tuple, tuple]] = [
        (na, nb) for na in nodes_a for nb in nodes_b if na[0] == nb[0]
    ]
    index = {p: i for i, p in enumerate(pairs)}
    sigma0 = []
    dtype_a = {c.name: c.datatype for c in a.schema.columns}
    dtype_b = {c.name: c.datatype for c in b.schema.columns}
    for na, nb in pairs:
        s = initial(na, nb)
        if na[0] == "column" and dtype_a[na[1]] == dtype_b[nb[1]]:
            s = min(1.0, s + DATATYPE_BONUS)
        sigma0.append(s)

    # pair graph edges with propagation coefficients (both directions)
    out_mult_a: dict[tuple[tuple, str], int] = {}
    in_mult_a: dict[tuple[tuple, str], int] = {}
    for s, l, d in edges_a:
        out_mult_a[(s, l)] = out_mult_a.get((s, l), 0) + 1
        in_mult_a[(d, l)] = in_mult_a.get((d, l), 0) + 1
    out_mult_b: dict[tuple[tuple, str], int] = {}
    in_mult_b: dict[tuple[tuple, str], int] = {}
    for s, l, d in edges_b:
        out_mult_b[(s, l)] = out_mult_b.get((s, l), 0) + 1
        in_mult_b[(d, l)] = in_mult_b.get((d, l), 0) + 1

    prop: list[list[tuple[int, float]]] = [[] for _ in pairs]
    for sa, la, da in edges_a:
        for sb, lb, db in edges_b:
            if la != lb:
                continue
            if (sa, sb) not in index or (da, db) not in index:
                continue
            src, dst = index[(sa, sb)], index[(da, db)]
            w_fwd = 1.0 / (out_mult_a[(sa, la)] * out_mult_b[(sb, lb)])
            w_bwd = 1.0 / (in_mult_a[(da, la)] * in_mult_b[(db, lb)])
            prop[dst].append((src, w_fwd))
            prop[src].append((dst, w_bwd))

    sigma = list(sigma0)
    converged = False
    for _ in range(max_iters):
        nxt = []
        for i in range(len(pairs)):
            flow = sum(w * sigma[j] for j, w in prop[i])
            nxt.append(sigma0[i] + sigma[i] + flow)
        peak = max(nxt) if nxt else 1.0
        if peak > 0:
            nxt = [x / peak for x in nxt]
        residual = max((abs(x - y) for x, y in zip(nxt, sigma)), default=0.0)
        sigma = nxt
        if residual < epsilon:
            converged = True
            break

    preds = []
    for (na, nb), s in zip(pairs, sigma):
        if na[0] == "column":
            preds.append(
                MatchPrediction((a.name, na[1]), (b.name, nb[1]), max(0.0, min(1.0, s)))
            )
    return dedupe_predictions(preds), converged


# --------------------------------------------------------------------------
# name + instance hybrid
# --------------------------------------------------------------------------


def name_similarity(a: str, b: str) -> float:
    return max(lev_ratio(a.lower(), b.lower()), token_jaccard(a, b))


def instance_containment(values_a: list[str], values_b: list[str]) -> float:
    sa, sb = set(values_a), set(values_b)
    if not sa or not sb:
        return 0.0
    return len(sa & sb) / min(len(sa), len(sb))


def hybrid_match(
    a: TableData,
    b: TableData,
    w_name: float = 0.5,
    w_instance: float = 0.5,
    cap: int = VALUE_SAMPLE_CAP,
    seed: int = 0,
) -> list[MatchPrediction]:
    """COMA-style blend: header similarity (max of normalized Levenshtein and
    token-set Jaccard) weighted against instance containment."""
    if w_name < 0 or w_instance < 0 or abs(w_name + w_instance - 1.0) > 1e-9:
        raise EvaluationError("hybrid weights must be non-negative and sum to 1")
    preds = []
    for ca in a.schema.columns:
        va = sample_values(a, ca.name, cap, seed)
        for cb in b.schema.columns:
            vb = sample_values(b, cb.name, cap, seed)
            score = w_name * name_similarity(ca.name, cb.name) + w_instance * instance_containment(va, vb)
            preds.append(MatchPrediction((a.name, ca.name), (b.name, cb.name), score))
    return dedupe_predictions(preds)


# --------------------------------------------------------------------------
# corpus-level orchestration and the external adapter
# --------------------------------------------------------------------------


def match_corpus(corpus: Corpus, matcher: str, jobs: int = 1, **params) -> list[MatchPrediction]:
    """Run a built-in matcher over every cross-table column pair.

    Matchers are stateless, so table pairs score on up to `jobs` threads; the
    combined prediction list is canonical regardless of scheduling."""
    tables = sorted(corpus.tables, key=lambda t: t.name)
    seed = corpus.seed

    def score_pair(pair: tuple[TableData, TableData]) -> list[MatchPrediction]:
        a, b = pair
        if matcher == "jl":
            return jl_match(a, b, seed=seed, **params)
        if matcher == "sf":
            return sf_match(a, b, **params)[0]
        if matcher == "hybrid":
            return hybrid_match(a, b, seed=seed, **params)
        raise EvaluationError(f"unknown matcher {matcher!r}")

    pairs = [
        (tables[i], tables[j])
        for i in range(len(tables))
        for j in range(i + 1, len(tables))
    ]
    if jobs > 1 and len(pairs) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(score_pair, pairs))
    else:
        chunks = [score_pair(p) for p in pairs]
    preds: list[MatchPrediction] = []
    for chunk in chunks:
        preds.extend(chunk)
    return dedupe_predictions(preds)


def write_predictions_csv(preds: list[MatchPrediction]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["left_table", "left_column", "right_table", "right_column", "score"])
    for p in dedupe_predictions(preds):
        writer.writerow([p.left[0], p.left[1], p.right[0], p.right[1], f"{p.score:.6f}"])
    return buf.getvalue()


def parse_predictions_csv(text: str, corpus: Corpus | None = None) -> list[MatchPrediction]:
    """Parse and validate the predictions interchange CSV (line-precise errors)."""
    reader = csv.reader(io.StringIO(text))
    rows = list(reader)
    if not rows:
        raise EvaluationError("empty predictions file")
    start = 1 if rows[0][:1] == ["left_table"] or rows[0] == [
        "left_table", "left_column", "right_table", "right_column", "score",
    ] else 0
    preds = []
    for lineno, row in enumerate(rows[start:], start=start + 1):
        if not row:
            continue
        if len(row) != 5:
            raise EvaluationError(f"predictions line {lineno}: expected 5 fields, got {len(row)}")
        lt, lc, rt, rc, raw = row
        try:
            score = float(raw)
        except ValueError:
            raise EvaluationError(f"predictions line {lineno}: bad score {raw!r}")
        if not (0.0 <= score <= 1.0):
            raise EvaluationError(f"predictions line {lineno}: score {score} outside [0, 1]")
        if corpus is not None:
            for tbl, col in ((lt, lc), (rt, rc)):
                if not corpus.has_table(tbl):
                    raise EvaluationError(
                        f"predictions line {lineno}: unknown table {tbl!r}"
                    )
                corpus.table(tbl).schema.column_index(col)
        preds.append(MatchPrediction((lt, lc), (rt, rc), score))
    return dedupe_predictions(preds)


def external_match(
    corpus_dir: str, command_template: str, corpus: Corpus | None = None, timeout: float = 600.0
) -> list[MatchPrediction]:
    """Run an external matcher: the template's {corpus} placeholder is replaced
    with the corpus directory; predictions are read from stdout (CSV)."""
    import shlex

    cmd = [part.replace("{corpus}", str(corpus_dir)) for part in shlex.split(command_template)]
    proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
    if proc.returncode != 0:
        raise EvaluationError(
            f"external matcher exited {proc.returncode}: {proc.stderr.strip()[:500]}"
        )
    return parse_predictions_csv(proc.stdout, corpus=corpus)
