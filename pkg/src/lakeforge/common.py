"""Shared plumbing: error types, stable hashing, canonical JSON, string metrics."""

from __future__ import annotations

import hashlib
import json
import random
import re

# Reserved null token: an empty cell is a null.
NULL = ""


class LakeforgeError(Exception):
    """Base class for all errors raised by this package."""


class OntologyError(LakeforgeError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CorpusError(LakeforgeError):
    pass


class GatewayError(LakeforgeError):
    pass


class CacheMiss(GatewayError):
    def __init__(self, digest: str):
        self.digest = digest
        super().__init__(f"replay cache miss for request digest {digest}")


class GenerationError(LakeforgeError):
    pass


class PerturbationError(LakeforgeError):
    def __init__(self, message: str, step_index: int | None = None):
        self.step_index = step_index
        if step_index is not None:
            message = f"step {step_index}: {message}"
        super().__init__(message)


class EvaluationError(LakeforgeError):
    pass


def stable_hash(*parts: object) -> int:
    """Deterministic 64-bit hash of the parts (process-independent, unlike hash())."""
    joined = "\x1f".join(str(p) for p in parts)
    digest = hashlib.sha256(joined.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def seeded_rng(*parts: object) -> random.Random:
    return random.Random(stable_hash(*parts))


def canonical_json(obj: object) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def slugify(name: str) -> str:
    """Filesystem-safe slug for a table name."""
    s = re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")
    return s or "t"


def norm_header(header: str) -> str:
    """Header normalization used for easy/difficult labeling: case fold, collapse whitespace."""
    return " ".join(header.split()).casefold()


def split_words(name: str) -> list[str]:
    """Split an identifier into words: whitespace, underscores and camelCase humps."""
    parts = re.split(r"[\s_]+", name.strip())
    words: list[str] = []
    for part in parts:
        if not part:
            continue
        words.extend(re.findall(r"[A-Z]+(?![a-z])|[A-Z][a-z0-9]*|[a-z0-9]+", part))
    return words


def levenshtein(a: str, b: str) -> int:
    if a == b:
        return 0
    if not a:
        return len(b)
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def lev_ratio(a: str, b: str) -> float:
    """Normalized Levenshtein similarity in [0, 1]; 1.0 for two empty strings."""
    if a == b:
        return 1.0
    m = max(len(a), len(b))
    if m == 0:
        return 1.0
    return 1.0 - levenshtein(a, b) / m


def token_jaccard(a: str, b: str) -> float:
    ta = {w.casefold() for w in split_words(a)}
    tb = {w.casefold() for w in split_words(b)}
    if not ta and not tb:
        return 1.0
    if not ta or not tb:
        return 0.0
    return len(ta & tb) / len(ta | tb)


def round_half_up(x: float) -> int:
    """Round halves away from zero (0.5 -> 1), unlike banker's rounding."""
    import math

    return int(math.floor(x + 0.5))
