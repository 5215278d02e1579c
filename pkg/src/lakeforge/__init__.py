"""lakeforge: ontology-driven synthetic table corpora with mechanical
joinability ground truth, plus matchers and an evaluation harness."""

__version__ = "0.1.0"

from .model import Corpus, JoinPair, TableData, TableSchema, Column, load_corpus, save_corpus
from .ontology import parse_ontology, ontology_to_schemas, build_dependency_graph

__all__ = [
    "Corpus",
    "JoinPair",
    "TableData",
    "TableSchema",
    "Column",
    "load_corpus",
    "save_corpus",
    "parse_ontology",
    "ontology_to_schemas",
    "build_dependency_graph",
    "__version__",
]
