import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import fig1_text, finance_ontology_text  # noqa: E402

from lakeforge.generate import generate_base_tables, plan_generation
from lakeforge.ontology import build_dependency_graph, ontology_to_schemas, parse_ontology


@pytest.fixture(scope="session")
def fig1_ontology():
    return parse_ontology(fig1_text())


@pytest.fixture(scope="session")
def fig1_schema_set(fig1_ontology):
    schema_set, _ = ontology_to_schemas(fig1_ontology)
    return schema_set


def make_corpus(ontology_text: str, seed: int = 42, row_cap: int = 40):
    onto = parse_ontology(ontology_text)
    schema_set, _ = ontology_to_schemas(onto)
    graph = build_dependency_graph(schema_set)
    plan = plan_generation(graph, row_caps=row_cap, backend="offline")
    corpus, report = generate_base_tables(schema_set, plan, seed=seed)
    return corpus


@pytest.fixture()
def fig1_corpus():
    return make_corpus(fig1_text(), seed=42, row_cap=40)


@pytest.fixture(scope="session")
def small_finance_corpus():
    return make_corpus(finance_ontology_text(6), seed=7, row_cap=30)
