from __future__ import annotations

import random

import pytest

from rovi.model import Mbr, RoviQuery, RoviUser, VisualVocabulary
from rovi.workload import WorkloadSpec, generate_dataset, generate_workload

# Seven users and one query laid out so that, under a quadtree with
# max_level=2 and leaf_capacity=1, every stated fact of the running example
# holds: u1 sits in N_1000/N_1010, u2 in N_1000..N_1011, u7 in N_0100, u3 and
# u4 in N_1100, the word v1 is held by u2, u3, u7 only, and with
# Γ_G=0.3, Γ_V=0.4 the spatial candidates are {u3, u4}, the visual ones
# {u1, u2, u3, u7}, and the answer is {u3}.
EXAMPLE_USERS = {
    1: ((0.05, 0.55, 0.22, 0.90), {2, 3}),
    2: ((0.10, 0.60, 0.45, 0.95), {1, 2}),
    3: ((0.51, 0.51, 0.74, 0.74), {1, 2, 3}),
    4: ((0.52, 0.52, 0.74, 0.70), {2, 4, 5}),
    5: ((0.10, 0.10, 0.30, 0.30), {4}),
    6: ((0.80, 0.05, 0.95, 0.20), {5}),
    7: ((0.60, 0.10, 0.74, 0.55), {1, 3}),
}
EXAMPLE_QUERY_REGION = (0.20, 0.52, 0.70, 0.70)
EXAMPLE_QUERY_WORDS = {1, 2, 3}


@pytest.fixture
def example():
    users = [RoviUser(uid, Mbr(*r), frozenset(w)) for uid, (r, w) in EXAMPLE_USERS.items()]
    vocab = VisualVocabulary.uniform(range(1, 6))
    q = RoviQuery(Mbr(*EXAMPLE_QUERY_REGION), frozenset(EXAMPLE_QUERY_WORDS), 0.3, 0.4)
    return users, vocab, q


# Workload that yields non-trivial answers at 1K users: regions comparable to
# the 2% query square, a small vocabulary, and thresholds spread over [0, 0.5].
EQUIV_SPEC = WorkloadSpec(
    n_users=1000,
    n_queries=100,
    n_query_words=10,
    vocab_size=200,
    words_per_user=(3, 20),
    region_size=(0.05, 0.3),
    query_region_fraction=0.02,
)
GAMMAS_G = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
GAMMAS_V = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
EQUIV_QIV = {"max_level": 5, "leaf_capacity": 32}


def equivalence_instance(seed: int, weighted: bool = False):
    spec = EQUIV_SPEC.with_(seed=seed)
    users, vocab = generate_dataset(spec)
    if weighted:
        rnd = random.Random(seed)
        vocab = VisualVocabulary({w: rnd.choice([0.25, 0.5, 1.0, 1.5, 2.0, 3.0]) for w in vocab})
    queries = generate_workload(spec, users)
    rnd = random.Random(1000 + seed)
    queries = [q.with_thresholds(rnd.choice(GAMMAS_G), rnd.choice(GAMMAS_V)) for q in queries]
    return users, vocab, queries


@pytest.fixture(scope="session")
def instance_1k():
    return equivalence_instance(7)


# One PASS/FAIL line per acceptance criterion, echoed at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
