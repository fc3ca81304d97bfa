import random
from pathlib import Path

import pytest

from tacforge.corpus import load_corpus
from tacforge.kernel import Ctor, Fun, Goal, Var, default_signature

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def sig():
    return default_signature()


@pytest.fixture(scope="session")
def mining_corpus_path():
    return FIXTURES / "mining_corpus.jsonl"


@pytest.fixture(scope="session")
def validation_corpus_path():
    return FIXTURES / "validation_corpus.jsonl"


@pytest.fixture(scope="session")
def eval_corpus_path():
    return FIXTURES / "eval_corpus.jsonl"


@pytest.fixture(scope="session")
def cassette_path():
    return FIXTURES / "cassette.jsonl"


@pytest.fixture(scope="session")
def mining_corpus(mining_corpus_path):
    return load_corpus(mining_corpus_path)


@pytest.fixture(scope="session")
def validation_corpus(validation_corpus_path):
    return load_corpus(validation_corpus_path)


@pytest.fixture(scope="session")
def eval_corpus(eval_corpus_path):
    return load_corpus(eval_corpus_path)


def random_ground_term(rng: random.Random, sig, sort: str, depth: int):
    """Constructor-only term of the given sort with constructor depth <= depth."""
    ctors = sig.constructors_of(sort)
    leaves = [c for c in ctors if not c.arg_sorts]
    if depth <= 1:
        choice = rng.choice(leaves)
    else:
        choice = rng.choice(ctors)
    return Ctor(
        choice.name,
        tuple(random_ground_term(rng, sig, s, depth - 1) for s in choice.arg_sorts),
    )


def random_term(rng: random.Random, sig, sort: str, depth: int, var_sorts: dict[str, str]):
    """Arbitrary well-formed term over the given variables, depth-bounded."""
    vars_of_sort = [n for n, s in var_sorts.items() if s == sort]
    options = ["ctor"]
    if vars_of_sort:
        options.append("var")
    if depth > 1:
        options.append("fun")
    kind = rng.choice(options)
    if kind == "var":
        return Var(rng.choice(vars_of_sort))
    if kind == "fun":
        funs = [f for f in sig.functions if f.sort == sort]
        f = rng.choice(funs)
        return Fun(f.name, tuple(random_term(rng, sig, s, depth - 1, var_sorts) for s in f.arg_sorts))
    ctors = sig.constructors_of(sort)
    leaves = [c for c in ctors if not c.arg_sorts]
    choice = rng.choice(leaves if depth <= 1 else ctors)
    return Ctor(
        choice.name,
        tuple(random_term(rng, sig, s, depth - 1, var_sorts) for s in choice.arg_sorts),
    )


def random_goal(rng: random.Random, sig, max_binders: int = 2, depth: int = 3) -> Goal:
    n_binders = rng.randint(0, max_binders)
    names = ["x", "y", "z"]
    binders = tuple((names[i], rng.choice(("nat", "list"))) for i in range(n_binders))
    var_sorts = dict(binders)
    sort = rng.choice(("nat", "list"))
    lhs = random_term(rng, sig, sort, depth, var_sorts)
    rhs = random_term(rng, sig, sort, depth, var_sorts)
    return Goal(lhs=lhs, rhs=rhs, binders=binders)
