"""Shared instance builders for the test suite."""

from __future__ import annotations

import random
from fractions import Fraction as F
from itertools import product

from hypothesis import strategies as st

from maxagree.lawmodels import law_from_table, law_iid
from maxagree.measure import Alphabet

AB = Alphabet(("a", "b"))


def instance_a():
    return (law_iid(AB, 1, {"a": F(1, 2), "b": F(1, 2)}),
            law_iid(AB, 1, {"a": F(1, 4), "b": F(3, 4)}))


def weights_to_law(alphabet, horizon, weights):
    paths = list(product(range(alphabet.size), repeat=horizon + 1))
    if not any(weights):
        weights = [1] + list(weights[1:])
    total = sum(weights)
    return law_from_table(alphabet, horizon, [(p, F(w, total)) for p, w in zip(paths, weights) if w])


def random_law(rng: random.Random, alphabet, horizon, zero_p=0.2, max_weight=6):
    n = alphabet.size ** (horizon + 1)
    weights = [0 if rng.random() < zero_p else rng.randint(1, max_weight) for _ in range(n)]
    return weights_to_law(alphabet, horizon, weights)


def random_pairs(count, seed, sizes=(2, 3), horizons=(1, 2, 3)):
    """Deterministic stream of law pairs with bounded denominators."""
    rng = random.Random(seed)
    for _ in range(count):
        alphabet = Alphabet(tuple("abc"[: rng.choice(sizes)]))
        horizon = rng.choice(horizons)
        yield random_law(rng, alphabet, horizon), random_law(rng, alphabet, horizon)


@st.composite
def law_pairs(draw, max_size=3, max_horizon=2):
    size = draw(st.integers(2, max_size))
    horizon = draw(st.integers(0, max_horizon))
    alphabet = Alphabet(tuple("abc"[:size]))
    n = size ** (horizon + 1)
    w = st.lists(st.integers(0, 5), min_size=n, max_size=n)
    return weights_to_law(alphabet, horizon, draw(w)), weights_to_law(alphabet, horizon, draw(w))
