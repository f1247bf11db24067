import numpy as np
import pytest

from museq.durations import DurationMatrix, survival
from museq.timegrid import SlotGrid


@pytest.fixture
def grid44():
    return SlotGrid(slot_length_minutes=15, num_slots=44, opening_minute=8 * 60)


@pytest.fixture
def rng():
    return np.random.default_rng(20190305)


def random_duration_matrix(rng, num_slots, d_max, concentration=1.0):
    probs = rng.dirichlet(np.ones(d_max) * concentration, size=num_slots)
    counts = rng.integers(10, 500, num_slots)
    return DurationMatrix(probs, counts)


@pytest.fixture
def small_matrix(rng):
    return random_duration_matrix(rng, 4, 3)


@pytest.fixture
def small_survival(small_matrix):
    return survival(small_matrix)
