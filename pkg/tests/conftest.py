import numpy as np
import pytest

from sgdelf import FactorModel, parse_ratings


@pytest.fixture
def toy3():
    """Three ratings over two users and two items."""
    return parse_ratings(["1 7 5.0", "1 9 3.0", "2 7 4.0"])


@pytest.fixture
def toy5x4():
    """A 5x4 matrix with 12 known entries, every row and column non-empty."""
    rng = np.random.default_rng(0)
    cells = rng.permutation(20)[:12]
    lines = [f"u{c // 4} i{c % 4} {rng.uniform(1, 5):.3f}" for c in cells]
    # Force full coverage of rows and columns.
    covered_u = {c // 4 for c in cells}
    covered_i = {c % 4 for c in cells}
    assert covered_u == set(range(5)) and covered_i == set(range(4))
    return parse_ratings(lines)


def random_model(rng, num_users, num_items, f, scale=1.0):
    """Model with standard-normal factors and biases, for property tests."""
    return FactorModel(scale * rng.standard_normal((num_users, f)),
                       scale * rng.standard_normal((num_items, f)),
                       scale * rng.standard_normal(num_users),
                       scale * rng.standard_normal(num_items))
