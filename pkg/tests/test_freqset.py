import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multilattice.errors import ResourceLimitError
from multilattice.freqset import (
    FrequencySet,
    FrequencySetError,
    expansion,
    hyperbolic_cross_even,
    hyperbolic_cross_size,
    random_cube_set,
    read_freqset,
    write_freqset,
)


def brute_hc(d, r):
    axis = range(-r - (r % 2), r + 1, 2)
    rows = [k for k in itertools.product(axis, repeat=d) if np.prod([max(1, abs(v)) for v in k]) <= r]
    return sorted(rows)


def test_hc_small():
    fs = hyperbolic_cross_even(2, 2)
    assert fs.freqs.tolist() == [[-2, 0], [0, -2], [0, 0], [0, 2], [2, 0]]
    assert hyperbolic_cross_even(2, 1).freqs.tolist() == [[0, 0]]
    assert hyperbolic_cross_even(3, 4).size == 25


@pytest.mark.parametrize("d, r", [(1, 7), (2, 16), (3, 8), (4, 6)])
def test_hc_matches_brute_force(d, r):
    assert hyperbolic_cross_even(d, r).freqs.tolist() == [list(k) for k in brute_hc(d, r)]
    assert hyperbolic_cross_size(d, r) == len(brute_hc(d, r))


def test_hc_sizes_series():
    got = [hyperbolic_cross_size(2, 2**n) for n in range(13)]
    assert got == [1, 5, 13, 29, 65, 145, 329, 733, 1633, 3605, 7913, 17217, 37241]


def test_hc_elements_and_expansion():
    fs = hyperbolic_cross_even(4, 32)
    assert np.all(fs.freqs % 2 == 0)
    assert np.all(np.prod(np.maximum(1, np.abs(fs.freqs)), axis=1) <= 32)
    n_i, ranges = expansion(fs)
    assert n_i <= 64
    assert expansion(hyperbolic_cross_even(2, 2))[0] == 4
    assert expansion(FrequencySet.from_array([[0, 0]]))[0] == 0
    assert ranges.shape == (4, 2)


def test_hc_size_cap():
    with pytest.raises(ResourceLimitError):
        hyperbolic_cross_even(6, 256, max_size=1000)


def test_canonical_order_and_duplicates():
    a = FrequencySet.from_array([[1, 0], [0, 3], [0, -1]])
    assert a.freqs.tolist() == [[0, -1], [0, 3], [1, 0]]
    with pytest.raises(FrequencySetError):
        FrequencySet.from_array([[1, 2], [1, 2]])
    with pytest.raises(FrequencySetError):
        FrequencySet.from_array(np.zeros((0, 2)))


def test_wide_rows_sorted_beyond_prefix():
    rows = np.zeros((3, 12), dtype=np.int64)
    rows[0, 11], rows[1, 11], rows[2, 11] = 5, -1, 2
    fs = FrequencySet.from_array(rows)
    assert fs.freqs[:, 11].tolist() == [-1, 2, 5]


def test_random_cube_set():
    assert random_cube_set(2, 0, 1, 3).freqs.tolist() == [[0, 0]]
    a = random_cube_set(3, 64, 100, 7)
    assert a == random_cube_set(3, 64, 100, 7)
    assert a != random_cube_set(3, 64, 100, 8)
    big = random_cube_set(10000, 64, 10, 0)
    assert big.size == 10 and big.dim == 10000
    assert np.abs(big.freqs).max() <= 64
    dense = random_cube_set(2, 2, 25, 1)
    assert dense.size == 25
    with pytest.raises(FrequencySetError):
        random_cube_set(1, 1, 4, 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(0, 9), st.integers(1, 60), st.integers(0, 2**32))
def test_random_sets_are_distinct_and_bounded(d, r, s, seed):
    s = min(s, (2 * r + 1) ** d)
    fs = random_cube_set(d, r, s, seed)
    assert fs.size == s
    assert len({tuple(v) for v in fs.freqs.tolist()}) == s
    assert np.abs(fs.freqs).max() <= r


def test_file_roundtrip(tmp_path):
    fs = random_cube_set(5, 30, 40, 2)
    p = tmp_path / "f.txt"
    write_freqset(fs, p)
    assert read_freqset(p) == fs


@pytest.mark.parametrize(
    "text",
    ["", "2\n0 0\n", "2 2\n0 0\n", "2 1\n0 0 1\n", "2 1\n0 x\n", "2 2\n1 1\n1 1\n"],
)
def test_file_errors(tmp_path, text):
    p = tmp_path / "bad.txt"
    p.write_text(text)
    with pytest.raises(FrequencySetError):
        read_freqset(p)
