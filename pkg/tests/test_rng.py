from __future__ import annotations

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from merton_verify import rng


def test_draws_independent_of_batching():
    full = rng.normals(11, range(10), 50)
    parts = np.vstack([rng.normals(11, range(0, 3), 50), rng.normals(11, range(3, 10), 50)])
    assert np.array_equal(full, parts)
    # prefix property: fewer steps give the leading draws
    assert np.array_equal(rng.normals(11, [4], 20)[0], full[4, :20])


def test_antithetic_pairs():
    z = rng.normals(3, range(6), 40, antithetic=True)
    assert np.array_equal(z[0::2], -z[1::2])
    # odd path alone still sees the negated stream
    assert np.array_equal(rng.normals(3, [5], 40, antithetic=True)[0], z[5])


def test_path_streams_match_block_draws():
    ids = [7, 8, 9]
    ps = rng.PathStreams(5, ids, antithetic=True)
    first = ps.draw(np.arange(3), 10)
    second = ps.draw(np.array([1]), 15)
    ref = rng.normals(5, ids, 25, antithetic=True)
    assert np.array_equal(first, ref[:, :10])
    assert np.array_equal(second[0], ref[1, 10:])


def test_moments():
    z = rng.normals(0, range(200), 1000).ravel()
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 4 * np.sqrt(2 / z.size)
    assert np.all(np.isfinite(z))


@settings(max_examples=50)
@given(raw=st.integers(0, 2**64 - 1))
def test_uniform_map_is_open_interval(raw):
    z = rng.raw_to_normal(np.array([raw], dtype=np.uint64))
    assert np.isfinite(z).all()
    assert abs(z[0]) < 8.3


def test_seeds_differ():
    assert not np.array_equal(rng.normals(1, [0], 10), rng.normals(2, [0], 10))
