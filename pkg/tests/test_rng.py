import numpy as np
import pytest

from kinetic_flows.rng import derive_seed, philox4x32, scaled_index, uniform32

# Random123 known-answer vectors for Philox4x32-10
KAT = [
    ((0, 0, 0, 0), (0, 0), (0x6627E8D5, 0xE169C58D, 0xBC57AC4C, 0x9B00DBD8)),
    ((0xFFFFFFFF,) * 4, (0xFFFFFFFF,) * 2, (0x408F276D, 0x41C83B0E, 0xA20BC7C6, 0x6D5451FD)),
    ((0x243F6A88, 0x85A308D3, 0x13198A2E, 0x03707344), (0xA4093822, 0x299F31D0),
     (0xD16CFE09, 0x94FDCCEB, 0x5001E420, 0x24126EA1)),
]


@pytest.mark.parametrize("counter,key,expected", KAT)
def test_known_answers(counter, key, expected):
    assert tuple(int(w) for w in philox4x32(counter, key)) == expected


def test_batch_matches_scalar():
    ctr = np.arange(100, dtype=np.uint64)
    batch = philox4x32((ctr, 7, 0, 3), (11, 13))
    for i in (0, 17, 99):
        assert tuple(int(w[i]) for w in batch) == tuple(int(w) for w in philox4x32((i, 7, 0, 3), (11, 13)))


def test_uniforms_in_unit_interval():
    u = uniform32(philox4x32((np.arange(10_000, dtype=np.uint64), 0, 0, 0), (1, 2))[0])
    assert u.min() > 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.01


def test_scaled_index_range():
    idx = scaled_index(philox4x32((np.arange(5000, dtype=np.uint64), 0, 0, 0), (3, 4))[1], 7)
    assert idx.min() == 0 and idx.max() == 6


def test_derived_seeds_differ_by_tag():
    assert derive_seed(1, "a") != derive_seed(1, "b") and derive_seed(1, "a") == derive_seed(1, "a")
