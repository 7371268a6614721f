import numpy as np

from spinboson.seeds import derive_seed, substream


def test_derivation_is_deterministic():
    assert derive_seed(12345, 7) == derive_seed(12345, 7)
    assert derive_seed(12345, 7) != derive_seed(12345, 8)
    assert derive_seed(12345, 7) != derive_seed(12346, 7)
    assert derive_seed(-1, 0) == derive_seed(-1, 0)


def test_no_collisions_over_a_million_chunks():
    seen = {derive_seed(42, i) for i in range(1_000_000)}
    assert len(seen) == 1_000_000


def test_substreams_reproduce_and_differ():
    a = substream(9, 0).random(5)
    b = substream(9, 0).random(5)
    c = substream(9, 1).random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
