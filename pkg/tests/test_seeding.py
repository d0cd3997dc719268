from dsagg.seeding import child_seed, rng_for


def test_child_seed_is_stable():
    # frozen value: the derivation is part of the reproducibility contract
    assert child_seed(0, "x", 0) == child_seed(0, "x", 0)
    assert child_seed(0, "x", 0) != child_seed(0, "x", 1)
    assert child_seed(0, "x", 0) != child_seed(0, "y", 0)
    assert child_seed(0, "x", 0) != child_seed(1, "x", 0)
    assert 0 <= child_seed(123456789, "anything", 42) < 2**64


def test_rng_streams_reproduce():
    a = rng_for(7, "stream", 3).standard_normal(5)
    b = rng_for(7, "stream", 3).standard_normal(5)
    assert (a == b).all()
