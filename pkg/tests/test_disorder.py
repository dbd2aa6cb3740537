import numpy as np
import pytest

from fermikin.disorder import (
    SeedSpec,
    derive_child_seed,
    sample_disorder,
    standard_normals,
    uniforms,
)
from fermikin.lattice import make_grid


def test_sample_determinism():
    g = make_grid(8)
    a = sample_disorder(g, SeedSpec(42, 3))
    b = sample_disorder(g, SeedSpec(42, 3))
    assert np.array_equal(a.omega, b.omega)
    c = sample_disorder(g, SeedSpec(42, 4))
    assert not np.array_equal(a.omega, c.omega)


def test_moments_l16():
    # 1000 samples x 16^3 = 4.1M draws; tolerances are +-4 standard errors
    g = make_grid(16)
    n = 1000
    total = 0.0
    total_sq = 0.0
    count = 0
    for i in range(n):
        w = sample_disorder(g, SeedSpec(2024, i)).omega
        total += w.sum()
        total_sq += (w**2).sum()
        count += w.size
    mean = total / count
    var = total_sq / count - mean**2
    assert -0.01 <= mean <= 0.01
    assert 0.99 <= var <= 1.01


def test_independence_between_samples():
    # pooled Pearson correlation over 100 disjoint sample pairs at L=16;
    # 4 standard errors of 1/sqrt(N) is ~0.006 < 0.01
    g = make_grid(16)
    xs, ys = [], []
    for i in range(100):
        xs.append(sample_disorder(g, SeedSpec(7, 2 * i)).omega.ravel())
        ys.append(sample_disorder(g, SeedSpec(7, 2 * i + 1)).omega.ravel())
    x = np.concatenate(xs)
    y = np.concatenate(ys)
    r = np.corrcoef(x, y)[0, 1]
    assert -0.01 <= r <= 0.01


def test_derive_child_seed_deterministic_and_distinct():
    from fermikin.disorder import _GAMMA, splitmix64

    s = 123456789
    assert derive_child_seed(s, 17) == derive_child_seed(s, 17)
    # exhaustive collision scan over a million indices (vectorized replica
    # of derive_child_seed, spot-checked against the scalar path)
    idx = np.arange(10**6, dtype=np.uint64)
    with np.errstate(over="ignore"):
        children = splitmix64(np.uint64(s) ^ (idx * _GAMMA))
    assert len(np.unique(children)) == 10**6
    for i in (0, 17, 999_999):
        assert int(children[i]) == derive_child_seed(s, i)


def test_avalanche():
    # flipping one bit of the master seed flips >= 20 output bits on average
    from fermikin.disorder import _GAMMA, splitmix64

    rng = np.random.default_rng(5)
    seeds = rng.integers(0, 2**63, size=10**4, dtype=np.uint64)
    bits = rng.integers(0, 64, size=10**4).astype(np.uint64)
    with np.errstate(over="ignore"):
        a = splitmix64(seeds ^ (np.uint64(3) * _GAMMA))
        b = splitmix64((seeds ^ (np.uint64(1) << bits)) ^ (np.uint64(3) * _GAMMA))
    flipped = np.bitwise_count(a ^ b)
    assert flipped.mean() >= 20


def test_uniforms_range_and_normals():
    u = uniforms(987, 10**5)
    assert u.min() >= 0.0 and u.max() < 1.0
    z = standard_normals(987, 10**5 + 1)  # odd count exercises truncation
    assert len(z) == 10**5 + 1
    assert abs(z.mean()) < 4 / np.sqrt(len(z)) * 1.5
    assert np.all(np.isfinite(z))


def test_seedspec_validation():
    with pytest.raises(ValueError):
        SeedSpec(1, -1)
