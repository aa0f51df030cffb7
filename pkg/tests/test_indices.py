import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gapfilter import FunctionalSpec, MissingPattern, PatternError, build_universe, observed_indices
from gapfilter.indices import default_truncation, embed_coefficients


@st.composite
def patterns(draw):
    pairs, m = [], 1
    for _ in range(draw(st.integers(0, 3))):
        m += draw(st.integers(0, 3))
        n = draw(st.integers(0, 3))
        pairs.append((m, n))
        m += n + 1
    return MissingPattern(tuple(pairs))


def test_universe_single_gap():
    u = build_universe(MissingPattern.single_gap(2, 1), 5)
    assert u.indices == (-3, -2, 0, 1, 2, 3, 4, 5)
    assert len(u) == 8


def test_universe_without_gaps():
    assert build_universe(MissingPattern(), 3).indices == (0, 1, 2, 3)


def test_universe_two_gaps():
    u = build_universe(MissingPattern(((1, 0), (4, 1))), 6)
    assert u.indices == (-5, -4, -1, 0, 1, 2, 3, 4, 5, 6)
    assert len(u) == 10


def test_universe_rejects_zero_truncation():
    with pytest.raises(PatternError):
        build_universe(MissingPattern(), 0)


def test_block_offsets_follow_order():
    u = build_universe(MissingPattern.single_gap(2, 1), 3)
    assert u.block(-3, 2) == slice(0, 2)
    assert u.block(0, 2) == slice(4, 6)


@pytest.mark.parametrize("pairs", [((2, 1), (3, 0)), ((1, 2), (2, 0)), ((0, 1),), ((2, -1),)])
def test_invalid_patterns_are_rejected(pairs):
    with pytest.raises(PatternError):
        MissingPattern(pairs)


def test_overlap_message_names_both_intervals():
    with pytest.raises(PatternError, match=r"M=2, N=1.*M=3, N=0"):
        MissingPattern(((2, 1), (3, 0)))


def test_single_point_constructor():
    p = MissingPattern.single_point(3)
    assert p.missing == (-3,)
    assert p.mirrored == (3,)


def test_embed_single_gap():
    u = build_universe(MissingPattern.single_gap(2, 1), 5)
    a = embed_coefficients(FunctionalSpec(1, {1: [1.0], 4: [1.0]}), u)
    np.testing.assert_array_equal(a, [0, 0, 0, 1, 0, 0, 1, 0])


def test_embed_empty_support():
    u = build_universe(MissingPattern(), 4)
    assert not embed_coefficients(FunctionalSpec(1, {}), u).any()


def test_embed_vector_blocks():
    u = build_universe(MissingPattern(), 1)
    a = embed_coefficients(FunctionalSpec(2, {1: [1.0, 2.0]}), u)
    np.testing.assert_array_equal(a, [0, 0, 1, 2])


def test_embed_rejects_support_beyond_truncation():
    u = build_universe(MissingPattern(), 3)
    with pytest.raises(PatternError):
        embed_coefficients(FunctionalSpec(1, {4: [1.0]}), u)


def test_functional_on_mirrored_gap_is_rejected():
    u = build_universe(MissingPattern.single_gap(2, 1), 5)
    with pytest.raises(PatternError):
        embed_coefficients(FunctionalSpec(1, {3: [1.0]}), u)


def test_functional_index_zero_is_rejected():
    with pytest.raises(PatternError):
        FunctionalSpec(1, {0: [1.0]})


def test_observed_single_gap():
    assert observed_indices(MissingPattern.single_gap(2, 1), 5) == [-1, -4, -5]


def test_observed_without_gaps():
    assert observed_indices(MissingPattern(), 3) == [-1, -2, -3]


def test_observed_all_masked():
    assert observed_indices(MissingPattern.single_gap(1, 2), 3) == []


def test_default_truncation():
    f = FunctionalSpec(1, {1: [1.0], 5: [1.0]})
    assert default_truncation(MissingPattern.single_gap(2, 1), f) == 4 * (5 + 3)


@given(patterns())
def test_missing_and_mirrored_are_reflections(p):
    assert set(p.mirrored) == {-j for j in p.missing}
    assert len(p.missing) == p.size == sum(n + 1 for _, n in p.intervals)


@given(patterns(), st.integers(1, 20))
def test_universe_nonnegative_part_is_range(p, K):
    u = build_universe(p, K)
    assert [j for j in u.indices if j >= 0] == list(range(K + 1))
    assert len(set(u.indices)) == len(u) == p.size + K + 1


@given(patterns(), st.integers(1, 30))
def test_observed_window_excludes_exactly_the_gaps(p, L):
    obs = observed_indices(p, L)
    assert set(obs) | (set(p.missing) & set(range(-L, 0))) == set(range(-L, 0))
    assert not set(obs) & set(p.missing)


@given(st.integers(0, 2**31 - 1))
def test_embedding_is_linear(seed):
    rng = np.random.default_rng(seed)
    p = MissingPattern.single_gap(2, 1)
    u = build_universe(p, 8)
    support = [1, 4, 5, 7]
    f1 = FunctionalSpec(2, {j: rng.standard_normal(2) for j in support})
    f2 = FunctionalSpec(2, {j: rng.standard_normal(2) for j in support})
    s = rng.standard_normal()
    f12 = FunctionalSpec(2, {j: f1.coefficients[j] + s * f2.coefficients[j] for j in support})
    np.testing.assert_allclose(embed_coefficients(f12, u), embed_coefficients(f1, u) + s * embed_coefficients(f2, u), atol=1e-15)
