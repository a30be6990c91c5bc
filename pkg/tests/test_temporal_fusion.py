import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from prognoses.cohort import VIEW_ORDER, ClipRecord, Cohort, FeatureSource, PatientOutcome, ViewId
from prognoses.fusion import (
    DecisionFusion,
    FeatureFusion,
    MissingViewPolicy,
    cross_lung_expand,
    fuse_decisions,
    fuse_features,
    fused_samples,
)
from prognoses.synth import GeneratorParams, generate
from prognoses.temporal import (
    DayPairPolicy,
    DayPairSample,
    TemporalMode,
    build_day_pairs,
    represent,
    sequential_pairs,
)

BIO = FeatureSource.BIOMARKER
D, C = TemporalMode.DIFFERENCE, TemporalMode.CONCATENATE
finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def _cohort(day_sets: dict[str, list[int]], views=(ViewId.L3,)):
    recs, outs = [], []
    for i, (pid, days) in enumerate(day_sets.items()):
        for v in views:
            recs += [ClipRecord(pid, v, d, BIO, np.full(38, d + i)) for d in days]
        outs.append(PatientOutcome(pid, i % 2 == 0))
    return Cohort(recs, outs, BIO)


def test_all_sequential_pairs():
    pairs, _ = build_day_pairs(_cohort({"P1": [1, 2, 3, 4]}), ViewId.L3, DayPairPolicy.ALL_SEQUENTIAL)
    assert [(p.day_a, p.day_b) for p in pairs] == [(1, 2), (2, 3), (3, 4)]


def test_first_pair_needs_day_two():
    pairs, notes = build_day_pairs(_cohort({"P1": [1, 3]}), ViewId.L3, DayPairPolicy.FIRST_PAIR)
    assert pairs == []
    assert any("P1" in n for n in notes)


def test_gap_pair_included_and_noted():
    pairs, notes = build_day_pairs(_cohort({"P1": [1, 3]}), ViewId.L3, DayPairPolicy.ALL_SEQUENTIAL)
    assert [(p.day_a, p.day_b) for p in pairs] == [(1, 3)]
    assert any("non-adjacent" in n for n in notes)


def test_missing_view_skipped_with_note():
    pairs, notes = build_day_pairs(_cohort({"P1": [1, 2]}), ViewId.R1, DayPairPolicy.FIRST_PAIR)
    assert pairs == [] and "absent" in notes[0]


def test_synthetic_first_pair_count():
    c, _ = generate(GeneratorParams(n_patients=30, dim=38, seed=2))
    for v in VIEW_ORDER:
        pairs, notes = build_day_pairs(c, v, DayPairPolicy.FIRST_PAIR)
        assert len(pairs) == 30 and not notes


@given(st.lists(st.integers(1, 30), min_size=1, max_size=10, unique=True))
def test_pair_invariants(days):
    pairs = sequential_pairs(days, DayPairPolicy.ALL_SEQUENTIAL)
    ordered = sorted(days)
    assert len(pairs) == len(ordered) - 1
    for a, b in pairs:
        assert a < b and ordered.index(b) == ordered.index(a) + 1


def test_represent_examples():
    v = np.arange(5.0)
    assert np.array_equal(represent(v, v, D), np.zeros(5))
    assert represent([1, 2], [4, 6], D).tolist() == [3, 4]
    assert represent([1], [2], C).tolist() == [1, 2]
    with pytest.raises(ValueError):
        represent([1, 2], [1], D)


@given(arrays(np.float64, 16, elements=finite), arrays(np.float64, 16, elements=finite))
def test_difference_antisymmetric_and_concat_roundtrip(a, b):
    assert np.array_equal(represent(a, b, D), -represent(b, a, D))
    cat = represent(a, b, C)
    assert np.array_equal(cat[:16], a) and np.array_equal(cat[16:], b)


# ---------------------------------------------------------------- fusion


def test_fuse_identical_vectors():
    v = np.array([1.5, -2.0, 3.0])
    per = {w: v for w in VIEW_ORDER}
    assert np.array_equal(fuse_features(per, FeatureFusion.AVERAGE), v)
    assert np.array_equal(fuse_features(per, FeatureFusion.MAX), v)


def test_fuse_max_example():
    per = {w: np.zeros(2) for w in VIEW_ORDER}
    per[ViewId.L1] = np.array([1.0, 0.0])
    per[ViewId.L2] = np.array([0.0, 2.0])
    assert fuse_features(per, FeatureFusion.MAX).tolist() == [1.0, 2.0]


def test_concat_length_and_order():
    per = {w: np.full(512, i) for i, w in enumerate(VIEW_ORDER)}
    out = fuse_features(per, FeatureFusion.CONCATENATE)
    assert out.size == 3072
    assert [out[i * 512] for i in range(6)] == [0, 1, 2, 3, 4, 5]


def test_missing_view_policies():
    per = {w: np.ones(3) for w in VIEW_ORDER[:5]}
    assert fuse_features(per, FeatureFusion.CONCATENATE) is None
    z = fuse_features(per, FeatureFusion.CONCATENATE, MissingViewPolicy.ZERO_IMPUTE)
    assert z.size == 18 and np.all(z[15:] == 0)
    assert np.array_equal(fuse_features(per, FeatureFusion.AVERAGE, MissingViewPolicy.ZERO_IMPUTE), np.ones(3))
    with pytest.raises(ValueError):
        fuse_features({}, FeatureFusion.AVERAGE)


@settings(max_examples=30)
@given(arrays(np.float64, (6, 7), elements=finite), st.permutations(range(6)))
def test_average_max_permutation_invariant(mat, perm):
    per = {v: mat[i] for i, v in enumerate(VIEW_ORDER)}
    shuffled = {VIEW_ORDER[i]: mat[i] for i in perm}
    for s in (FeatureFusion.AVERAGE, FeatureFusion.MAX, FeatureFusion.CONCATENATE):
        assert np.array_equal(fuse_features(per, s), fuse_features(shuffled, s))


def test_decision_examples():
    probs = dict(zip(VIEW_ORDER, [0.9, 0.9, 0.9, 0.1, 0.1, 0.1]))
    label, _ = fuse_decisions(probs, DecisionFusion.MAX_VOTES)
    assert label == 0
    label, p = fuse_decisions({v: 0.7 for v in VIEW_ORDER}, DecisionFusion.AVERAGE_PROBA)
    assert (label, p) == (1, pytest.approx(0.7))
    label, p = fuse_decisions(dict(zip(VIEW_ORDER, [0.6] * 4 + [0.4] * 2)), DecisionFusion.MAX_VOTES)
    assert (label, p) == (1, 4 / 6)
    with pytest.raises(ValueError):
        fuse_decisions({}, DecisionFusion.MAX_VOTES)


def test_tie_broken_by_mean():
    probs = dict(zip(VIEW_ORDER, [0.95, 0.9, 0.9, 0.1, 0.1, 0.1]))
    assert fuse_decisions(probs, DecisionFusion.MAX_VOTES)[0] == 1


@given(st.lists(st.floats(0, 1), min_size=6, max_size=6), st.permutations(range(6)))
def test_average_proba_permutation_invariant(ps, perm):
    a = fuse_decisions(dict(zip(VIEW_ORDER, ps)), DecisionFusion.AVERAGE_PROBA)
    b = fuse_decisions({VIEW_ORDER[i]: ps[i] for i in perm}, DecisionFusion.AVERAGE_PROBA)
    assert a == b
    assert 0.0 <= a[1] <= 1.0


def _samples(view, n, offset=0.0):
    return [DayPairSample(f"P{i}", view, 1, 2, np.full(3, i + offset), i % 2 == 0) for i in range(n)]


def test_cross_lung_counts_and_identity():
    train = _samples(ViewId.L3, 20) + _samples(ViewId.R3, 20, 100.0)
    assert cross_lung_expand(train, False) == train
    out = cross_lung_expand(train, True)
    l3 = [s for s in out if s.view is ViewId.L3]
    r3 = [s for s in out if s.view is ViewId.R3]
    assert len(l3) == 40 and len(r3) == 40
    key = lambda ss: sorted(tuple(s.vector) for s in ss)
    assert key(l3) == key(r3)


def test_cross_lung_rejects_fused():
    fused = [DayPairSample("P1", "ALL", 1, 2, np.zeros(3), True)]
    with pytest.raises(ValueError):
        cross_lung_expand(fused, True)


def test_fused_samples_dims():
    c, _ = generate(GeneratorParams(n_patients=4, dim=38, seed=0))
    s, _ = fused_samples(c, DayPairPolicy.FIRST_PAIR, D, FeatureFusion.CONCATENATE)
    assert len(s) == 4 and s[0].vector.size == 6 * 38
    s, _ = fused_samples(c, DayPairPolicy.FIRST_PAIR, C, FeatureFusion.AVERAGE)
    assert s[0].vector.size == 2 * 38
