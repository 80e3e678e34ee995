import numpy as np
import pytest

from cliquesense import baselines, graph
from cliquesense.placement import Placement
from cliquesense.pod import PodBasis
from conftest import random_basis


def test_greedy_q1_example():
    b = PodBasis(modes=np.array([[1.0, 0.0], [0.0, 2.0], [0.5, 0.5]]), singular_values=np.array([1.0, 1.0]))
    pl = baselines.greedy_determinant_placement(b, graph.CandidateSet(np.arange(3)), 1)
    assert pl.indices.tolist() == [1] and pl.method == "greedy"


def test_greedy_full_selection(rng):
    b = random_basis(rng, n=30, r=4)
    cand = graph.select_candidates(30, 10)
    pl = baselines.greedy_determinant_placement(b, cand, 10)
    assert sorted(pl.indices.tolist()) == cand.indices.tolist()
    with pytest.raises(ValueError):
        baselines.greedy_determinant_placement(b, cand, 11)


def test_greedy_prefix_property(rng):
    b = random_basis(rng, n=200, r=6)
    cand = graph.select_candidates(200, 100)
    full = baselines.greedy_determinant_placement(b, cand, 20).indices
    for q in (1, 3, 6, 7, 12, 19):
        assert baselines.greedy_determinant_placement(b, cand, q).indices.tolist() == full[:q].tolist()


@pytest.mark.parametrize("seed", range(4))
def test_greedy_each_step_maximizes_determinant(seed):
    r = np.random.default_rng(seed)
    b = random_basis(r, n=80, r=5)
    cand = graph.select_candidates(80, 40)
    picks = baselines.greedy_determinant_placement(b, cand, 12).indices.tolist()
    chosen = []
    for p in picks:
        rest = [c for c in cand.indices if c not in chosen]
        dets = {c: baselines.d_optimality(b.modes, chosen + [c]) for c in rest}
        best = max(dets.values())
        assert dets[p] >= best * (1 - 1e-9)
        chosen.append(p)


def test_greedy_objective_monotone_beyond_rank(rng):
    b = random_basis(rng, n=150, r=5)
    cand = graph.select_candidates(150, 75)
    picks = baselines.greedy_determinant_placement(b, cand, 30).indices.tolist()
    vals = [baselines.d_optimality(b.modes, picks[:q]) for q in range(5, 31)]
    assert all(a <= c * (1 + 1e-12) for a, c in zip(vals, vals[1:]))


def test_greedy_tie_smallest_index():
    modes = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
    b = PodBasis(modes=modes, singular_values=np.array([1.0, 1.0]))
    pl = baselines.greedy_determinant_placement(b, graph.CandidateSet(np.arange(4)), 2)
    assert pl.indices.tolist() == [0, 2]


def test_random_examples():
    cand = graph.select_candidates(1000, 100)
    assert sorted(baselines.random_placement(cand, 100, 3).indices.tolist()) == cand.indices.tolist()
    a = baselines.random_placement(cand, 10, 42)
    assert np.array_equal(a.indices, baselines.random_placement(cand, 10, 42).indices)
    trials = [baselines.random_placement(cand, 10, s) for s in range(32)]
    for t in trials:
        assert len(set(t.indices.tolist())) == 10 and set(t.indices.tolist()) <= set(cand.indices.tolist())
    assert len({tuple(t.indices) for t in trials}) == 32
    with pytest.raises(ValueError):
        baselines.random_placement(cand, 101, 0)


def test_random_roughly_uniform():
    cand = graph.select_candidates(20, 20)
    counts = np.zeros(20)
    for s in range(4000):
        counts[baselines.random_placement(cand, 1, s).indices[0]] += 1
    assert counts.min() > 140 and counts.max() < 260


def test_trial_statistics_examples(rng):
    st = baselines.trial_statistics([5, 5, 5])
    assert (st.mean, st.std_dev, st.trials) == (5.0, 0.0, 3)
    st = baselines.trial_statistics([0, 2])
    assert (st.mean, st.std_dev) == (1.0, 1.0)
    vals = rng.random(32)
    st = baselines.trial_statistics(vals)
    mean = sum(vals) / 32
    std = (sum((v - mean) ** 2 for v in vals) / 32) ** 0.5
    assert abs(st.mean - mean) <= 1e-12 and abs(st.std_dev - std) <= 1e-12 and st.per_trial == list(vals)
    with pytest.raises(ValueError):
        baselines.trial_statistics([])


def test_placement_invariants():
    with pytest.raises(ValueError):
        Placement(indices=np.array([1, 1]), method="x")
    with pytest.raises(ValueError):
        Placement(indices=np.array([], dtype=int), method="x")
    p = Placement(indices=np.array([4, 1]), method="greedy", params={"r": 3})
    C = p.selection_matrix(6)
    assert C.shape == (2, 6) and C[0, 4] == 1 and C[1, 1] == 1 and C.sum() == 2
    assert Placement.from_dict(p.to_dict()) == p
    assert p != Placement(indices=np.array([1, 4]), method="greedy", params={"r": 3})
