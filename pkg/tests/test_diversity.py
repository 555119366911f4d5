from __future__ import annotations

import math

import numpy as np
import pytest

from app.core.types import DataError
from app.metrics import ProbBatch, diversity


def test_identical_members_have_no_diversity(rng):
    probs = rng.dirichlet(np.ones(4), size=10)
    report = diversity([ProbBatch(probs), ProbBatch(probs.copy())])
    assert report.pairwise_kl == pytest.approx(0.0, abs=1e-12)
    assert report.classwise_variance == 0.0
    assert report.js_divergence == pytest.approx(0.0, abs=1e-12)


def test_two_member_hand_example():
    a = ProbBatch(np.array([[0.8, 0.2]]))
    b = ProbBatch(np.array([[0.2, 0.8]]))
    report = diversity([a, b])
    assert report.pairwise_kl == pytest.approx(0.6 * math.log(4), abs=1e-12)
    assert report.classwise_variance == pytest.approx(0.36, abs=1e-12)
    assert report.js_divergence == pytest.approx(
        0.8 * math.log(1.6) + 0.2 * math.log(0.4), abs=1e-12
    )
    assert report.members == 2


def test_three_members_match_loop_oracle(rng):
    members = [rng.dirichlet(np.ones(3), size=5) for _ in range(3)]
    pair_total = 0.0
    for i in range(3):
        for j in range(3):
            if i != j:
                pair_total += np.sum(members[i] * np.log(members[i] / members[j])) / 5
    report = diversity([ProbBatch(p) for p in members])
    assert report.pairwise_kl == pytest.approx(pair_total / 6, rel=1e-10)

    stacked = np.stack(members)
    variance = sum(
        np.var(stacked[:, n, c], ddof=1) for n in range(5) for c in range(3)
    ) / 5
    assert report.classwise_variance == pytest.approx(variance, rel=1e-10)

    js_total = 0.0
    for n in range(5):
        for c in range(3):
            mean = sum(members[i][n][c] for i in range(3)) / 3
            for i in range(3):
                p = members[i][n][c]
                js_total += p * math.log(p / mean)
    assert report.js_divergence == pytest.approx(js_total / (3 * 5), rel=1e-10)


def test_needs_two_members(rng):
    with pytest.raises(DataError):
        diversity([ProbBatch(rng.dirichlet(np.ones(3), size=2))])
