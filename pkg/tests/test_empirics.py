import numpy as np
import pytest

from paldp.empirics import (attachment_counts, attachment_measure, exact_attachment_law, degree_measure, exact_degree_law, snapshot_path,
                            uniform_grid)
from paldp.generator import EventLog, generate
from paldp.measures import pair_marginal


def log_of(parents, n=None, colors=("x",), vertex_colors=None):
    n = len(parents) + 1 if n is None else n
    parents = np.array(parents)
    indeg = np.zeros(n + 1, int)
    rec = []
    for p in parents:
        rec.append(indeg[p])
        indeg[p] += 1
    vc = np.zeros(n, int) if vertex_colors is None else vertex_colors
    return EventLog(n, colors, vc, parents, rec).check()


def test_attachment_measure_examples():
    assert degree_measure(log_of([1, 1])).probs.tolist() == [0.5, 0.5]
    assert degree_measure(log_of([1, 2])).probs.tolist() == [1.0]
    assert degree_measure(log_of([1])).probs.tolist() == [1.0]


def test_tail_law_identity(colored, mu2):
    for seed in range(10):
        log = generate(colored, mu2, 500, seed=seed)
        law = exact_degree_law(log)
        deg = log.final_indegrees()
        for j, m in enumerate(law):
            assert m * (log.n - 1) == np.sum(deg >= j + 1)
        assert sum(law) == 1
        assert all(a >= b for a, b in zip(law, law[1:]))


def test_pair_measure_mass(colored, mu2):
    log = generate(colored, mu2, 400, seed=1)
    assert attachment_counts(log).sum() == 399
    assert sum(v for _, v in exact_attachment_law(log)) == 1
    assert pair_marginal(attachment_measure(log)).sum() == pytest.approx(1.0, abs=1e-12)


def test_snapshot_first_time_is_root_delta():
    log = log_of([1, 1, 1])
    nu = snapshot_path(log, [2 / 4, 1.0])
    assert nu.probs[0, :, 0].tolist() == [1.0, 0.0, 0.0, 0.0]


def test_snapshot_replay_example():
    # events 2->1, 3->1, 4->1: the final snapshot sees vertices 1..3 with in-degrees (2, 0, 0)
    log = log_of([1, 1, 1])
    nu = snapshot_path(log, [1.0])
    np.testing.assert_allclose(nu.probs[0, :3, 0], [2 / 3, 0, 1 / 3], atol=1e-15)
    # the attachment measure differs from the final snapshot at finite n
    np.testing.assert_allclose(degree_measure(log).probs, [1 / 3, 1 / 3, 1 / 3], atol=1e-15)


def test_snapshot_mean_handshake(plain):
    log = generate(plain, None, 300, seed=4)
    grid = uniform_grid(300, 25)
    nu = snapshot_path(log, grid)
    for i, t in enumerate(grid):
        m = int(round(t * 300))
        mean = float(np.arange(nu.kmax + 1) @ nu.probs[i, :, 0])
        assert mean * (m - 1) == pytest.approx(m - 2, abs=1e-9)


def test_snapshot_grid_domain(plain):
    log = generate(plain, None, 10, seed=0)
    with pytest.raises(ValueError):
        snapshot_path(log, [0.1, 1.0])


def test_snapshot_colored_classes(colored, mu2):
    log = generate(colored, mu2, 200, seed=2)
    nu = snapshot_path(log, uniform_grid(200, 5))
    assert np.all(np.abs(nu.pair_weights.sum(axis=1) - 1) < 1e-12)
