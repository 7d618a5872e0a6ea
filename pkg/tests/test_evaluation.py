import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavtrack.baselines import OBSERVER, TARGET
from uavtrack.config import EnvConfig
from uavtrack.evaluation import (
    ActorPolicy, PolicyResolutionError, cell, episode_seeds, matrix_report, ospa_episode, render_table,
    resolve_policy, run_matchup, select_median, write_matchup_csv, write_report_csv,
)
from uavtrack.rl.nets import make_actor

errors = st.lists(st.floats(0.0, 2000.0), max_size=600)


def test_ospa_degenerate_cases():
    assert ospa_episode([], 600, 500.0) == 500.0
    assert ospa_episode(np.zeros(600), 600, 500.0) == 0.0
    assert ospa_episode(np.full(600, 100.0), 600, 500.0) == pytest.approx(100.0)


def test_ospa_rejects_long_trace():
    with pytest.raises(ValueError):
        ospa_episode(np.zeros(601), 600)


@given(errors)
def test_ospa_bounded(e):
    assert 0.0 <= ospa_episode(e, 600, 500.0) <= 500.0 + 1e-9


@given(errors, st.integers(0, 599), st.floats(0.0, 1000.0))
def test_ospa_monotone_in_error(e, i, bump):
    if not e:
        return
    i %= len(e)
    worse = list(e)
    worse[i] += bump
    assert ospa_episode(worse, 600) >= ospa_episode(e, 600)


@given(errors.filter(bool))
def test_ospa_monotone_in_early_termination(e):
    assert ospa_episode(e[:-1], 600) >= ospa_episode(e, 600)


def policies(o, t, config):
    return resolve_policy(o, OBSERVER, config), resolve_policy(t, TARGET, config)


def test_matchup_deterministic(config):
    a = run_matchup(*policies("random", "pctrl", config), 5, seed=11, config=config)
    b = run_matchup(*policies("random", "pctrl", config), 5, seed=11, config=config)
    assert a == b


def test_matchup_returns_bounded(config):
    res = run_matchup(*policies("random", "random", config), 10, seed=0, config=config)
    assert all(math.isfinite(r) and r <= 2 * config.max_steps for r in res.returns)
    assert all(0.0 <= o <= 500.0 for o in res.ospa)


def test_random_matchup_stable_across_seeds(config):
    means = [run_matchup(*policies("random", "random", config), 50, seed=s, config=config).mean_return
             for s in (1, 2)]
    spread = np.std(run_matchup(*policies("random", "random", config), 50, seed=1, config=config).returns)
    assert abs(means[0] - means[1]) < 2 * 2 * spread / math.sqrt(50)


def test_episode_seeds_paired():
    a, b = episode_seeds(3, 7), episode_seeds(3, 7)
    assert a[0] == b[0]
    assert a[1].random() == b[1].random()
    assert episode_seeds(3, 8)[0] != a[0]


def test_evaluation_does_not_mutate_policy(config):
    net = make_actor(6, (8,), np.random.default_rng(0))
    before = net.params.copy()
    run_matchup(ActorPolicy(net, OBSERVER), resolve_policy("random", TARGET, config), 3, 0, config)
    assert np.array_equal(net.params, before)


def test_resolve_errors(config, tmp_path):
    with pytest.raises(PolicyResolutionError):
        resolve_policy("greedy", OBSERVER, config)
    with pytest.raises(PolicyResolutionError):
        ActorPolicy(make_actor(4, (8,)), OBSERVER)


def test_matrix_shape_and_static_sigma(config, tmp_path):
    nets = [make_actor(6, (8,), np.random.default_rng(i)) for i in range(2)]
    tnets = [make_actor(4, (8,), np.random.default_rng(10 + i)) for i in range(2)]
    observers = {"cotrain": [ActorPolicy(n, OBSERVER) for n in nets],
                 "pctrl": [resolve_policy("pctrl", OBSERVER, config)],
                 "random": [resolve_policy("random", OBSERVER, config)]}
    targets = {"cotrain": [ActorPolicy(n, TARGET) for n in tnets],
               "pctrl": [resolve_policy("pctrl", TARGET, config)],
               "random": [resolve_policy("random", TARGET, config)]}
    cells = matrix_report(observers, targets, 3, 0, config)
    assert len(cells) == 9
    for o in ("pctrl", "random"):
        for t in ("pctrl", "random"):
            assert cell(cells, o, t).run_2sigma == 0.0
    assert cell(cells, "cotrain", "cotrain").n_runs == 2
    table = render_table(cells)
    assert len(table.splitlines()) == 6
    write_report_csv(cells, tmp_path / "r.csv")
    assert len((tmp_path / "r.csv").read_text().splitlines()) == 10


def test_matchup_csv_rows(config, tmp_path):
    res = run_matchup(*policies("pctrl", "pctrl", config), 4, 0, config)
    write_matchup_csv(res, tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert len(lines) == 5 and lines[0].endswith("cause")


def test_select_median(config):
    pairs = [policies("random", "random", config), policies("pctrl", "random", config),
             policies("random", "pctrl", config)]
    returns = [run_matchup(o, t, 4, 0, config).mean_return for o, t in pairs]
    assert select_median(pairs, 4, 0, config) == int(np.argsort(returns)[1])
