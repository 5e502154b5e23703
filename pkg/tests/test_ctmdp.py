import numpy as np
import pytest

from pollsys import (
    IDLE,
    SERVE,
    SWITCH,
    Exponential,
    Gamma,
    build_nonpreemptive,
    build_preemptive,
    build_value_graph,
)
from pollsys.ctmdp import ModelError

from conftest import exp_config, slow_mode_config


def slow_exp_config(**kw):
    base = dict(
        lambda1=1.5, lambda2=0.4,
        serve1=Exponential(10.0), serve2=Exponential(2.0),
        switch12=Exponential(0.5), switch21=Exponential(1 / 3),
        c1=2.0, c2=1.0, beta=0.05, X1=4, X2=4, N1=4, N2=4,
    )
    base.update(kw)
    return exp_config(**{**base, **kw})


def test_preemptive_rates_and_discount():
    model = build_preemptive(slow_exp_config())
    assert model.gamma == pytest.approx(11.9)
    assert model.alpha == pytest.approx(11.9 / 11.95)
    assert model.alpha == pytest.approx(0.995816, abs=1e-6)


def test_preemptive_rejects_non_exponential():
    with pytest.raises(ModelError):
        build_preemptive(slow_mode_config())
    with pytest.raises(ModelError):
        build_nonpreemptive(exp_config(serve1=Gamma(2, 0.2)))


def test_preemptive_idle_row():
    model = build_preemptive(slow_exp_config())
    idx = model.indexer
    x = idx.flatten(1, 1, 0)
    cols, plain, disc, cost = model.action_row(x, IDLE)
    row = dict(zip(cols.tolist(), plain.tolist()))
    assert row[idx.flatten(2, 1, 0)] == pytest.approx(1.5 / 11.9)
    assert row[idx.flatten(1, 2, 0)] == pytest.approx(0.4 / 11.9)
    assert row[x] == pytest.approx(1 - 1.9 / 11.9)
    assert sum(row.values()) == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(disc, model.alpha * plain)


def test_preemptive_serve_row():
    model = build_preemptive(slow_exp_config())
    idx = model.indexer
    cols, plain, _, _ = model.action_row(idx.flatten(1, 2, 0), SERVE)
    row = dict(zip(cols.tolist(), plain.tolist()))
    assert row[idx.flatten(0, 2, 0)] == pytest.approx(10.0 / 11.9)
    assert sum(row.values()) == pytest.approx(1.0, abs=1e-12)


def test_preemptive_cost_action_invariant():
    model = build_preemptive(slow_exp_config())
    idx = model.indexer
    x = idx.flatten(2, 1, 1)
    costs = [model.action_row(x, a)[3] for a in model.actions_at(x)]
    assert costs == pytest.approx([(2.0 * 2 + 1.0 * 1) / 11.95] * len(costs))


def test_nonpreemptive_linking_rows():
    model = build_nonpreemptive(slow_exp_config())
    idx = model.indexer
    x = idx.flatten(2, 0, 0, 0)
    cols, plain, disc, cost = model.action_row(x, SERVE)
    assert cols.tolist() == [idx.flatten(2, 0, 0, 1)]
    assert plain.tolist() == [1.0]
    assert disc.tolist() == [1.0]
    assert cost == 0.0
    cols, plain, disc, cost = model.action_row(x, SWITCH)
    assert cols.tolist() == [idx.flatten(2, 0, 0, 2)]
    assert cost == 0.0 and disc.tolist() == [1.0]


def test_nonpreemptive_idle_row():
    model = build_nonpreemptive(slow_exp_config())
    idx = model.indexer
    x = idx.flatten(0, 0, 0, 0)
    cols, plain, disc, cost = model.action_row(x, IDLE)
    row = dict(zip(cols.tolist(), plain.tolist()))
    gl = 1.9
    assert row == {
        idx.flatten(1, 0, 0, 0): pytest.approx(1.5 / gl),
        idx.flatten(0, 1, 0, 0): pytest.approx(0.4 / gl),
    }
    assert np.allclose(disc, (gl / (gl + 0.05)) * plain)
    assert cost == 0.0
    # no self transitions at interior idle rows
    for n1 in range(3):
        for n2 in range(3):
            y = idx.flatten(n1, n2, 1, 0)
            cols, _, _, _ = model.action_row(y, IDLE)
            assert y not in cols.tolist()


def test_nonpreemptive_service_in_progress_row():
    model = build_nonpreemptive(slow_exp_config())
    idx = model.indexer
    x = idx.flatten(1, 1, 0, 1)
    cols, plain, disc, cost = model.fixed_row(x)
    row = dict(zip(cols.tolist(), plain.tolist()))
    assert row[idx.flatten(0, 1, 0, 0)] == pytest.approx(10.0 / 11.9)
    assert row[idx.flatten(2, 1, 0, 1)] == pytest.approx(1.5 / 11.9)
    assert row[idx.flatten(1, 2, 0, 1)] == pytest.approx(0.4 / 11.9)
    # the self-loop remainder 1 - (mu1 + l1 + l2)/gamma vanishes here
    assert x not in row
    assert sum(row.values()) == pytest.approx(1.0, abs=1e-12)
    assert cost == pytest.approx((2.0 + 1.0) / 11.95)


def test_nonpreemptive_rows_stochastic_and_sparse():
    model = build_nonpreemptive(slow_exp_config(X1=3, X2=3))
    for x in model.fixed_states:
        cols, plain, _, _ = model.fixed_row(int(x))
        assert len(cols) <= 4
        assert plain.sum() == pytest.approx(1.0, abs=1e-12)
    for x in model.decision_states:
        for a in model.actions_at(int(x)):
            cols, plain, _, _ = model.action_row(int(x), a)
            assert len(cols) <= 4
            assert plain.sum() == pytest.approx(1.0, abs=1e-12)


def test_nonpreemptive_reachability_structure():
    model = build_nonpreemptive(slow_exp_config(X1=3, X2=3))
    idx = model.indexer
    decision = set(int(x) for x in model.decision_states)
    for x in decision:
        for a in model.actions_at(x):
            cols, _, _, _ = model.action_row(x, a)
            if a == IDLE:
                assert all(int(c) in decision for c in cols)
            else:
                assert all(int(c) not in decision for c in cols)


def test_discount_values_limited():
    model = build_nonpreemptive(slow_exp_config())
    allowed = (1.0, model.alpha, model.alpha_idle)
    for x in model.decision_states:
        for a in model.actions_at(int(x)):
            d = model.discount_of(int(x), a)
            assert min(abs(d - v) for v in allowed) < 1e-15
    for x in model.fixed_states:
        assert model.discount_of(int(x), -1) == pytest.approx(model.alpha)


def test_value_graph_counts():
    model = build_nonpreemptive(slow_exp_config(X1=2, X2=2))
    graph = build_value_graph(model)
    assert graph.n_states == 3 * 3 * 2 * 3
    assert len(model.decision_states) == 3 * 3 * 2
    assert len(model.fixed_states) == 36
    # one node per feasible decision action plus one per dynamics state
    n_decision_nodes = sum(
        len(model.actions_at(int(x))) for x in model.decision_states
    )
    assert graph.n_nodes == n_decision_nodes + 36
    # dynamics nodes have at most four neighbours
    for i in range(graph.n_nodes):
        s = graph.q_state[i]
        if not graph.decision_mask[s]:
            assert graph.q_indptr[i + 1] - graph.q_indptr[i] <= 4
    # contiguous grouping: state ids never reappear after changing
    seen = []
    for s in graph.q_state:
        if not seen or seen[-1] != s:
            assert s not in seen
            seen.append(s)


def test_value_graph_probabilities_sum_to_one():
    model = build_nonpreemptive(slow_exp_config(X1=2, X2=2))
    graph = build_value_graph(model)
    for i in range(graph.n_nodes):
        lo, hi = graph.q_indptr[i], graph.q_indptr[i + 1]
        assert graph.q_probs[lo:hi].sum() == pytest.approx(1.0, abs=1e-12)


def test_value_graph_rejects_per_entry_discounts():
    from pollsys import build_smdp

    with pytest.raises(ModelError, match="scalar discount"):
        build_value_graph(build_smdp(slow_exp_config(X1=2, X2=2)))


def test_preemptive_and_nonpreemptive_share_rates():
    cfg = slow_exp_config()
    pre = build_preemptive(cfg)
    npm = build_nonpreemptive(cfg)
    assert pre.gamma == npm.gamma
    assert pre.alpha == npm.alpha
