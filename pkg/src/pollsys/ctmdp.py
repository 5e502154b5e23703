"""Uniformised continuous-time decision models of the polling system.

All event durations must be exponential here.  The preemptive model leaves
the server state out and re-decides every sampled epoch; the non-preemptive
model tracks the server activity explicitly, connects decision states to
in-progress dynamics through instantaneous, undiscounted linking rows, and
therefore needs state-action-dependent discount factors.  A flattened
state-value graph exposes the (at most four entries per row) sparsity to
the asynchronous value-iteration solver.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .distributions import Exponential
from .model import (
    IDLE,
    SERVE,
    PollingState,
    ScenarioConfig,
    feasible_actions,
    quad_indexer,
    triple_indexer,
)


class ModelError(ValueError):
    pass


def _exponential_rates(cfg: ScenarioConfig) -> Tuple[float, float, float, float]:
    dists = (cfg.serve1, cfg.serve2, cfg.switch12, cfg.switch21)
    for d in dists:
        if not isinstance(d, Exponential):
            raise ModelError(
                "uniformised models require exponential durations; "
                f"got {type(d).__name__}"
            )
    return tuple(d.rate for d in dists)


def _row_from_entries(entries) -> Tuple[np.ndarray, np.ndarray]:
    """Merge (col, prob) pairs, summing duplicates from capacity folding."""
    merged = {}
    for col, p in entries:
        if p != 0.0:
            merged[col] = merged.get(col, 0.0) + p
    cols = np.array(sorted(merged), dtype=np.int64)
    probs = np.array([merged[c] for c in cols])
    return cols, probs


class PreemptiveModel:
    """Uniformised model over (n1, n2, l1); every state is a decision state."""

    def __init__(self, cfg: ScenarioConfig):
        mu1, mu2, s12, s21 = _exponential_rates(cfg)
        if cfg.rate_fn is not None:
            raise ModelError("uniformised models require homogeneous arrival rates")
        lam1, lam2 = cfg.lambda1, cfg.lambda2
        self.cfg = cfg
        self.gamma = lam1 + lam2 + max(mu1, mu2, s12, s21)
        self.alpha = self.gamma / (self.gamma + cfg.beta)
        self.indexer = triple_indexer(cfg)
        self.n_states = self.indexer.size
        self.decision_states = np.arange(self.n_states)
        self.fixed_states = np.arange(0)

        X1, X2 = cfg.X1, cfg.X2
        n1v, n2v, _ = self.indexer.unflatten(np.arange(self.n_states))
        self.C = (cfg.c1 * np.asarray(n1v, float) + cfg.c2 * np.asarray(n2v, float)) / (
            self.gamma + cfg.beta
        )

        serve_rates = (mu1, mu2)
        switch_rates = (s12, s21)
        self._feasible = []
        self._rows = {}
        for x in range(self.n_states):
            n1, n2, l1 = self.indexer.unflatten(x)
            acts = feasible_actions(PollingState(n1, n2, l1))
            self._feasible.append(acts)
            arr1 = self.indexer.flatten(min(n1 + 1, X1), n2, l1)
            arr2 = self.indexer.flatten(n1, min(n2 + 1, X2), l1)
            for a in acts:
                entries = [(arr1, lam1 / self.gamma), (arr2, lam2 / self.gamma)]
                if a == IDLE:
                    rate = 0.0
                elif a == SERVE:
                    rate = serve_rates[l1]
                    dest = (n1 - 1, n2, l1) if l1 == 0 else (n1, n2 - 1, l1)
                    entries.append((self.indexer.flatten(*dest), rate / self.gamma))
                else:
                    rate = switch_rates[l1]
                    entries.append((self.indexer.flatten(n1, n2, 1 - l1), rate / self.gamma))
                entries.append((x, 1.0 - (rate + lam1 + lam2) / self.gamma))
                self._rows[(x, a)] = _row_from_entries(entries)

    def actions_at(self, x: int):
        return self._feasible[x]

    def action_row(self, x: int, a: int):
        cols, probs = self._rows[(x, a)]
        return cols, probs, self.alpha * probs, float(self.C[x])

    def fixed_row(self, x: int):
        raise ValueError("preemptive model has no dynamics-only states")

    def decision_table(self, actions: np.ndarray) -> np.ndarray:
        return np.asarray(actions, dtype=int).copy()


class NonPreemptiveModel:
    """Uniformised model over (n1, n2, l1, l2) with linking transitions.

    Rows for in-progress states (l2 in {1, 2}) are fixed once; decision rows
    (l2 = 0) depend on the chosen action.  Committing to serve or switch is a
    linking transition: probability one, zero cost, no discounting.  Idling
    is sampled at the total arrival rate and lands in another decision state.
    """

    def __init__(self, cfg: ScenarioConfig):
        mu1, mu2, s12, s21 = _exponential_rates(cfg)
        if cfg.rate_fn is not None:
            raise ModelError("uniformised models require homogeneous arrival rates")
        lam1, lam2 = cfg.lambda1, cfg.lambda2
        self.cfg = cfg
        self.gamma = lam1 + lam2 + max(mu1, mu2, s12, s21)
        self.alpha = self.gamma / (self.gamma + cfg.beta)
        self.gamma_idle = lam1 + lam2
        self.alpha_idle = self.gamma_idle / (self.gamma_idle + cfg.beta)
        self.indexer = quad_indexer(cfg)
        self.n_states = self.indexer.size

        X1, X2 = cfg.X1, cfg.X2
        n1v, n2v, l1v, l2v = self.indexer.unflatten(np.arange(self.n_states))
        n1v, n2v = np.asarray(n1v), np.asarray(n2v)
        l2v = np.asarray(l2v)
        self.decision_states = np.flatnonzero(l2v == 0)
        self.fixed_states = np.flatnonzero(l2v != 0)
        held = cfg.c1 * n1v.astype(float) + cfg.c2 * n2v.astype(float)
        self._held = held

        serve_rates = (mu1, mu2)
        switch_rates = (s12, s21)
        self._feasible = {}
        self._decision_rows = {}
        self._fixed_rows = {}
        for x in range(self.n_states):
            n1, n2, l1, l2 = self.indexer.unflatten(x)
            arr1 = self.indexer.flatten(min(n1 + 1, X1), n2, l1, l2)
            arr2 = self.indexer.flatten(n1, min(n2 + 1, X2), l1, l2)
            if l2 == 1:  # service in progress at queue l1
                rate = serve_rates[l1]
                dest = (max(n1 - 1, 0), n2, l1, 0) if l1 == 0 else (n1, max(n2 - 1, 0), l1, 0)
                entries = [
                    (self.indexer.flatten(*dest), rate / self.gamma),
                    (arr1, lam1 / self.gamma),
                    (arr2, lam2 / self.gamma),
                    (x, 1.0 - (rate + lam1 + lam2) / self.gamma),
                ]
                self._fixed_rows[x] = _row_from_entries(entries)
            elif l2 == 2:  # switch-over in progress away from queue l1
                rate = switch_rates[l1]
                entries = [
                    (self.indexer.flatten(n1, n2, 1 - l1, 0), rate / self.gamma),
                    (arr1, lam1 / self.gamma),
                    (arr2, lam2 / self.gamma),
                    (x, 1.0 - (rate + lam1 + lam2) / self.gamma),
                ]
                self._fixed_rows[x] = _row_from_entries(entries)
            else:
                acts = feasible_actions(PollingState(n1, n2, l1))
                self._feasible[x] = acts
                for a in acts:
                    if a == IDLE:
                        entries = []
                        if lam1 > 0:
                            entries.append((arr1, lam1 / self.gamma_idle))
                        if lam2 > 0:
                            entries.append((arr2, lam2 / self.gamma_idle))
                        self._decision_rows[(x, a)] = _row_from_entries(entries)
                    else:
                        link = self.indexer.flatten(n1, n2, l1, 1 if a == SERVE else 2)
                        self._decision_rows[(x, a)] = (
                            np.array([link], dtype=np.int64),
                            np.array([1.0]),
                        )

    def actions_at(self, x: int):
        return self._feasible[x]

    def action_row(self, x: int, a: int):
        cols, probs = self._decision_rows[(x, a)]
        if a == IDLE:
            cost = float(self._held[x]) / (self.cfg.beta + self.gamma_idle)
            return cols, probs, self.alpha_idle * probs, cost
        return cols, probs, probs, 0.0  # linking row: discount 1, cost 0

    def fixed_row(self, x: int):
        cols, probs = self._fixed_rows[x]
        cost = float(self._held[x]) / (self.gamma + self.cfg.beta)
        return cols, probs, self.alpha * probs, cost

    def discount_of(self, x: int, a: int) -> float:
        """State-action discount: 1 on linking rows, else a uniformised factor."""
        if x in self._fixed_rows:
            return self.alpha
        return self.alpha_idle if a == IDLE else 1.0

    def decision_table(self, actions: np.ndarray) -> np.ndarray:
        """Project decision-state actions onto the (n1, n2, l1) box."""
        tri = triple_indexer(self.cfg)
        table = np.full(tri.size, -1, dtype=int)
        for x in self.decision_states:
            n1, n2, l1, _ = self.indexer.unflatten(int(x))
            table[tri.flatten(n1, n2, l1)] = actions[x]
        return table


def build_preemptive(cfg: ScenarioConfig) -> PreemptiveModel:
    return PreemptiveModel(cfg)


def build_nonpreemptive(cfg: ScenarioConfig) -> NonPreemptiveModel:
    return NonPreemptiveModel(cfg)


@dataclass(frozen=True)
class ValueGraph:
    """Flattened state-value graph: Q nodes grouped contiguously per state."""

    n_states: int
    q_state: np.ndarray  # state index of each Q node
    q_action: np.ndarray  # action id, -1 for dynamics continuation nodes
    q_cost: np.ndarray
    q_disc: np.ndarray  # scalar discount per node
    q_indptr: np.ndarray  # neighbour ranges
    q_cols: np.ndarray
    q_probs: np.ndarray
    state_nq: np.ndarray  # number of Q nodes per state
    decision_mask: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.q_cost)


def build_value_graph(model) -> ValueGraph:
    """One Q node per feasible (state, action), one per dynamics state.

    Node order groups same-state nodes contiguously in state order, with a
    state's actions ascending (idle < serve < switch); value iteration relies
    on this ordering for its asynchronous state updates.
    """
    n = model.n_states
    fixed = set(int(x) for x in model.fixed_states)
    q_state, q_action, q_cost, q_disc = [], [], [], []
    q_indptr = [0]
    q_cols, q_probs = [], []
    state_nq = np.zeros(n, dtype=np.int64)
    decision_mask = np.ones(n, dtype=bool)
    for x in range(n):
        if x in fixed:
            decision_mask[x] = False
            rows = [(-1,) + model.fixed_row(x)]
        else:
            rows = [(a,) + model.action_row(x, a) for a in model.actions_at(x)]
        state_nq[x] = len(rows)
        for a, cols, probs, disc_vals, cost in rows:
            total = probs.sum()
            scale = (disc_vals.sum() / total) if total > 0 else 0.0
            if total > 0 and np.abs(disc_vals - scale * probs).max() > 1e-9:
                raise ModelError(
                    "value graph needs a scalar discount per row; this model "
                    "carries per-entry discounting"
                )
            q_state.append(x)
            q_action.append(a)
            q_cost.append(cost)
            q_disc.append(scale)
            q_cols.extend(int(c) for c in cols)
            q_probs.extend(float(p) for p in probs)
            q_indptr.append(len(q_cols))
    return ValueGraph(
        n_states=n,
        q_state=np.array(q_state, dtype=np.int64),
        q_action=np.array(q_action, dtype=np.int64),
        q_cost=np.array(q_cost, dtype=float),
        q_disc=np.array(q_disc, dtype=float),
        q_indptr=np.array(q_indptr, dtype=np.int64),
        q_cols=np.array(q_cols, dtype=np.int64),
        q_probs=np.array(q_probs, dtype=float),
        state_nq=state_nq,
        decision_mask=decision_mask,
    )
