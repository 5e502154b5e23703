"""Per-action transition and cost models of the embedded decision chain.

Each action gets a plain stochastic matrix (for stationary analysis), a
discounted matrix (for the Bellman equations) and a cost vector over the
flattened (n1, n2, l1) state space.  Serve and switch rows spread the
pooled arrival probabilities of their event; idling is uniformised on the
total arrival rate and resolves to the first arrival of either class.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np
from scipy import sparse

from .lattice import ArrivalSummary, build_arrival_summaries
from .model import (
    ACTIONS,
    IDLE,
    SERVE,
    SWITCH,
    PollingState,
    ScenarioConfig,
    StateIndexer,
    feasible_actions,
    triple_indexer,
)

EVENT_BY_ACTION = {SERVE: ("serve1", "serve2"), SWITCH: ("switch12", "switch21")}


@dataclass(frozen=True)
class ActionModel:
    """Sparse transition rows, discounted rows and costs for one action."""

    action: int
    P: sparse.csr_matrix
    P_beta: sparse.csr_matrix
    C: np.ndarray
    feasible_mask: np.ndarray  # rows where the action may be chosen

    def row(self, x: int):
        lo, hi = self.P.indptr[x], self.P.indptr[x + 1]
        return self.P.indices[lo:hi], self.P.data[lo:hi], self.P_beta.data[lo:hi]


class SmdpModel:
    """Bundle of the three per-action models over the decision state space."""

    def __init__(self, cfg: ScenarioConfig, summaries: Dict[str, ArrivalSummary],
                 models: Dict[int, ActionModel]):
        self.cfg = cfg
        self.summaries = summaries
        self.models = models
        self.indexer = triple_indexer(cfg)
        self.n_states = self.indexer.size
        self.decision_states = np.arange(self.n_states)
        self.fixed_states = np.arange(0)
        n1, n2, l1 = self.indexer.unflatten(np.arange(self.n_states))
        self._feasible = [
            feasible_actions(PollingState(int(a), int(b), int(c)))
            for a, b, c in zip(n1, n2, l1)
        ]

    def actions_at(self, x: int):
        return self._feasible[x]

    def action_row(self, x: int, a: int):
        if a not in self._feasible[x]:
            raise ValueError(f"action {a} infeasible at state {x}")
        m = self.models[a]
        cols, plain, disc = m.row(x)
        return cols, plain, disc, float(m.C[x])

    def fixed_row(self, x: int):
        raise ValueError("the embedded decision chain has no dynamics-only states")

    def decision_table(self, actions: np.ndarray) -> np.ndarray:
        """Actions over the (n1, n2, l1) box; identity for this model."""
        return np.asarray(actions, dtype=int).copy()


def build_cost_vector(cfg: ScenarioConfig, summaries: Dict[str, ArrivalSummary],
                      action: int) -> np.ndarray:
    """Cost of committing to ``action`` in every state (0 where infeasible)."""
    indexer = triple_indexer(cfg)
    n1, n2, l1 = indexer.unflatten(np.arange(indexer.size))
    n1 = np.asarray(n1, dtype=float)
    n2 = np.asarray(n2, dtype=float)
    l1 = np.asarray(l1)
    held = cfg.c1 * n1 + cfg.c2 * n2
    if action == IDLE:
        gamma_l = sum(cfg.arrival_rates if cfg.rate_fn is None else cfg.rate_fn(0, 0))
        return held / (cfg.beta + gamma_l)
    C = np.zeros(indexer.size)
    for loc in (0, 1):
        s = summaries[EVENT_BY_ACTION[action][loc]]
        at_loc = l1 == loc
        C[at_loc] = held[at_loc] * s.C_H + s.C_I
        if action == SWITCH:
            C[at_loc] += cfg.switch_costs[loc]
    if action == SERVE:
        infeasible = np.where(l1 == 0, n1, n2) == 0
        C[infeasible] = 0.0
    return C


def build_action_model(cfg: ScenarioConfig, summaries: Dict[str, ArrivalSummary],
                       action: int) -> ActionModel:
    """Assemble one action's transition matrices and cost vector.

    Serve decrements the served queue and adds the event's pooled arrivals;
    switch flips the server location and adds its event's arrivals plus the
    lump switching cost; idle has the two uniformised arrival successors.
    Arrival mass that would exceed a queue bound pools onto the capped state.
    """
    indexer = triple_indexer(cfg)
    X1, X2 = cfg.X1, cfg.X2
    n_states = indexer.size
    lam1, lam2 = cfg.arrival_rates if cfg.rate_fn is None else cfg.rate_fn(0, 0)

    C = build_cost_vector(cfg, summaries, action)
    feasible_mask = np.zeros(n_states, dtype=bool)
    indptr = np.zeros(n_states + 1, dtype=np.int64)
    cols_parts, p_parts, pb_parts = [], [], []

    if action in EVENT_BY_ACTION:
        lat = StateIndexer((cfg.N1, cfg.N2))
        arr1, arr2 = lat.unflatten(np.arange(lat.size))
        arr1 = np.asarray(arr1)
        arr2 = np.asarray(arr2)

    for x in range(n_states):
        n1, n2, l1 = indexer.unflatten(x)
        state = PollingState(n1, n2, l1)
        ok = action in feasible_actions(state)
        feasible_mask[x] = ok
        if not ok:
            indptr[x + 1] = indptr[x]
            continue
        if action == IDLE:
            dests, probs = [], []
            if lam1 > 0:
                dests.append(indexer.flatten(min(n1 + 1, X1), n2, l1))
                probs.append(lam1)
            if lam2 > 0:
                dests.append(indexer.flatten(n1, min(n2 + 1, X2), l1))
                probs.append(lam2)
            gamma_l = lam1 + lam2
            if gamma_l > 0:
                row = np.zeros(n_states)
                np.add.at(row, dests, np.asarray(probs) / gamma_l)
                nz = np.flatnonzero(row)
                alpha = gamma_l / (gamma_l + cfg.beta)
                cols_parts.append(nz)
                p_parts.append(row[nz])
                pb_parts.append(alpha * row[nz])
                indptr[x + 1] = indptr[x] + len(nz)
            else:
                indptr[x + 1] = indptr[x]  # idling never ends; row stays empty
            continue
        s = summaries[EVENT_BY_ACTION[action][l1]]
        if action == SERVE:
            d1, d2 = (1, 0) if l1 == 0 else (0, 1)
            new_l1 = l1
        else:
            d1 = d2 = 0
            new_l1 = 1 - l1
        dest = indexer.flatten(
            np.clip(n1 - d1 + arr1, 0, X1),
            np.clip(n2 - d2 + arr2, 0, X2),
            np.full(lat.size, new_l1),
        )
        row = np.bincount(dest, weights=s.P, minlength=n_states)
        row_b = np.bincount(dest, weights=s.P_beta, minlength=n_states)
        moved = row.sum()
        if abs(moved - s.P.sum()) > 1e-12:
            raise AssertionError("pooling lost transition mass")
        nz = np.flatnonzero(row)
        cols_parts.append(nz)
        p_parts.append(row[nz])
        pb_parts.append(row_b[nz])
        indptr[x + 1] = indptr[x] + len(nz)

    cols = np.concatenate(cols_parts) if cols_parts else np.zeros(0, dtype=int)
    pvals = np.concatenate(p_parts) if p_parts else np.zeros(0)
    pbvals = np.concatenate(pb_parts) if pb_parts else np.zeros(0)
    P = sparse.csr_matrix((pvals, cols, indptr), shape=(n_states, n_states))
    P_beta = sparse.csr_matrix((pbvals, cols.copy(), indptr.copy()),
                               shape=(n_states, n_states))
    return ActionModel(action=action, P=P, P_beta=P_beta, C=C, feasible_mask=feasible_mask)


def build_smdp(cfg: ScenarioConfig,
               summaries: Optional[Dict[str, ArrivalSummary]] = None,
               dt: Optional[float] = None) -> SmdpModel:
    """Build the full embedded decision model for a scenario."""
    if summaries is None:
        summaries = build_arrival_summaries(cfg, dt=dt)
    models = {a: build_action_model(cfg, summaries, a) for a in ACTIONS}
    return SmdpModel(cfg, summaries, models)


def write_action_model_csv(model: ActionModel, path) -> None:
    """Dump one action model as rows (idx_from, idx_to, p, p_beta, cost)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["idx_from", "idx_to", "p", "p_beta", "cost"])
        P = model.P
        for x in range(P.shape[0]):
            lo, hi = P.indptr[x], P.indptr[x + 1]
            for k in range(lo, hi):
                writer.writerow([
                    x,
                    int(P.indices[k]),
                    repr(float(P.data[k])),
                    repr(float(model.P_beta.data[k])),
                    repr(float(model.C[x])),
                ])
