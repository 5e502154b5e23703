"""Semi-Markov simulation with common random numbers.

Each rollout consults a policy at the embedded-chain epochs, draws the
committed event's duration from its own deterministic substream, superposes
the Poisson arrivals inside the interval, and accumulates locally discounted
step costs.  Running two policies with the same base seed reuses identical
event samples, which is what makes paired performance comparisons fair.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import (
    IDLE,
    SERVE,
    SWITCH,
    PollingState,
    ScenarioConfig,
    triple_indexer,
)
from .baselines import exhaustive_policy, heuristic_policy

# substream tags: one per event type, plus bookkeeping streams
TAG_LAMBDA = (0, 1)
TAG_SERVE = (2, 3)
TAG_SWITCH = (4, 5)
TAG_INIT = 6
TAG_SHUFFLE = 7


class QueueOverflowError(RuntimeError):
    """A queue exceeded the simulator cap; the policy is destabilising."""


class SeedStream:
    """Deterministic per-event-type substreams derived from one base seed.

    Every event type owns an independent counter-based (Philox) stream keyed
    by (base seed, event tag), so equal seeds reproduce identical event
    samples across policies and platforms.
    """

    def __init__(self, base_seed: int):
        self.base_seed = int(base_seed)
        self._gens = {}

    def generator(self, tag: int) -> np.random.Generator:
        gen = self._gens.get(tag)
        if gen is None:
            key = (self.base_seed << 6) + tag
            gen = np.random.Generator(np.random.Philox(key=key))
            self._gens[tag] = gen
        return gen


@dataclass
class RolloutTrace:
    """Embedded-chain trajectory: entry states, actions, costs and times."""

    n1: np.ndarray
    n2: np.ndarray
    l1: np.ndarray
    action: np.ndarray
    cost: np.ndarray  # locally discounted step cost c_k^beta
    dt: np.ndarray
    t: np.ndarray  # entry times, t[0] = 0
    horizon: float
    arrivals: Optional[list] = None  # per interval: ((class, time), ...)

    def __len__(self):
        return len(self.t)


class ExhaustivePolicy:
    """Stateless adapter around the exhaustive rule."""

    def start(self):
        return None

    def act(self, n1, n2, l1, carry):
        return exhaustive_policy(PollingState(n1, n2, l1)), carry


class HeuristicPolicy:
    """Priority-queue heuristic with its served-one-queue-2-job flag."""

    def __init__(self, cfg: ScenarioConfig):
        self.cfg = cfg
        # fail fast on inapplicable scenarios
        heuristic_policy(cfg, PollingState(0, 0, 0), False)

    def start(self):
        return False

    def act(self, n1, n2, l1, carry):
        return heuristic_policy(self.cfg, PollingState(n1, n2, l1), carry)


class TabularPolicy:
    """Policy table over the (n1, n2, l1) box; clamps beyond-box lookups."""

    def __init__(self, table: np.ndarray, X1: int, X2: int):
        self.table = np.asarray(table, dtype=int)
        self.X1 = X1
        self.X2 = X2

    def start(self):
        return None

    def act(self, n1, n2, l1, carry):
        a = self.table[
            (min(n1, self.X1) * (self.X2 + 1) + min(n2, self.X2)) * 2 + l1
        ]
        if a < 0:
            raise ValueError(f"policy undefined at state ({n1},{n2},{l1})")
        return int(a), carry


def step_wise_cost(n1, n2, arrivals, dt, c1, c2, beta):
    """Locally discounted holding cost of one embedded transition.

    ``arrivals`` holds (class, time) pairs with times in [0, dt].  Customers
    present at entry accrue cost over the whole interval; each arrival from
    its arrival time to the interval end.
    """
    base = c1 * n1 + c2 * n2
    total = (base / beta) * (1.0 - math.exp(-beta * dt)) if base else 0.0
    edt = math.exp(-beta * dt)
    for cls, ta in arrivals:
        c = c1 if cls == 0 else c2
        total += (c / beta) * (math.exp(-beta * ta) - edt)
    return total


def _draw_arrivals(lam, gen, dt):
    """Arrival times of one class within [0, dt) by exponential gaps."""
    times = []
    if lam <= 0:
        return times
    t = gen.exponential(1.0 / lam)
    while t < dt:
        times.append(t)
        t += gen.exponential(1.0 / lam)
    return times


def _run(cfg: ScenarioConfig, policy, x0, seeds: SeedStream, T: float,
         collect: bool = False):
    lam1, lam2 = cfg.lambda1, cfg.lambda2
    c1, c2, beta = cfg.c1, cfg.c2, cfg.beta
    cap1, cap2 = 10 * cfg.X1, 10 * cfg.X2
    serve_dists = cfg.serve_dists
    switch_dists = cfg.switch_dists
    switch_costs = cfg.switch_costs
    gen_lam = (seeds.generator(TAG_LAMBDA[0]), seeds.generator(TAG_LAMBDA[1]))
    gen_serve = (seeds.generator(TAG_SERVE[0]), seeds.generator(TAG_SERVE[1]))
    gen_switch = (seeds.generator(TAG_SWITCH[0]), seeds.generator(TAG_SWITCH[1]))

    n1, n2, l1 = x0
    t = 0.0
    total = 0.0
    carry = policy.start()
    rec_n1, rec_n2, rec_l1, rec_a, rec_c, rec_dt, rec_t = [], [], [], [], [], [], []
    rec_arr = []

    while t < T:
        a, carry = policy.act(n1, n2, l1, carry)
        if a == IDLE:
            if lam1 <= 0 and lam2 <= 0:
                break  # empty of randomness: idling would last forever
            t1 = gen_lam[0].exponential(1.0 / lam1) if lam1 > 0 else math.inf
            t2 = gen_lam[1].exponential(1.0 / lam2) if lam2 > 0 else math.inf
            if t1 <= t2:
                dt, winner = t1, 0
            else:
                dt, winner = t2, 1
            step = step_wise_cost(n1, n2, (), dt, c1, c2, beta)
            arr = ()
            nxt = (n1 + 1, n2, l1) if winner == 0 else (n1, n2 + 1, l1)
        elif a == SERVE:
            if (n1 if l1 == 0 else n2) <= 0:
                raise ValueError(f"policy serves an empty queue at ({n1},{n2},{l1})")
            dt = serve_dists[l1].sample(gen_serve[l1])
            arr = [(0, ta) for ta in _draw_arrivals(lam1, gen_lam[0], dt)]
            arr += [(1, ta) for ta in _draw_arrivals(lam2, gen_lam[1], dt)]
            arr.sort(key=lambda pair: pair[1])
            step = step_wise_cost(n1, n2, arr, dt, c1, c2, beta)
            a1 = sum(1 for cls, _ in arr if cls == 0)
            a2 = len(arr) - a1
            if l1 == 0:
                nxt = (n1 - 1 + a1, n2 + a2, l1)
            else:
                nxt = (n1 + a1, n2 - 1 + a2, l1)
        elif a == SWITCH:
            dt = switch_dists[l1].sample(gen_switch[l1])
            arr = [(0, ta) for ta in _draw_arrivals(lam1, gen_lam[0], dt)]
            arr += [(1, ta) for ta in _draw_arrivals(lam2, gen_lam[1], dt)]
            arr.sort(key=lambda pair: pair[1])
            step = step_wise_cost(n1, n2, arr, dt, c1, c2, beta)
            step += switch_costs[l1]
            a1 = sum(1 for cls, _ in arr if cls == 0)
            a2 = len(arr) - a1
            nxt = (n1 + a1, n2 + a2, 1 - l1)
        else:
            raise ValueError(f"unknown action {a}")
        total += math.exp(-beta * t) * step
        if collect:
            rec_n1.append(n1)
            rec_n2.append(n2)
            rec_l1.append(l1)
            rec_a.append(a)
            rec_c.append(step)
            rec_dt.append(dt)
            rec_t.append(t)
            rec_arr.append(tuple(arr))
        n1, n2, l1 = nxt
        if n1 > cap1 or n2 > cap2:
            raise QueueOverflowError(
                f"queue exceeded simulator cap at t={t:.2f}: "
                f"({n1},{n2}) vs caps ({cap1},{cap2}); policy-induced instability"
            )
        t += dt

    trace = None
    if collect:
        trace = RolloutTrace(
            n1=np.array(rec_n1, dtype=np.int32),
            n2=np.array(rec_n2, dtype=np.int32),
            l1=np.array(rec_l1, dtype=np.int32),
            action=np.array(rec_a, dtype=np.int32),
            cost=np.array(rec_c),
            dt=np.array(rec_dt),
            t=np.array(rec_t),
            horizon=T,
            arrivals=rec_arr,
        )
    return total, trace


def _draw_initial(cfg: ScenarioConfig, initial_dist, seeds: SeedStream):
    indexer = triple_indexer(cfg)
    if initial_dist is None:
        p = np.full(indexer.size, 1.0 / indexer.size)
    else:
        p = np.asarray(initial_dist, dtype=float)
        if len(p) != indexer.size or p.min() < 0:
            raise ValueError("initial distribution must be a pmf over the state box")
        p = p / p.sum()
    u = seeds.generator(TAG_INIT).random()
    idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
    idx = min(idx, indexer.size - 1)
    return indexer.unflatten(idx)


def rollout(cfg: ScenarioConfig, policy, initial_dist, seed: int, T: float) -> float:
    """One discounted Monte-Carlo rollout from a sampled initial state."""
    if T <= 0:
        raise ValueError("horizon T must be positive")
    seeds = SeedStream(seed)
    x0 = _draw_initial(cfg, initial_dist, seeds)
    total, _ = _run(cfg, policy, x0, seeds, T, collect=False)
    return total


def simulate_trace(cfg: ScenarioConfig, policy, T: float, seed: int = 0,
                   x0=(0, 0, 0)) -> RolloutTrace:
    """Record a full embedded-chain trajectory from a fixed initial state."""
    seeds = SeedStream(seed)
    _, trace = _run(cfg, policy, tuple(x0), seeds, T, collect=True)
    return trace


def _rollout_batch(args):
    cfg, policy, initial_dist, seed_lo, count, T = args
    return [rollout(cfg, policy, initial_dist, seed_lo + k, T) for k in range(count)]


def sample_performance(cfg: ScenarioConfig, policy, initial_dist, seed0: int,
                       T: float, M: int, workers: Optional[int] = None,
                       shuffle_seed: Optional[int] = None) -> np.ndarray:
    """M rollouts on consecutive seeds, returned in shuffled order.

    The shuffle decouples the pairing that common random numbers would
    otherwise induce between two policies sampled from the same seed block;
    pass distinct ``shuffle_seed`` values per policy.
    """
    if M < 2:
        raise ValueError("need at least two rollouts (M >= 2)")
    if workers and workers > 1:
        chunk = max(1, M // (workers * 4))
        jobs = []
        lo = 0
        while lo < M:
            count = min(chunk, M - lo)
            jobs.append((cfg, policy, initial_dist, seed0 + lo, count, T))
            lo += count
        values = []
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for part in pool.map(_rollout_batch, jobs):
                values.extend(part)
        eta = np.array(values)
    else:
        eta = np.array([rollout(cfg, policy, initial_dist, seed0 + k, T)
                        for k in range(M)])
    key = (int(shuffle_seed if shuffle_seed is not None else seed0) << 6) + TAG_SHUFFLE
    rng = np.random.Generator(np.random.Philox(key=key))
    return eta[rng.permutation(M)]


def embedded_stationary(trace: RolloutTrace, burn_in: Optional[int] = None):
    """Empirical stationary distribution of the embedded chain.

    Returns (frequency table keyed by (n1, n2, l1), visits at queue 1,
    visits at queue 2) after discarding the first ``burn_in`` entries
    (default: 10% of the trace).
    """
    K = len(trace)
    B = K // 10 if burn_in is None else int(burn_in)
    if K - B <= 0:
        raise ValueError("trace too short for the requested burn-in")
    n1 = trace.n1[B:]
    n2 = trace.n2[B:]
    l1 = trace.l1[B:]
    count = len(n1)
    freq = {}
    keys, counts = np.unique(
        np.stack([n1, n2, l1], axis=1), axis=0, return_counts=True
    )
    for (a, b, c), m in zip(keys, counts):
        freq[(int(a), int(b), int(c))] = m / count
    visits_q1 = int(np.sum(l1 == 0))
    visits_q2 = int(np.sum(l1 == 1))
    return freq, visits_q1, visits_q2


def action_time_fractions(trace: RolloutTrace, burn_in: Optional[int] = None):
    """Time-weighted fraction spent in each server activity.

    Returns (fractions dict action -> share of time, total time, per-queue
    duration tables T1 and T2 keyed by action).
    """
    K = len(trace)
    B = K // 10 if burn_in is None else int(burn_in)
    if K - B <= 0:
        raise ValueError("trace too short for the requested burn-in")
    act = trace.action[B:]
    dt = trace.dt[B:]
    l1 = trace.l1[B:]
    T1 = {a: float(dt[(l1 == 0) & (act == a)].sum()) for a in (IDLE, SERVE, SWITCH)}
    T2 = {a: float(dt[(l1 == 1) & (act == a)].sum()) for a in (IDLE, SERVE, SWITCH)}
    total = sum(T1.values()) + sum(T2.values())
    if total <= 0:
        raise ValueError("trace carries no elapsed time after burn-in")
    phi = {a: (T1[a] + T2[a]) / total for a in (IDLE, SERVE, SWITCH)}
    return phi, total, T1, T2


def _integer_hull(cycle, grid: int):
    cells = set()
    corners = list(cycle.coordinates)
    kind = getattr(cycle, "kind", None)
    if kind is not None and getattr(kind, "value", kind) == "pure-bow-tie":
        # a pure bow-tie is drawn without its switch-arrival corner: the
        # crossing diagonals run straight between the exhaustion points
        corners = [cycle.c1, cycle.c2, cycle.c4, cycle.c5]
    segments = list(zip(corners, corners[1:] + corners[:1]))
    for (x1a, x2a), (x1b, x2b) in segments:
        for w in np.linspace(0.0, 1.0, max(int(grid), 2)):
            x1 = (1.0 - w) * x1a + w * x1b
            x2 = (1.0 - w) * x2a + w * x2b
            for f1 in (math.floor(x1), math.ceil(x1)):
                for f2 in (math.floor(x2), math.ceil(x2)):
                    cells.add((int(f1), int(f2)))
    return cells


def limit_cycle_occupancy(freq_table: dict, cycle, grid: int = 100) -> float:
    """Share of embedded visits whose queue pair lies on the integerised cycle.

    The queue-marginal frequency sums over both server locations; each cycle
    segment is sampled on ``grid`` points and every floor/ceil combination of
    a sampled point counts as part of the cycle.
    """
    marginal = {}
    for (n1, n2, _), f in freq_table.items():
        marginal[(n1, n2)] = marginal.get((n1, n2), 0.0) + f
    cells = _integer_hull(cycle, grid)
    return float(sum(marginal.get(cell, 0.0) for cell in cells))


def work_fraction(trace: RolloutTrace, cfg: ScenarioConfig,
                  burn_in: Optional[int] = None) -> float:
    """Serve-share-weighted mean service time, the reported work measure.

    Sums phi~(serve | at queue i) * mean(serve_i) over the two queues, where
    phi~ are embedded-chain action shares.  Unlike the raw serving time
    fraction, which equals the utilisation rho for every stable policy, this
    measure exceeds rho and reflects how decisively a policy serves.
    """
    K = len(trace)
    B = K // 10 if burn_in is None else int(burn_in)
    if K - B <= 0:
        raise ValueError("trace too short for the requested burn-in")
    act = trace.action[B:]
    l1 = trace.l1[B:]
    total = 0.0
    for loc, dist in ((0, cfg.serve1), (1, cfg.serve2)):
        at = l1 == loc
        if at.any():
            total += float((act[at] == SERVE).mean()) * dist.mean()
    return total


def overall_stationary(embedded_freqs: np.ndarray, mean_durations: np.ndarray) -> np.ndarray:
    """Convert embedded-chain frequencies to time-stationary probabilities.

    phi_j = embedded_j * E[dt_j] / sum_i embedded_i * E[dt_i].
    """
    embedded_freqs = np.asarray(embedded_freqs, dtype=float)
    mean_durations = np.asarray(mean_durations, dtype=float)
    w = embedded_freqs * mean_durations
    denom = w.sum()
    if denom <= 0:
        raise ValueError("total expected duration must be positive")
    return w / denom
