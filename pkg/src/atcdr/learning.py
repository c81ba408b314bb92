"""Q-learning on top of the conflict environment.

A trainer rolls episodes with an epsilon-greedy joint policy, stores whole
multi-agent transitions in a prioritized replay buffer, and fits the graph
Q-network by stochastic gradient descent against a slowly tracking target
copy. The adjacency recorded at the first of the two timesteps is reused
when bootstrapping from the second, so each sample is coherent under one
fixed neighbor assignment; next-step edge vectors are rebuilt against those
same slots by the environment.

Two schedules are supported: "AllN" trains one run over the whole scenario
list, "MSeqN" re-trains stage by stage (one scenario batch per stage), each
stage starting from the previous parameters with a fresh buffer and a fresh
exploration schedule.
"""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .detection import EventClass
from .dgn import (
    Checkpoint,
    DgnConfig,
    Sgd,
    backward,
    forward,
    init_params,
    save_checkpoint,
    soft_update,
)
from .env import ConflictEnv, NO_ACTION, N_ACTIONS
from .scenario import Scenario

NM_M = 1852.0


@dataclass(frozen=True)
class TrainConfig:
    gamma: float = 0.96
    batch_size: int = 256
    buffer_capacity: int = 200_000
    beta_target: float = 0.01
    epsilon_start: float = 0.6
    epsilon_min: float = 0.001
    epsilon_decay: float = 0.996
    train_steps_per_episode: int = 80
    warmup_episodes: int = 200
    explore_episodes: int = 6000
    exploit_episodes: int = 2000
    mseq_explore_episodes: int = 3000
    mseq_exploit_episodes: int = 1000
    per_alpha: float = 0.6
    per_eps: float = 0.05
    per_beta_start: float = 0.4
    per_beta_end: float = 1.0
    per_beta_step: float = 0.0025
    lr: float = 1e-4
    momentum: float = 0.0
    net: DgnConfig = field(default_factory=DgnConfig)

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.epsilon_min <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_min <= epsilon_start <= 1")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError("epsilon_decay must be in (0, 1]")
        for name in ("batch_size", "buffer_capacity",
                     "train_steps_per_episode"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("warmup_episodes", "explore_episodes",
                     "exploit_episodes", "mseq_explore_episodes",
                     "mseq_exploit_episodes"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not 0.0 <= self.per_alpha <= 1.0:
            raise ValueError("per_alpha must be in [0, 1]")
        if self.per_eps <= 0:
            raise ValueError("per_eps must be positive")
        if not 0.0 <= self.per_beta_start <= self.per_beta_end <= 1.0:
            raise ValueError("PER beta must anneal within [0, 1]")
        if self.per_beta_step < 0 or self.lr <= 0 or self.momentum < 0:
            raise ValueError("bad optimizer settings")


@dataclass
class Transition:
    """One whole-snapshot sample: every agent active at time t."""
    obs: np.ndarray  # (N, 24)
    edges: np.ndarray  # (N, K+1, 11)
    adj: np.ndarray  # (N, K+1, N)
    actions: np.ndarray  # (N,) int, the actions actually applied
    rewards: np.ndarray  # (N,)
    next_obs: np.ndarray  # (N, 24); zero rows for agents gone at t+1
    next_edges: np.ndarray  # (N, K+1, 11), built against the t adjacency
    agent_done: np.ndarray  # (N,) bool: episode end or agent exited

    @property
    def n_agents(self) -> int:
        return self.obs.shape[0]


# -- exploration ---------------------------------------------------------


def epsilon_greedy(q_row: np.ndarray, epsilon: float,
                   rng: np.random.Generator) -> int:
    """Argmax with probability 1-epsilon, otherwise uniform."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must be in [0, 1]")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(len(q_row)))
    return int(np.argmax(q_row))


def decay_epsilon(epsilon: float, cfg: TrainConfig) -> float:
    return max(cfg.epsilon_min, epsilon * cfg.epsilon_decay)


# -- prioritized replay ----------------------------------------------------


class _SumTree:
    """Fixed-size binary sum tree over leaf weights."""

    def __init__(self, capacity: int):
        self.leaves = 1
        while self.leaves < capacity:
            self.leaves *= 2
        self.vals = np.zeros(2 * self.leaves)

    def set(self, idx: int, value: float) -> None:
        i = idx + self.leaves
        self.vals[i] = value
        i //= 2
        while i >= 1:
            self.vals[i] = self.vals[2 * i] + self.vals[2 * i + 1]
            i //= 2

    def get(self, idx: int) -> float:
        return float(self.vals[idx + self.leaves])

    @property
    def total(self) -> float:
        return float(self.vals[1])

    def find(self, mass: float) -> int:
        """Leaf index whose cumulative interval contains mass."""
        i = 1
        while i < self.leaves:
            left = self.vals[2 * i]
            if mass < left or self.vals[2 * i + 1] <= 0.0:
                i = 2 * i
            else:
                mass -= left
                i = 2 * i + 1
        return i - self.leaves


class PrioritizedBuffer:
    """Ring buffer with proportional prioritized sampling.

    Raw priorities are (|TD| + per_eps); the tree stores priority**alpha so
    the sampling probability of item i is p_i^alpha / sum p^alpha. New items
    enter at the running maximum raw priority.
    """

    def __init__(self, capacity: int, alpha: float = 0.6,
                 per_eps: float = 0.05):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.alpha = alpha
        self.per_eps = per_eps
        self._items: list[Transition | None] = [None] * capacity
        self._tree = _SumTree(capacity)
        self._count = 0
        self._pos = 0
        self._max_p = 1.0

    def __len__(self) -> int:
        return self._count

    def add(self, item: Transition) -> None:
        self._items[self._pos] = item
        self._tree.set(self._pos, self._max_p ** self.alpha)
        self._pos = (self._pos + 1) % self.capacity
        self._count = min(self._count + 1, self.capacity)

    def sample(self, size: int, beta: float, rng: np.random.Generator):
        """Stratified proportional draw.

        Returns (indices, items, weights) with importance weights
        w_i = (P(i) * len)^-beta normalized by the batch maximum.
        """
        if size < 1:
            raise ValueError("sample size must be >= 1")
        if self._count < size:
            raise ValueError(
                f"buffer holds {self._count} items, cannot sample {size}")
        total = self._tree.total
        seg = total / size
        indices = np.empty(size, dtype=int)
        for k in range(size):
            mass = (k + rng.random()) * seg
            idx = min(self._tree.find(mass), self._count - 1)
            indices[k] = idx
        probs = np.array([self._tree.get(i) for i in indices]) / total
        weights = (probs * self._count) ** (-beta)
        weights /= weights.max()
        items = [self._items[i] for i in indices]
        return indices, items, weights

    def update(self, indices, td_errors) -> None:
        """Re-prioritize sampled items from their fresh TD errors."""
        for idx, err in zip(indices, td_errors):
            p = abs(float(err)) + self.per_eps
            self._max_p = max(self._max_p, p)
            self._tree.set(int(idx), p ** self.alpha)


# -- loss -------------------------------------------------------------------


@dataclass
class QLossResult:
    loss: float
    td_errors: np.ndarray  # (S,) mean |TD| per transition
    grads: dict[str, np.ndarray]


def q_loss(batch: list[Transition], online: dict, target: dict,
           cfg: TrainConfig, weights: np.ndarray | None = None) -> QLossResult:
    """Importance-weighted squared TD error, averaged per transition over
    its agents; y = r + gamma * max_a Q_target under the time-t adjacency,
    y = r for terminal agents. Returns exact gradients for the online net."""
    if not batch:
        raise ValueError("empty batch")
    size = len(batch)
    if weights is None:
        weights = np.ones(size)
    net = cfg.net

    grads = {name: np.zeros_like(p) for name, p in online.items()}
    td_errors = np.zeros(size)
    loss = 0.0
    by_n: dict[int, list[int]] = {}
    for k, tr in enumerate(batch):
        by_n.setdefault(tr.n_agents, []).append(k)

    for n, ks in by_n.items():
        O = np.stack([batch[k].obs for k in ks])
        E = np.stack([batch[k].edges for k in ks])
        C = np.stack([batch[k].adj for k in ks])
        On = np.stack([batch[k].next_obs for k in ks])
        En = np.stack([batch[k].next_edges for k in ks])
        acts = np.stack([batch[k].actions for k in ks])
        rews = np.stack([batch[k].rewards for k in ks])
        done = np.stack([batch[k].agent_done for k in ks])
        w = weights[ks]

        q_next = forward(target, net, On, En, C).q.max(axis=-1)
        y = rews + cfg.gamma * np.where(done, 0.0, q_next)
        res = forward(online, net, O, E, C, want_cache=True)
        b_idx, n_idx = np.meshgrid(np.arange(len(ks)), np.arange(n),
                                   indexing="ij")
        q_taken = res.q[b_idx, n_idx, acts]
        delta = y - q_taken

        loss += float((w * (delta ** 2).mean(axis=1)).sum())
        td_errors[ks] = np.abs(delta).mean(axis=1)

        d_q = np.zeros_like(res.q)
        d_q[b_idx, n_idx, acts] = -2.0 * w[:, None] * delta / (size * n)
        part = backward(online, net, res.cache, d_q)
        for name in grads:
            grads[name] += part[name]

    return QLossResult(loss=loss / size, td_errors=td_errors, grads=grads)


# -- rollouts ----------------------------------------------------------------


def _stack_view(view):
    order = view.agent_order
    O = np.stack([view.obs[f] for f in order])
    E = np.stack([view.edges[f] for f in order])
    C = np.stack([view.adjacency[f] for f in order])
    return order, O, E, C


@dataclass
class CurveRow:
    episode: int
    mean_reward: float
    actions: int
    alerts: int
    losses: int


def write_curves(path, rows: list[CurveRow]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["episode", "mean_reward", "actions", "alerts",
                      "losses"])
        for r in rows:
            out.writerow([r.episode, f"{r.mean_reward:.6f}", r.actions,
                          r.alerts, r.losses])


def _count_events(events) -> tuple[int, int]:
    alerts = sum(1 for e in events if e.event_class is EventClass.ALERT)
    losses = sum(1 for e in events if e.event_class is EventClass.LOSS)
    return alerts, losses


def run_episode(scenario: Scenario, online: dict, net: DgnConfig,
                epsilon: float, rng: np.random.Generator,
                buffer: PrioritizedBuffer | None = None) -> CurveRow:
    """One rollout under the epsilon-greedy joint policy; optionally feeds
    the replay buffer with whole-snapshot transitions."""
    env = ConflictEnv(scenario, k_neighbors=net.k_neighbors)
    view = env.reset()
    step_means: list[float] = []
    n_actions = alerts = losses = 0
    while not view.done:
        if view.agent_order:
            order, O, E, C = _stack_view(view)
            q = forward(online, net, O[None], E[None], C[None]).q[0]
            chosen = {fid: epsilon_greedy(q[i], epsilon, rng)
                      for i, fid in enumerate(order)}
            nbr = view.neighbor_ids
        else:
            order, chosen, nbr = [], {}, {}
        nxt = env.step(chosen)
        if order:
            applied = nxt.info["applied_actions"]
            acts = np.array([applied[f] for f in order], dtype=int)
            rews = np.array([nxt.rewards[f] for f in order])
            n_obs = np.zeros_like(O)
            n_edges = np.zeros_like(E)
            done = np.zeros(len(order), dtype=bool)
            for i, fid in enumerate(order):
                if fid in nxt.obs:
                    n_obs[i] = nxt.obs[fid]
                    done[i] = nxt.done
                else:
                    done[i] = True
                n_edges[i] = env.edges_for(fid, nbr[fid])
            if buffer is not None:
                buffer.add(Transition(obs=O, edges=E, adj=C, actions=acts,
                                      rewards=rews, next_obs=n_obs,
                                      next_edges=n_edges, agent_done=done))
            step_means.append(float(rews.mean()))
            n_actions += int(np.count_nonzero(acts != NO_ACTION))
        a, l = _count_events(nxt.events)
        alerts += a
        losses += l
        view = nxt
    mean_reward = float(np.mean(step_means)) if step_means else 0.0
    return CurveRow(episode=-1, mean_reward=mean_reward, actions=n_actions,
                    alerts=alerts, losses=losses)


# -- training ----------------------------------------------------------------


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    curves: list[CurveRow]


def _as_stages(scenarios, pattern: str) -> list[list[Scenario]]:
    if pattern not in ("AllN", "MSeqN"):
        raise ValueError(f"unknown training pattern {pattern!r}")
    if not scenarios:
        raise ValueError("scenario list is empty")
    if pattern == "AllN":
        flat = []
        for s in scenarios:
            flat.extend(s) if isinstance(s, (list, tuple)) else flat.append(s)
        return [flat]
    if isinstance(scenarios[0], (list, tuple)):
        return [list(s) for s in scenarios]
    return [[s] for s in scenarios]  # one stage per scenario


def train(scenarios, pattern: str, cfg: TrainConfig, seed: int,
          checkpoint_dir=None) -> TrainResult:
    """Run the full schedule and return the final checkpoint plus the
    per-episode learning curves. With checkpoint_dir set, a stage_<k>.ckpt
    snapshot is written after each stage and final.ckpt at the end."""
    stages = _as_stages(scenarios, pattern)
    if pattern == "AllN":
        n_explore, n_exploit = cfg.explore_episodes, cfg.exploit_episodes
    else:
        n_explore, n_exploit = (cfg.mseq_explore_episodes,
                                cfg.mseq_exploit_episodes)

    net = cfg.net
    online = init_params(net, seed)
    target = {k: v.copy() for k, v in online.items()}
    opt = Sgd(lr=cfg.lr, momentum=cfg.momentum)
    rng = np.random.default_rng(seed)
    curves: list[CurveRow] = []
    grad_steps = 0
    per_beta = cfg.per_beta_start

    for stage_idx, stage in enumerate(stages, start=1):
        buffer = PrioritizedBuffer(cfg.buffer_capacity, alpha=cfg.per_alpha,
                                   per_eps=cfg.per_eps)
        epsilon = cfg.epsilon_start
        for ep in range(n_explore + n_exploit):
            exploit = ep >= n_explore
            eps_now = cfg.epsilon_min if exploit else epsilon
            scen = stage[ep % len(stage)]
            row = run_episode(scen, online, net, eps_now, rng, buffer)
            row.episode = len(curves)
            curves.append(row)
            if not exploit:
                epsilon = decay_epsilon(epsilon, cfg)

            if ep + 1 >= cfg.warmup_episodes and \
                    len(buffer) >= cfg.batch_size:
                for _ in range(cfg.train_steps_per_episode):
                    idx, items, w = buffer.sample(cfg.batch_size, per_beta,
                                                  rng)
                    res = q_loss(items, online, target, cfg, w)
                    opt.apply(online, res.grads)
                    soft_update(online, target, cfg.beta_target)
                    buffer.update(idx, res.td_errors)
                    per_beta = min(cfg.per_beta_end,
                                   per_beta + cfg.per_beta_step)
                    grad_steps += 1
        if checkpoint_dir is not None:
            save_checkpoint(os.path.join(checkpoint_dir,
                                         f"stage_{stage_idx}.ckpt"),
                            online, target, net, grad_steps, opt)

    ckpt = Checkpoint(online=online, target=target, config=net,
                      step=grad_steps, optimizer=opt)
    if checkpoint_dir is not None:
        save_checkpoint(os.path.join(checkpoint_dir, "final.ckpt"),
                        online, target, net, grad_steps, opt)
    return TrainResult(checkpoint=ckpt, curves=curves)


# -- episode logs ------------------------------------------------------------


def episode_record(scenario_id: str, t: float, fid: str, state,
                   action: int, reward: float, events) -> dict:
    """One playback-log line: the state an agent decided in at time t, the
    action it took, the reward received, and the post-step event counts the
    agent is involved in."""
    counts = {"conflict": 0, "alert": 0, "loss": 0}
    for ev in events:
        if ev.involves(fid):
            counts[ev.event_class.value] += 1
    return {
        "scenario": scenario_id,
        "t": t,
        "flight": fid,
        "state": {"x_m": state.x, "y_m": state.y, "alt_ft": state.alt,
                  "chi_deg": math.degrees(state.chi),
                  "h_speed_mps": state.h_speed,
                  "v_speed_ftps": state.v_speed},
        "action": int(action),
        "reward": float(reward),
        "events": counts,
    }


def episode_log_line(rec: dict) -> str:
    """Canonical byte-stable serialization of one episode-log record."""
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def write_episode_log(path, records: list[dict]) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(episode_log_line(rec) + "\n")


def read_episode_log(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


# -- evaluation -------------------------------------------------------------


@dataclass
class EpisodeStats:
    scenario_id: str
    alerts: int
    losses: int
    actions: int
    mean_reward: float


@dataclass
class EvalMetrics:
    conflicts_resolved_pct: float
    avg_resolution_actions: float
    avg_additional_nm: float
    episodes: list[EpisodeStats]

    def to_jsonable(self) -> dict:
        return {
            "conflicts_resolved_pct": self.conflicts_resolved_pct,
            "avg_resolution_actions": self.avg_resolution_actions,
            "avg_additional_nm": self.avg_additional_nm,
            "episodes": [{"scenario": e.scenario_id, "alerts": e.alerts,
                          "losses": e.losses, "actions": e.actions,
                          "mean_reward": e.mean_reward}
                         for e in self.episodes],
        }


def _greedy_rollout(scenario: Scenario, params: dict, net: DgnConfig,
                    log: list[dict] | None = None):
    """Greedy policy rollout with resolution bookkeeping. When ``log`` is a
    list, one episode record per step per agent is appended to it."""
    env = ConflictEnv(scenario, k_neighbors=net.k_neighbors)
    view = env.reset()
    initial = {ev.pair for ev in view.events
               if ev.event_class is not EventClass.LOSS}
    lost: set = set()
    step_means: list[float] = []
    n_actions = alerts = losses = 0
    acted: set[str] = set()
    while not view.done:
        chosen = {}
        if view.agent_order:
            order, O, E, C = _stack_view(view)
            q = forward(params, net, O[None], E[None], C[None]).q[0]
            chosen = {fid: int(np.argmax(q[i]))
                      for i, fid in enumerate(order)}
        t_decide = env.t
        states = env.active_states()
        view = env.step(chosen)
        applied = view.info.get("applied_actions", {})
        if log is not None:
            for fid in sorted(applied):
                log.append(episode_record(
                    scenario.id, t_decide, fid, states[fid], applied[fid],
                    view.rewards[fid], view.events))
        for fid, a in applied.items():
            if a != NO_ACTION:
                n_actions += 1
                acted.add(fid)
        if applied:
            step_means.append(float(np.mean(
                [view.rewards[f] for f in applied])))
        a, l = _count_events(view.events)
        alerts += a
        losses += l
        for ev in view.events:
            if ev.event_class is EventClass.LOSS:
                lost.add(ev.pair)
    remaining = {ev.pair for ev in view.events}
    resolved = {p for p in initial if p not in lost and p not in remaining}
    flown = {fid: env.track_length_m(fid)
             for fid in (f.state.flight_id for f in scenario.flights)}
    stats = EpisodeStats(
        scenario_id=scenario.id, alerts=alerts, losses=losses,
        actions=n_actions,
        mean_reward=float(np.mean(step_means)) if step_means else 0.0)
    return initial, resolved, acted, flown, stats


def _baseline_track_lengths(scenario: Scenario) -> dict[str, float]:
    env = ConflictEnv(scenario)
    env.reset()
    while not env.done:
        env.step({})
    return {f.state.flight_id: env.track_length_m(f.state.flight_id)
            for f in scenario.flights}


def evaluate(checkpoint: Checkpoint, scenarios: list[Scenario],
             episode_log_path=None) -> EvalMetrics:
    """Greedy-policy metrics over a scenario set.

    Resolved percent counts initial (t=0, non-loss) conflict pairs that
    never reach a loss and are gone by episode end. Additional NM compares
    each maneuvered flight's flown track against its own all-plan-following
    rollout of the same scenario. ``episode_log_path`` writes a per-step
    per-agent playback log covering every scenario.
    """
    if not scenarios:
        raise ValueError("scenario list is empty")
    net = checkpoint.config
    total_initial = 0
    total_resolved = 0
    extra_nm: list[float] = []
    episodes: list[EpisodeStats] = []
    log: list[dict] | None = [] if episode_log_path is not None else None
    for scen in scenarios:
        initial, resolved, acted, flown, stats = _greedy_rollout(
            scen, checkpoint.online, net, log=log)
        total_initial += len(initial)
        total_resolved += len(resolved)
        episodes.append(stats)
        if acted:
            base = _baseline_track_lengths(scen)
            extra_nm.extend((flown[f] - base[f]) / NM_M for f in sorted(acted))
    if episode_log_path is not None:
        write_episode_log(episode_log_path, log)
    pct = 100.0 * total_resolved / total_initial if total_initial else 100.0
    return EvalMetrics(
        conflicts_resolved_pct=pct,
        avg_resolution_actions=float(np.mean(
            [e.actions for e in episodes])),
        avg_additional_nm=float(np.mean(extra_nm)) if extra_nm else 0.0,
        episodes=episodes)
