"""Hierarchical RL fine-tuning: a meta-controller initialized from the
affordance model picks subroutines every k steps; sub-policies start from the
learned subroutines and are fine-tuned with synchronous advantage
actor-critic on PointGoal and AreaGoal tasks."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import NumericalError
from .geodesic import geodesic_field
from .maze import LABEL_TARGET, MazeMap
from .models import ModelBundle, SubroutinePolicy
from .sim import (Action, AgentConfig, N_ACTIONS, Pose, disc_free, observe,
                  step, world_to_cell)
from .util import substream

GOAL_FEATURE_DIM = 3  # distance (m), sin/cos of bearing relative to heading


# ---------------------------------------------------------------------------
# tasks

@dataclass(frozen=True)
class TaskSpec:
    kind: str                 # "pointgoal" | "areagoal"
    reward: str               # "sparse" | "dense"
    map_id: str
    seed: int
    max_episode_steps: int = 60
    goal_radius: float = 0.5
    point_step_range: tuple[int, int] = (10, 17)
    area_step_range: tuple[int, int] = (10, 23)
    goal_pool: int = 50


class TaskEnv:
    """Episode sampler and reward machine for one task on one map.

    Goal geodesic fields are precomputed for a pool of goals so episode
    resets stay cheap. Dense reward adds the per-step geodesic progress
    (previous distance minus current distance, in meters) to the sparse
    terminal reward.
    """

    def __init__(self, task: TaskSpec, map_: MazeMap, cfg: AgentConfig):
        if task.kind not in ("pointgoal", "areagoal"):
            raise ValueError(f"unknown task kind {task.kind!r}")
        if task.reward not in ("sparse", "dense"):
            raise ValueError(f"unknown reward mode {task.reward!r}")
        self.task = task
        self.map = map_
        self.cfg = cfg
        self._fields: list[np.ndarray] = []
        self._goals: list[tuple[int, int]] = []
        self._band_cells: list[np.ndarray] = []
        rng = substream(task.seed, 601)
        step_m = cfg.step_size

        def start_band(fld, lo, hi):
            band = np.argwhere(np.isfinite(fld) & (fld >= lo) & (fld <= hi))
            cs = map_.cell_size
            ok = [rc for rc in band
                  if disc_free(map_, (rc[1] + 0.5) * cs, (rc[0] + 0.5) * cs,
                               cfg.body_radius)]
            return np.array(ok, dtype=np.int64) if ok else np.zeros((0, 2), np.int64)

        if task.kind == "pointgoal":
            lo = task.point_step_range[0] * step_m
            hi = task.point_step_range[1] * step_m
            free = map_.free_cells()
            tries = 0
            while len(self._goals) < task.goal_pool and tries < task.goal_pool * 20:
                tries += 1
                goal = tuple(int(v) for v in free[int(rng.integers(len(free)))])
                fld = geodesic_field(map_, [goal])
                band = start_band(fld, lo, hi)
                if len(band) == 0:
                    continue
                self._goals.append(goal)
                self._fields.append(fld)
                self._band_cells.append(band)
        else:
            targets = [tuple(int(v) for v in rc) for rc in map_.target_cells()]
            if not targets:
                raise ValueError(f"map {map_.map_id} has no target-room cells")
            lo = task.area_step_range[0] * step_m
            hi = task.area_step_range[1] * step_m
            fld = geodesic_field(map_, targets)
            band = start_band(fld, lo, hi)
            if len(band) == 0:
                raise ValueError(f"map {map_.map_id} has no cells {lo:.1f}-{hi:.1f} m "
                                 "from the target room")
            self._goals.append((-1, -1))
            self._fields.append(fld)
            self._band_cells.append(band)
        if not self._goals:
            raise ValueError(f"could not build a goal pool for {task}")

        self._pose: Pose | None = None
        self._gi = 0
        self._steps = 0
        self._prev_dist = 0.0
        self._d0 = 0.0
        self._shaping_sum = 0.0
        self.episode_log: list[dict] = []

    # -- helpers ----------------------------------------------------------
    def _dist(self, pose: Pose) -> float:
        return float(self._fields[self._gi][world_to_cell(self.map, pose.x, pose.y)])

    def _success(self, pose: Pose) -> bool:
        if self.task.kind == "pointgoal":
            return self._dist(pose) <= self.task.goal_radius
        r, c = world_to_cell(self.map, pose.x, pose.y)
        return self.map.room_labels[r, c] == LABEL_TARGET

    def goal_features(self, pose: Pose) -> np.ndarray:
        if self.task.kind == "areagoal":
            return np.zeros(GOAL_FEATURE_DIM, dtype=np.float32)
        gr, gc = self._goals[self._gi]
        cs = self.map.cell_size
        dx = (gc + 0.5) * cs - pose.x
        dy = (gr + 0.5) * cs - pose.y
        bearing = math.atan2(dy, dx) - pose.heading
        return np.array([math.hypot(dx, dy), math.sin(bearing), math.cos(bearing)],
                        dtype=np.float32)

    # -- episode interface -------------------------------------------------
    def reset(self, rng: np.random.Generator):
        """Returns (obs, goal_features, done, reward).

        An episode that starts in the success region terminates immediately
        with reward 1.
        """
        self._gi = int(rng.integers(len(self._goals)))
        band = self._band_cells[self._gi]
        cs = self.map.cell_size
        pose = None
        for _ in range(200):
            r, c = band[int(rng.integers(len(band)))]
            x = (c + 0.5 + rng.uniform(-0.4, 0.4)) * cs
            y = (r + 0.5 + rng.uniform(-0.4, 0.4)) * cs
            if disc_free(self.map, x, y, self.cfg.body_radius):
                pose = Pose(x, y, float(rng.uniform(0.0, 2.0 * math.pi)))
                break
        if pose is None:
            raise RuntimeError(f"could not sample an episode start on {self.map.map_id}")
        self._pose = pose
        self._steps = 0
        self._d0 = self._dist(pose)
        self._prev_dist = self._d0
        self._shaping_sum = 0.0
        done = self._success(pose)
        reward = 1.0 if done else 0.0
        if done:
            self._log_episode(success=True)
        return observe(pose, self.cfg, self.map), self.goal_features(pose), done, reward

    def step_action(self, action: int):
        """Returns (obs, goal_features, reward, done, info)."""
        assert self._pose is not None, "call reset first"
        self._pose, collided = step(self._pose, Action(action), self.cfg, self.map)
        self._steps += 1
        dist = self._dist(self._pose)
        success = self._success(self._pose)
        reward = 1.0 if success else 0.0
        if self.task.reward == "dense":
            shaping = self._prev_dist - dist
            self._shaping_sum += shaping
            reward += shaping
        self._prev_dist = dist
        done = success or self._steps >= self.task.max_episode_steps
        if done:
            self._log_episode(success)
        info = {"success": success, "collided": collided, "distance": dist}
        return (observe(self._pose, self.cfg, self.map),
                self.goal_features(self._pose), reward, done, info)

    def _log_episode(self, success: bool) -> None:
        self.episode_log.append({
            "success": bool(success),
            "steps": self._steps,
            "d0": self._d0,
            "d_final": self._prev_dist if self._steps else self._d0,
            "shaping_sum": self._shaping_sum,
        })


def make_task(kind: str, reward_mode: str, map_: MazeMap, cfg: AgentConfig,
              seed: int, **kwargs) -> TaskEnv:
    task = TaskSpec(kind=kind, reward=reward_mode, map_id=map_.map_id,
                    seed=seed, **kwargs)
    return TaskEnv(task, map_, cfg)


# ---------------------------------------------------------------------------
# hierarchical policy

@dataclass
class HierarchicalPolicy:
    """Meta-controller (MLP over observation and goal features with policy and
    value heads) plus shared-parameter sub-policies indexed by z."""

    meta_store: nn.ParamStore
    subs: SubroutinePolicy
    ray_count: int
    n_subroutines: int
    meta_hidden: int = 64
    meta_interval: int = 10
    scheme: str = "random"
    fine_tune_subs: bool = True

    @property
    def meta_input(self) -> int:
        return self.ray_count + GOAL_FEATURE_DIM

    def meta_forward(self, x: np.ndarray):
        """x is (B, ray_count + goal dim); returns (logits, value, cache)."""
        z1, c1 = nn.linear_forward(self.meta_store, "meta.trunk", x)
        a = np.tanh(z1)
        logits, c2 = nn.linear_forward(self.meta_store, "meta.pi", a)
        value, c3 = nn.linear_forward(self.meta_store, "meta.v", a)
        return logits, value[:, 0], (c1, c2, c3, a)

    def meta_backward(self, cache, dlogits: np.ndarray, dvalue: np.ndarray) -> None:
        c1, c2, c3, a = cache
        da = nn.linear_backward(self.meta_store, "meta.pi", c2, dlogits)
        da += nn.linear_backward(self.meta_store, "meta.v", c3, dvalue[:, None])
        dz1 = da * (1.0 - a * a)
        nn.linear_backward(self.meta_store, "meta.trunk", c1, dz1)


def _fresh_meta_store(ray_count: int, n_subroutines: int, hidden: int,
                      rng: np.random.Generator) -> nn.ParamStore:
    store = nn.ParamStore()
    nn.linear_init(store, "meta.trunk", ray_count + GOAL_FEATURE_DIM, hidden, rng)
    nn.linear_init(store, "meta.pi", hidden, n_subroutines, rng, zero=True)
    nn.linear_init(store, "meta.v", hidden, 1, rng, zero=True)
    return store


def init_hierarchical_policy(scheme: str, bundle: ModelBundle | None,
                             ray_count: int, n_subroutines: int,
                             seed: int = 0, meta_hidden: int = 64,
                             meta_interval: int = 10,
                             fine_tune_subs: bool = True) -> HierarchicalPolicy:
    """Build a hierarchical policy under one of the initialization schemes.

    vmsr: meta trunk and head copy the affordance model (goal-feature input
    columns fresh), sub-policies copy the learned subroutines.
    random: everything fresh.
    encoder_features: meta trunk and the sub-policy candidate-gate input rows
    copy the inverse model's first hidden layer (observation block only),
    heads fresh.
    """
    rng = substream(seed, 611)
    if scheme in ("vmsr", "encoder_features") and bundle is None:
        raise ValueError(f"scheme {scheme!r} needs a model bundle")
    meta = _fresh_meta_store(ray_count, n_subroutines, meta_hidden, rng)
    subs = SubroutinePolicy.create(ray_count, n_subroutines,
                                   hidden=64, horizon=meta_interval,
                                   seed=seed + 17)
    if scheme == "vmsr":
        aff = bundle.affordance.store.params
        if aff["affordance.l0.w"].shape != (ray_count, meta_hidden):
            raise ValueError("affordance trunk shape does not match the meta trunk")
        meta.params["meta.trunk.w"][:ray_count] = aff["affordance.l0.w"]
        meta.params["meta.trunk.b"][...] = aff["affordance.l0.b"]
        meta.params["meta.pi.w"][...] = aff["affordance.l1.w"]
        meta.params["meta.pi.b"][...] = aff["affordance.l1.b"]
        for name, p in bundle.policy.store.params.items():
            subs.store.params[name][...] = p
    elif scheme == "encoder_features":
        inv = bundle.inverse.store.params
        if inv["inverse.l0.w"].shape[1] != meta_hidden:
            raise ValueError("inverse first layer does not match the meta trunk width")
        meta.params["meta.trunk.w"][:ray_count] = inv["inverse.l0.w"][:ray_count]
        meta.params["meta.trunk.b"][...] = inv["inverse.l0.b"]
        hs = subs.gru.hidden_size
        if inv["inverse.l0.w"].shape[1] == hs:
            subs.store.params["policy.gru.wx"][:ray_count, 2 * hs:] = \
                inv["inverse.l0.w"][:ray_count]
    elif scheme != "random":
        raise ValueError(f"unknown initialization scheme {scheme!r}")
    return HierarchicalPolicy(meta_store=meta, subs=subs, ray_count=ray_count,
                              n_subroutines=n_subroutines, meta_hidden=meta_hidden,
                              meta_interval=meta_interval, scheme=scheme,
                              fine_tune_subs=fine_tune_subs)


# ---------------------------------------------------------------------------
# A2C

@dataclass
class A2CConfig:
    gamma: float = 0.99
    lr: float = 0.001
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    update_windows: int = 8
    record_every: int = 2000
    success_window: int = 50


@dataclass
class LearningCurve:
    scheme: str
    seed: int
    steps: list[int] = field(default_factory=list)
    reward: list[float] = field(default_factory=list)
    success: list[float] = field(default_factory=list)

    def smoothed_reward(self) -> list[float]:
        out, best = [], -math.inf
        for r in self.reward:
            best = max(best, r)
            out.append(best)
        return out

    def steps_to_success(self, threshold: float) -> float:
        for s, v in zip(self.steps, self.success):
            if v >= threshold:
                return float(s)
        return math.inf


def meta_policy_gradient(policy: HierarchicalPolicy, cache, z: int,
                         advantage: float, target: float, value: float,
                         probs: np.ndarray, cfg: A2CConfig, scale: float) -> None:
    """Accumulate one meta transition's gradient contributions."""
    onehot = nn.one_hot(np.array([z]), policy.n_subroutines).astype(np.float64)
    dlogits = advantage * (probs[None, :] - onehot)
    logp = np.log(np.clip(probs, 1e-12, None))
    entropy = -(probs * logp).sum()
    dlogits += cfg.entropy_coef * probs[None, :] * (logp[None, :] + entropy)
    dvalue = cfg.value_coef * np.array([value - target])
    policy.meta_backward(cache, (dlogits * scale).astype(np.float32),
                         (dvalue * scale).astype(np.float32))


def _sub_step_train(subs: SubroutinePolicy, obs: np.ndarray, z_onehot: np.ndarray,
                    h: np.ndarray):
    x = np.concatenate([obs[None, :], z_onehot], axis=-1)
    h2, gru_cache = nn.gru_step(subs.gru, subs.store, "policy.gru", x, h)
    logits, lin_cache = nn.linear_forward(subs.store, "policy.head", h2)
    return logits[0], h2, (gru_cache, lin_cache)


def train_a2c(policy: HierarchicalPolicy, env: TaskEnv, budget_steps: int,
              cfg: A2CConfig = A2CConfig(), seed: int = 0) -> LearningCurve:
    """Synchronous A2C at the meta level with sub-policy fine-tuning.

    The meta transition reward is the discounted sum over its k-step window;
    sub-policies receive the window advantage on their own log-probabilities.
    """
    rng = substream(seed, 621)
    curve = LearningCurve(scheme=policy.scheme, seed=seed)
    recent_reward: deque[float] = deque(maxlen=cfg.success_window)
    recent_success: deque[float] = deque(maxlen=cfg.success_window)
    k = policy.meta_interval
    gamma = cfg.gamma

    env_steps = 0
    next_record = cfg.record_every
    buffer: list[dict] = []
    obs, feats, done, reward0 = env.reset(rng)
    if done:
        recent_reward.append(reward0)
        recent_success.append(1.0)
    episode_reward = reward0

    def flush(final_state: np.ndarray | None) -> None:
        nonlocal buffer
        if not buffer:
            return
        policy.meta_store.zero_grads()
        policy.subs.store.zero_grads()
        if final_state is not None:
            _, v_last, _ = policy.meta_forward(final_state[None].astype(np.float32))
            v_boot = float(v_last[0])
        else:
            v_boot = 0.0
        scale = 1.0 / len(buffer)
        for j, tr in enumerate(buffer):
            if tr["done"]:
                v_next = 0.0
            elif j + 1 < len(buffer):
                v_next = tr["v_next_cached"]
            else:
                v_next = v_boot
            target = tr["reward"] + tr["gamma_pow"] * v_next
            adv = target - tr["value"]
            if not math.isfinite(adv):
                raise NumericalError("non-finite advantage in A2C update")
            meta_policy_gradient(policy, tr["cache"], tr["z"], adv, target,
                                 tr["value"], tr["probs"], cfg, scale)
            if policy.fine_tune_subs:
                dh = np.zeros((1, policy.subs.gru.hidden_size), dtype=np.float32)
                for step_rec in reversed(tr["sub_steps"]):
                    gru_cache, lin_cache, probs_t, a_t = step_rec
                    onehot = nn.one_hot(np.array([a_t]), N_ACTIONS).astype(np.float64)
                    dlog = adv * (probs_t[None, :] - onehot) * scale
                    dh = dh + nn.linear_backward(policy.subs.store, "policy.head",
                                                 lin_cache, dlog.astype(np.float32))
                    _, dh = nn.gru_step_backward(policy.subs.gru, policy.subs.store,
                                                 "policy.gru", gru_cache, dh)
        nn.adam_step(policy.meta_store, lr=cfg.lr)
        if policy.fine_tune_subs:
            nn.adam_step(policy.subs.store, lr=cfg.lr)
        buffer = []

    while env_steps < budget_steps:
        state = np.concatenate([obs, feats]).astype(np.float32)
        logits, value, cache = policy.meta_forward(state[None])
        probs = nn.softmax(logits[0].astype(np.float64))
        z = int(rng.choice(policy.n_subroutines, p=probs / probs.sum()))
        z_onehot = nn.one_hot(np.array([z]), policy.n_subroutines)

        h = policy.subs.init_hidden(1)
        window_reward = 0.0
        sub_steps = []
        done = False
        t = 0
        for t in range(k):
            sub_logits, h, caches = _sub_step_train(policy.subs, obs, z_onehot, h)
            p = nn.softmax(sub_logits.astype(np.float64))
            a = int(rng.choice(N_ACTIONS, p=p / p.sum()))
            obs, feats, r, done, _ = env.step_action(a)
            sub_steps.append((caches[0], caches[1], p, a))
            window_reward += (gamma ** t) * r
            episode_reward += r
            env_steps += 1
            if done or env_steps >= budget_steps:
                break
        buffer.append({
            "cache": cache, "z": z, "probs": probs, "value": float(value[0]),
            "reward": window_reward, "gamma_pow": gamma ** (t + 1),
            "done": done, "sub_steps": sub_steps, "v_next_cached": 0.0,
        })
        if len(buffer) >= 2:
            buffer[-2]["v_next_cached"] = float(value[0]) if not buffer[-2]["done"] else 0.0

        if done:
            recent_reward.append(episode_reward)
            recent_success.append(1.0 if env.episode_log[-1]["success"] else 0.0)
            episode_reward = 0.0
            obs, feats, d0, r0 = env.reset(rng)
            episode_reward = r0
            if d0:
                recent_reward.append(r0)
                recent_success.append(1.0)

        if len(buffer) >= cfg.update_windows or env_steps >= budget_steps:
            nxt = None if done else np.concatenate([obs, feats])
            flush(nxt)

        if env_steps >= next_record:
            curve.steps.append(env_steps)
            curve.reward.append(float(np.mean(recent_reward)) if recent_reward else 0.0)
            curve.success.append(float(np.mean(recent_success)) if recent_success else 0.0)
            next_record += cfg.record_every
    return curve


def compare_sample_efficiency(curves: dict[str, list[LearningCurve]],
                              success_threshold: float = 0.8,
                              reference: str = "vmsr") -> dict[str, dict]:
    """Median environment steps to the success threshold, per scheme, with
    ratios relative to the reference scheme. Unreached thresholds report inf
    steps and a "not reached" label."""
    table: dict[str, dict] = {}
    medians = {}
    for scheme, cs in curves.items():
        med = float(np.median([c.steps_to_success(success_threshold) for c in cs]))
        medians[scheme] = med
    ref = medians.get(reference, math.inf)
    for scheme, med in medians.items():
        ratio = med / ref if math.isfinite(med) and math.isfinite(ref) and ref > 0 else math.inf
        table[scheme] = {
            "median_steps": med if math.isfinite(med) else None,
            "reached": math.isfinite(med),
            "ratio_vs_reference": ratio if math.isfinite(ratio) else None,
            "label": f"{med:.0f}" if math.isfinite(med) else "not reached",
        }
    return table


# ---------------------------------------------------------------------------
# flat (monolithic) RL

@dataclass
class FlatPolicy:
    """Single policy over observations only; no subroutine conditioning."""

    gru: nn.GruSpec
    store: nn.ParamStore
    scheme: str = "random"

    @classmethod
    def create(cls, ray_count: int, hidden: int = 64, seed: int = 0,
               scheme: str = "random") -> "FlatPolicy":
        store = nn.ParamStore()
        rng = substream(seed, 631)
        spec = nn.GruSpec(ray_count, hidden)
        nn.gru_init(spec, store, "flat.gru", rng)
        nn.linear_init(store, "flat.pi", hidden, N_ACTIONS, rng, zero=True)
        nn.linear_init(store, "flat.v", hidden, 1, rng, zero=True)
        return cls(gru=spec, store=store, scheme=scheme)

    @classmethod
    def from_single_subroutine(cls, policy: SubroutinePolicy, seed: int = 0) -> "FlatPolicy":
        """Fold a 1-subroutine policy's constant z input into the biases."""
        if policy.n_subroutines != 1:
            raise ValueError("needs a policy trained with exactly one subroutine")
        ray_count = policy.gru.input_size - 1
        flat = cls.create(ray_count, policy.gru.hidden_size, seed=seed, scheme="vmsr_single_subroutine")
        src = policy.store.params
        flat.store.params["flat.gru.wx"][...] = src["policy.gru.wx"][:ray_count]
        flat.store.params["flat.gru.wh"][...] = src["policy.gru.wh"]
        flat.store.params["flat.gru.bx"][...] = src["policy.gru.bx"] + src["policy.gru.wx"][ray_count]
        flat.store.params["flat.gru.bh"][...] = src["policy.gru.bh"]
        flat.store.params["flat.pi.w"][...] = src["policy.head.w"]
        flat.store.params["flat.pi.b"][...] = src["policy.head.b"]
        return flat

    def step_train(self, obs: np.ndarray, h: np.ndarray):
        h2, gru_cache = nn.gru_step(self.gru, self.store, "flat.gru", obs[None, :], h)
        logits, pi_cache = nn.linear_forward(self.store, "flat.pi", h2)
        value, v_cache = nn.linear_forward(self.store, "flat.v", h2)
        return logits[0], float(value[0, 0]), h2, (gru_cache, pi_cache, v_cache)


def train_flat_rl(policy: FlatPolicy, env: TaskEnv, budget_steps: int,
                  cfg: A2CConfig = A2CConfig(), seed: int = 0,
                  window: int = 10) -> LearningCurve:
    """Flat A2C with n-step returns over fixed windows (truncated BPTT)."""
    rng = substream(seed, 641)
    curve = LearningCurve(scheme=policy.scheme, seed=seed)
    recent_reward: deque[float] = deque(maxlen=cfg.success_window)
    recent_success: deque[float] = deque(maxlen=cfg.success_window)
    gamma = cfg.gamma
    env_steps = 0
    next_record = cfg.record_every
    obs, feats, done, r0 = env.reset(rng)
    if done:
        recent_reward.append(r0)
        recent_success.append(1.0)
    episode_reward = r0
    h = np.zeros((1, policy.gru.hidden_size), dtype=np.float32)

    while env_steps < budget_steps:
        records = []
        done = False
        for _ in range(window):
            logits, value, h, caches = policy.step_train(obs, h)
            p = nn.softmax(logits.astype(np.float64))
            a = int(rng.choice(N_ACTIONS, p=p / p.sum()))
            obs, feats, r, done, _ = env.step_action(a)
            episode_reward += r
            env_steps += 1
            records.append({"caches": caches, "probs": p, "action": a,
                            "value": value, "reward": r})
            if done or env_steps >= budget_steps:
                break
        if done:
            v_boot = 0.0
        else:
            h_peek, _ = nn.gru_step(policy.gru, policy.store, "flat.gru", obs[None, :], h)
            v_peek, _ = nn.linear_forward(policy.store, "flat.v", h_peek)
            v_boot = float(v_peek[0, 0])

        policy.store.zero_grads()
        g = v_boot
        dh = np.zeros((1, policy.gru.hidden_size), dtype=np.float32)
        scale = 1.0 / len(records)
        for rec in reversed(records):
            g = rec["reward"] + gamma * g
            adv = g - rec["value"]
            gru_cache, pi_cache, v_cache = rec["caches"]
            onehot = nn.one_hot(np.array([rec["action"]]), N_ACTIONS).astype(np.float64)
            probs = rec["probs"]
            logp = np.log(np.clip(probs, 1e-12, None))
            entropy = -(probs * logp).sum()
            dlogits = adv * (probs[None, :] - onehot)
            dlogits += cfg.entropy_coef * probs[None, :] * (logp[None, :] + entropy)
            dh = dh + nn.linear_backward(policy.store, "flat.pi", pi_cache,
                                         (dlogits * scale).astype(np.float32))
            dv = cfg.value_coef * (rec["value"] - g) * scale
            dh = dh + nn.linear_backward(policy.store, "flat.v", v_cache,
                                         np.array([[dv]], dtype=np.float32))
            _, dh = nn.gru_step_backward(policy.gru, policy.store, "flat.gru",
                                         gru_cache, dh)
        nn.adam_step(policy.store, lr=cfg.lr)

        if done:
            recent_reward.append(episode_reward)
            recent_success.append(1.0 if env.episode_log[-1]["success"] else 0.0)
            episode_reward = 0.0
            obs, feats, d0, r0 = env.reset(rng)
            episode_reward = r0
            if d0:
                recent_reward.append(r0)
                recent_success.append(1.0)
            h = np.zeros((1, policy.gru.hidden_size), dtype=np.float32)

        if env_steps >= next_record:
            curve.steps.append(env_steps)
            curve.reward.append(float(np.mean(recent_reward)) if recent_reward else 0.0)
            curve.success.append(float(np.mean(recent_success)) if recent_success else 0.0)
            next_record += cfg.record_every
    return curve
