"""Subroutine learning pipeline: random-interaction collection, inverse-model
training, pseudo-labeling of expert videos, clip slicing, and joint training
of the trajectory encoder, latent-conditioned policy, and affordance model."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import nn
from .errors import NumericalError
from .expert import VideoClip
from .maze import MazeMap
from .models import (AffordanceModel, InverseModel, SubroutinePolicy,
                     TrajectoryEncoder)
from .sim import (Action, AgentConfig, N_ACTIONS, Pose, observe, observe_many,
                  poses_to_array, sample_free_pose, step)
from .util import substream

INTERACTION_ACTIONS = (Action.ROTATE_LEFT, Action.ROTATE_RIGHT, Action.FORWARD)


# ---------------------------------------------------------------------------
# interaction data

@dataclass
class InteractionDataset:
    """(o_t, a_t, o_{t+1}) triplets from random walks, grouped by start id."""

    obs_t: np.ndarray      # (n, ray_count) float32
    actions: np.ndarray    # (n,) int8
    obs_next: np.ndarray   # (n, ray_count) float32
    start_ids: np.ndarray  # (n,) int32
    map_ids: list[str]
    seed: int

    def __len__(self) -> int:
        return len(self.actions)

    def save(self, path: str | Path) -> None:
        np.savez_compressed(path, obs_t=self.obs_t, actions=self.actions,
                            obs_next=self.obs_next, start_ids=self.start_ids,
                            map_ids=np.array(self.map_ids), seed=self.seed)

    @classmethod
    def load(cls, path: str | Path) -> "InteractionDataset":
        z = np.load(path, allow_pickle=False)
        return cls(obs_t=z["obs_t"], actions=z["actions"], obs_next=z["obs_next"],
                   start_ids=z["start_ids"], map_ids=[str(s) for s in z["map_ids"]],
                   seed=int(z["seed"]))


def collect_interaction_data(maps: list[MazeMap], n_starts: int = 1500,
                             steps_per_start: int = 30,
                             cfg: AgentConfig = AgentConfig(),
                             seed: int = 0) -> InteractionDataset:
    """Random-action rollouts recorded as observation/action triplets.

    Actions are sampled uniformly from rotate-left/rotate-right/forward; the
    action sequence does not depend on observations, so each episode's frames
    are rendered in one ray batch after simulating the poses.
    """
    if not maps:
        raise ValueError("need at least one map")
    obs_t, obs_next, actions, start_ids = [], [], [], []
    for i in range(n_starts):
        rng = substream(seed, 101, i)
        map_ = maps[int(rng.integers(len(maps)))]
        pose = sample_free_pose(map_, rng, cfg.body_radius)
        acts = rng.choice([int(a) for a in INTERACTION_ACTIONS], size=steps_per_start)
        poses = [pose]
        for a in acts:
            pose = step(pose, Action(int(a)), cfg, map_).pose
            poses.append(pose)
        frames = observe_many(poses_to_array(poses), cfg, map_)
        obs_t.append(frames[:-1])
        obs_next.append(frames[1:])
        actions.append(acts.astype(np.int8))
        start_ids.append(np.full(steps_per_start, i, dtype=np.int32))
    return InteractionDataset(
        obs_t=np.concatenate(obs_t),
        actions=np.concatenate(actions),
        obs_next=np.concatenate(obs_next),
        start_ids=np.concatenate(start_ids),
        map_ids=[m.map_id for m in maps],
        seed=seed,
    )


def inverse_accuracy(model: InverseModel, data: InteractionDataset) -> float:
    pred = model.predict(data.obs_t, data.obs_next)
    return float((pred == data.actions).mean())


def train_inverse_model(data: InteractionDataset, ray_count: int,
                        hidden: tuple[int, ...] = (64, 64), batch: int = 64,
                        lr: float = 0.001, epochs: int = 8,
                        val_frac: float = 0.1, seed: int = 0):
    """Cross-entropy training with a 90/10 split by start location.

    Returns (model, report) where report carries the held-out accuracy and
    per-epoch loss curve. Raises NumericalError if the loss goes non-finite.
    """
    if len(data) == 0:
        raise ValueError("empty interaction dataset")
    rng = substream(seed, 111)
    starts = np.unique(data.start_ids)
    starts = starts[rng.permutation(len(starts))]
    n_val = max(1, int(round(val_frac * len(starts)))) if len(starts) > 1 else 0
    val_starts = set(starts[:n_val].tolist())
    val_mask = np.isin(data.start_ids, list(val_starts)) if n_val else np.zeros(len(data), bool)
    train_idx = np.nonzero(~val_mask)[0]
    val_idx = np.nonzero(val_mask)[0]

    model = InverseModel.create(ray_count, hidden, seed=seed)
    pairs = np.concatenate([data.obs_t, data.obs_next], axis=1)
    losses = []
    for epoch in range(epochs):
        order = train_idx[rng.permutation(len(train_idx))]
        epoch_loss = 0.0
        n_batches = 0
        for lo in range(0, len(order), batch):
            idx = order[lo:lo + batch]
            model.store.zero_grads()
            logits, cache = nn.mlp_forward(model.spec, model.store, "inverse", pairs[idx])
            per, dlogits = nn.cross_entropy(logits, data.actions[idx].astype(np.int64))
            loss = float(per.mean())
            if not np.isfinite(loss):
                raise NumericalError(f"inverse model loss {loss} at epoch {epoch}")
            nn.mlp_backward(model.spec, model.store, "inverse", cache, dlogits / len(idx))
            nn.adam_step(model.store, lr=lr)
            epoch_loss += loss
            n_batches += 1
        losses.append(epoch_loss / max(1, n_batches))

    report = {"loss_curve": losses, "n_train": int(len(train_idx)), "n_val": int(len(val_idx))}
    if len(val_idx):
        pred = model.logits(pairs[val_idx]).argmax(axis=-1)
        report["val_accuracy"] = float((pred == data.actions[val_idx]).mean())
    return model, report


# ---------------------------------------------------------------------------
# pseudo-labeling and slicing

def pseudo_label(model: InverseModel, video: VideoClip) -> np.ndarray:
    """Argmax inverse-model actions for each consecutive frame pair, (L-1,)."""
    obs = video.observations
    if obs.shape[0] < 2:
        raise ValueError("video must have at least 2 frames")
    return model.predict(obs[:-1], obs[1:]).astype(np.int8)


@dataclass
class PseudoLabeledClip:
    observations: np.ndarray   # (T, ray_count) float32
    pseudo_actions: np.ndarray  # (T-1,) int8
    source: int = -1

    def __post_init__(self) -> None:
        if len(self.pseudo_actions) != len(self.observations) - 1:
            raise ValueError("need exactly frames - 1 pseudo actions")


def slice_clips(observations: np.ndarray, pseudo_actions: np.ndarray,
                clip_len: int = 10, stride: int = 5,
                source: int = -1) -> list[PseudoLabeledClip]:
    """Sliding windows over a labeled video; empty list when it is too short."""
    length = observations.shape[0]
    if length < clip_len:
        return []
    clips = []
    for k in range((length - clip_len) // stride + 1):
        lo = k * stride
        clips.append(PseudoLabeledClip(
            observations=observations[lo:lo + clip_len],
            pseudo_actions=pseudo_actions[lo:lo + clip_len - 1],
            source=source,
        ))
    return clips


def stack_clips(clips: list[PseudoLabeledClip]) -> tuple[np.ndarray, np.ndarray]:
    obs = np.stack([c.observations for c in clips]).astype(np.float32)
    acts = np.stack([c.pseudo_actions for c in clips]).astype(np.int64)
    return obs, acts


# ---------------------------------------------------------------------------
# joint subroutine / affordance training

@dataclass
class SubroutineTrainConfig:
    n_subroutines: int = 4
    batch: int = 64
    lr: float = 0.001
    lr_end: float = 0.0002  # linear decay target over training
    epochs: int = 10
    tau_start: float = 1.0
    tau_end: float = 0.5
    affordance_weight: float = 1.0
    encoder_hidden: int = 32
    policy_hidden: int = 64
    seed: int = 0
    collapse_frac: float = 0.95
    collapse_epochs: int = 3


def joint_batch(encoder: TrajectoryEncoder, policy: SubroutinePolicy,
                affordance: AffordanceModel, obs: np.ndarray, acts: np.ndarray,
                tau: float, rng: np.random.Generator,
                affordance_weight: float = 1.0, hard: bool = True,
                noise: np.ndarray | None = None,
                backward: bool = True) -> dict:
    """Forward (and optionally backward) pass of the joint objective.

    obs is (B, T, R), acts is (B, T-1). The policy consumes the hard one-hot
    sample when hard=True (training) or the relaxed sample when hard=False
    (used by the finite-difference check); the backward pass is identical in
    both modes, which is exactly the straight-through estimator.
    """
    b, t_frames, _ = obs.shape
    t_act = t_frames - 1
    dtype = encoder.store.dtype
    onehot = nn.one_hot(acts, N_ACTIONS, dtype=dtype)

    # encode the action sequence
    h_e = np.zeros((b, encoder.gru.hidden_size), dtype=dtype)
    enc_caches = []
    for t in range(t_act):
        h_e, c = nn.gru_step(encoder.gru, encoder.store, "encoder.gru", onehot[:, t], h_e)
        enc_caches.append(c)
    e_logits, head_cache = nn.linear_forward(encoder.store, "encoder.head", h_e)

    sample = nn.gumbel_softmax(e_logits, tau, rng, noise=noise)
    z_in = sample.hard if hard else sample.soft
    z_target = sample.hard.argmax(axis=-1)  # constant wrt parameters

    # unroll policy over the clip
    h_p = np.zeros((b, policy.gru.hidden_size), dtype=dtype)
    pol_caches = []
    policy_loss = 0.0
    dlogits_steps = []
    for t in range(t_act):
        x = np.concatenate([obs[:, t].astype(dtype), z_in], axis=-1)
        h_p, gc = nn.gru_step(policy.gru, policy.store, "policy.gru", x, h_p)
        logits, lc = nn.linear_forward(policy.store, "policy.head", h_p)
        per, dlog = nn.cross_entropy(logits, acts[:, t])
        policy_loss += float(per.mean())
        pol_caches.append((gc, lc))
        dlogits_steps.append(dlog / b)

    # affordance trained against the sampled id, stop-gradient on the target
    aff_logits, aff_cache = nn.mlp_forward(affordance.spec, affordance.store,
                                           "affordance", obs[:, 0].astype(dtype))
    aff_per, aff_dlog = nn.cross_entropy(aff_logits, z_target)
    affordance_loss = float(aff_per.mean())

    out = {
        "policy_loss": policy_loss,
        "affordance_loss": affordance_loss,
        "total_loss": policy_loss + affordance_weight * affordance_loss,
        "z_hard": sample.hard,
    }
    if not backward:
        return out

    nn.mlp_backward(affordance.spec, affordance.store, "affordance", aff_cache,
                    affordance_weight * aff_dlog / b)

    dz = np.zeros_like(z_in)
    dh = np.zeros((b, policy.gru.hidden_size), dtype=dtype)
    for t in reversed(range(t_act)):
        gc, lc = pol_caches[t]
        dh = dh + nn.linear_backward(policy.store, "policy.head", lc, dlogits_steps[t])
        dx, dh = nn.gru_step_backward(policy.gru, policy.store, "policy.gru", gc, dh)
        dz += dx[:, -policy.n_subroutines:]

    de = nn.gumbel_softmax_backward(sample, dz)
    dh_e = nn.linear_backward(encoder.store, "encoder.head", head_cache, de)
    for c in reversed(enc_caches):
        _, dh_e = nn.gru_step_backward(encoder.gru, encoder.store, "encoder.gru", c, dh_e)
    return out


def train_subroutines(clips: list[PseudoLabeledClip], ray_count: int,
                      cfg: SubroutineTrainConfig):
    """Joint training of encoder, policy and affordance model.

    Returns (encoder, policy, affordance, report). The report records loss
    curves, the final subroutine usage histogram and any latent-collapse
    warnings (one latent absorbing > collapse_frac of clips for
    collapse_epochs consecutive epochs).
    """
    if not clips:
        raise ValueError("no clips to train on")
    horizon = clips[0].observations.shape[0]
    obs, acts = stack_clips(clips)
    n = len(clips)

    encoder = TrajectoryEncoder.create(cfg.n_subroutines, cfg.encoder_hidden, seed=cfg.seed)
    policy = SubroutinePolicy.create(ray_count, cfg.n_subroutines,
                                     cfg.policy_hidden, horizon, seed=cfg.seed)
    affordance = AffordanceModel.create(ray_count, cfg.n_subroutines, seed=cfg.seed)

    rng = substream(cfg.seed, 121)
    gumbel_rng = substream(cfg.seed, 122)
    total_steps = max(1, cfg.epochs * ((n + cfg.batch - 1) // cfg.batch))
    global_step = 0
    policy_curve, affordance_curve = [], []
    collapse_run = 0
    collapse_warnings: list[dict] = []
    loss_at_init = None

    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        ep_pol, ep_aff, n_batches = 0.0, 0.0, 0
        z_counts = np.zeros(cfg.n_subroutines)
        for lo in range(0, n, cfg.batch):
            idx = order[lo:lo + cfg.batch]
            progress = global_step / total_steps
            tau = cfg.tau_start + (cfg.tau_end - cfg.tau_start) * progress
            lr = cfg.lr + (cfg.lr_end - cfg.lr) * progress
            for store in (encoder.store, policy.store, affordance.store):
                store.zero_grads()
            out = joint_batch(encoder, policy, affordance, obs[idx], acts[idx],
                              tau, gumbel_rng, cfg.affordance_weight, hard=True)
            if loss_at_init is None:
                loss_at_init = {"policy_loss": out["policy_loss"],
                                "affordance_loss": out["affordance_loss"]}
            if not np.isfinite(out["total_loss"]):
                raise NumericalError(f"subroutine loss {out['total_loss']} at step {global_step}")
            for store in (encoder.store, policy.store, affordance.store):
                nn.adam_step(store, lr=lr)
            z_counts += out["z_hard"].sum(axis=0)
            ep_pol += out["policy_loss"]
            ep_aff += out["affordance_loss"]
            n_batches += 1
            global_step += 1
        policy_curve.append(ep_pol / n_batches)
        affordance_curve.append(ep_aff / n_batches)
        usage = z_counts / max(1.0, z_counts.sum())
        if usage.max() > cfg.collapse_frac:
            collapse_run += 1
            if collapse_run >= cfg.collapse_epochs:
                event = {"epoch": epoch, "usage": usage.tolist()}
                collapse_warnings.append(event)
                warnings.warn(f"latent collapse: one subroutine holds "
                              f"{usage.max():.1%} of clips at epoch {epoch}")
        else:
            collapse_run = 0

    report = {
        "policy_loss_curve": policy_curve,
        "affordance_loss_curve": affordance_curve,
        "loss_at_init": loss_at_init,
        "z_usage": (z_counts / max(1.0, z_counts.sum())).tolist(),
        "collapse_warnings": collapse_warnings,
        "n_clips": n,
        "horizon": horizon,
    }
    return encoder, policy, affordance, report


def predict_affordance(model: AffordanceModel, obs: np.ndarray) -> np.ndarray:
    """Probability that each subroutine applies to the observation."""
    return model.probs(obs)


# ---------------------------------------------------------------------------
# closed-loop execution

@dataclass
class Trajectory:
    poses: np.ndarray          # (steps + 1, 3)
    actions: np.ndarray        # (steps,) int8
    collisions: np.ndarray     # (steps,) bool
    observations: np.ndarray | None = None   # (steps, ray_count)
    subroutine_ids: np.ndarray | None = None  # (steps,) int8

    @property
    def n_steps(self) -> int:
        return len(self.actions)

    @staticmethod
    def concat(parts: list["Trajectory"]) -> "Trajectory":
        if not parts:
            raise ValueError("nothing to concatenate")
        poses = np.concatenate([parts[0].poses] + [p.poses[1:] for p in parts[1:]])
        cat = lambda key: np.concatenate([getattr(p, key) for p in parts])
        obs = None
        if parts[0].observations is not None:
            obs = cat("observations")
        subs = None
        if parts[0].subroutine_ids is not None:
            subs = cat("subroutine_ids")
        return Trajectory(poses=poses, actions=cat("actions"),
                          collisions=cat("collisions"), observations=obs,
                          subroutine_ids=subs)


def rollout_subroutine(policy: SubroutinePolicy, z: int, map_: MazeMap,
                       pose: Pose, cfg: AgentConfig, k: int = 10,
                       mode: str = "sample",
                       rng: np.random.Generator | None = None,
                       first_obs: np.ndarray | None = None) -> Trajectory:
    """Execute subroutine z for k closed-loop steps from a fresh hidden state."""
    if not (0 <= z < policy.n_subroutines):
        raise ValueError(f"subroutine id {z} out of range")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs an rng")
    z_onehot = nn.one_hot(np.array([z]), policy.n_subroutines)
    h = policy.init_hidden(1)
    poses = [(pose.x, pose.y, pose.heading)]
    actions, collisions, observations = [], [], []
    for t in range(k):
        obs = first_obs if (t == 0 and first_obs is not None) else observe(pose, cfg, map_)
        logits, h = policy.step(obs[None, :], z_onehot, h)
        if mode == "greedy":
            a = int(logits[0].argmax())
        else:
            p = nn.softmax(logits[0].astype(np.float64))
            a = int(rng.choice(N_ACTIONS, p=p / p.sum()))
        pose, collided = step(pose, Action(a), cfg, map_)
        observations.append(obs)
        actions.append(a)
        collisions.append(collided)
        poses.append((pose.x, pose.y, pose.heading))
    return Trajectory(
        poses=np.array(poses, dtype=np.float64),
        actions=np.array(actions, dtype=np.int8),
        collisions=np.array(collisions, dtype=bool),
        observations=np.array(observations, dtype=np.float32) if observations else np.zeros((0, cfg.ray_count), np.float32),
        subroutine_ids=np.full(len(actions), z, dtype=np.int8),
    )
