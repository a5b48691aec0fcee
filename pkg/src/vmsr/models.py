"""Model wrappers: inverse dynamics, trajectory encoder, latent-conditioned
subroutine policy, and the affordance classifier, plus bundle persistence."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import nn
from .nn import GruSpec, MlpSpec, ParamStore
from .sim import N_ACTIONS
from .util import substream


@dataclass
class InverseModel:
    """Predicts the agent action linking two consecutive observations."""

    spec: MlpSpec
    store: ParamStore

    @classmethod
    def create(cls, ray_count: int, hidden: tuple[int, ...] = (64, 64),
               seed: int = 0) -> "InverseModel":
        spec = MlpSpec((2 * ray_count,) + tuple(hidden) + (N_ACTIONS,))
        store = ParamStore()
        nn.mlp_init(spec, store, "inverse", substream(seed, 201))
        return cls(spec=spec, store=store)

    def logits(self, pairs: np.ndarray) -> np.ndarray:
        out, _ = nn.mlp_forward(self.spec, self.store, "inverse", pairs)
        return out

    def predict(self, obs_t: np.ndarray, obs_next: np.ndarray) -> np.ndarray:
        pairs = np.concatenate([obs_t, obs_next], axis=-1)
        return self.logits(pairs).argmax(axis=-1)


@dataclass
class TrajectoryEncoder:
    """Recurrent encoder of a pseudo-action sequence into subroutine logits."""

    gru: GruSpec
    n_subroutines: int
    store: ParamStore

    @classmethod
    def create(cls, n_subroutines: int, hidden: int = 32, seed: int = 0) -> "TrajectoryEncoder":
        gru = GruSpec(N_ACTIONS, hidden)
        store = ParamStore()
        rng = substream(seed, 202)
        nn.gru_init(gru, store, "encoder.gru", rng)
        # the head must not start at zero: the latent has to carry some signal
        # about the sequence from step one or the policy learns to ignore it
        nn.linear_init(store, "encoder.head", hidden, n_subroutines, rng, zero=False)
        return cls(gru=gru, n_subroutines=n_subroutines, store=store)

    def encode(self, actions_onehot: np.ndarray) -> np.ndarray:
        """(B, L, n_actions) one-hot sequence -> (B, N) logits (forward only)."""
        b = actions_onehot.shape[0]
        h = np.zeros((b, self.gru.hidden_size), dtype=np.float32)
        for t in range(actions_onehot.shape[1]):
            h, _ = nn.gru_step(self.gru, self.store, "encoder.gru",
                               actions_onehot[:, t], h)
        out, _ = nn.linear_forward(self.store, "encoder.head", h)
        return out


@dataclass
class SubroutinePolicy:
    """Closed-loop policy conditioned on a one-hot subroutine id.

    One shared parameter set; the id enters as extra input columns.
    """

    gru: GruSpec
    n_subroutines: int
    horizon: int
    store: ParamStore

    @classmethod
    def create(cls, ray_count: int, n_subroutines: int = 4, hidden: int = 64,
               horizon: int = 10, seed: int = 0) -> "SubroutinePolicy":
        gru = GruSpec(ray_count + n_subroutines, hidden)
        store = ParamStore()
        rng = substream(seed, 203)
        nn.gru_init(gru, store, "policy.gru", rng)
        nn.linear_init(store, "policy.head", hidden, N_ACTIONS, rng, zero=True)
        return cls(gru=gru, n_subroutines=n_subroutines, horizon=horizon, store=store)

    def init_hidden(self, batch: int = 1) -> np.ndarray:
        return np.zeros((batch, self.gru.hidden_size), dtype=np.float32)

    def step(self, obs: np.ndarray, z_onehot: np.ndarray, h: np.ndarray):
        """Returns (action logits, new hidden); inputs are batched rows."""
        x = np.concatenate([obs, z_onehot], axis=-1)
        h2, _ = nn.gru_step(self.gru, self.store, "policy.gru", x, h)
        logits, _ = nn.linear_forward(self.store, "policy.head", h2)
        return logits, h2


@dataclass
class AffordanceModel:
    """Maps one observation to a distribution over applicable subroutines."""

    spec: MlpSpec
    n_subroutines: int
    store: ParamStore

    @classmethod
    def create(cls, ray_count: int, n_subroutines: int = 4, hidden: int = 64,
               seed: int = 0) -> "AffordanceModel":
        spec = MlpSpec((ray_count, hidden, n_subroutines))
        store = ParamStore()
        nn.mlp_init(spec, store, "affordance", substream(seed, 204))
        return cls(spec=spec, n_subroutines=n_subroutines, store=store)

    def logits(self, obs: np.ndarray) -> np.ndarray:
        single = obs.ndim == 1
        x = obs[None, :] if single else obs
        out, _ = nn.mlp_forward(self.spec, self.store, "affordance", x)
        return out[0] if single else out

    def probs(self, obs: np.ndarray) -> np.ndarray:
        return nn.softmax(self.logits(obs))


@dataclass
class ModelBundle:
    """Everything the downstream stages need, saved as one checkpoint.

    Parameter names carry the reserved prefixes inverse.*, encoder.*,
    policy.* and affordance.*.
    """

    inverse: InverseModel
    encoder: TrajectoryEncoder
    policy: SubroutinePolicy
    affordance: AffordanceModel

    def arch_signature(self) -> dict:
        return {
            "inverse_widths": list(self.inverse.spec.widths),
            "encoder_hidden": self.encoder.gru.hidden_size,
            "policy_input": self.policy.gru.input_size,
            "policy_hidden": self.policy.gru.hidden_size,
            "n_subroutines": self.policy.n_subroutines,
            "horizon": self.policy.horizon,
            "affordance_widths": list(self.affordance.spec.widths),
        }

    def save(self, path: str | Path) -> None:
        params: dict[str, np.ndarray] = {}
        for model in (self.inverse, self.encoder, self.policy, self.affordance):
            params.update(model.store.params)
        nn.save_checkpoint(path, params)

    @classmethod
    def load(cls, path: str | Path, ray_count: int, n_subroutines: int,
             inverse_hidden: tuple[int, ...] = (64, 64), encoder_hidden: int = 32,
             policy_hidden: int = 64, horizon: int = 10) -> "ModelBundle":
        values = nn.load_checkpoint(path)
        bundle = cls(
            inverse=InverseModel.create(ray_count, inverse_hidden),
            encoder=TrajectoryEncoder.create(n_subroutines, encoder_hidden),
            policy=SubroutinePolicy.create(ray_count, n_subroutines,
                                           policy_hidden, horizon),
            affordance=AffordanceModel.create(ray_count, n_subroutines),
        )
        for model in (bundle.inverse, bundle.encoder, bundle.policy, bundle.affordance):
            model.store.load_values(values)
        return bundle
