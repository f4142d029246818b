"""DDPG sizing agent: sequence actor, MLP critic, replay, target nets.

The actor mirrors the circuit structure: global observation features are
projected and concatenated to each component's local features, an encoder
GRU reads the component sequence (signal-propagation order), and a
decoder GRU emits each component's parameter group in turn, feeding the
previously emitted group back in as input, so earlier components shape
the choices for later ones.  A shared dense+tanh head maps each decoder
state to a parameter group, keeping every output in [-1, 1].

The critic is a plain MLP over (flattened observation, normalized
action).  Exploration adds truncated-uniform noise around the actor
output, a_j ~ U(max(a_j - sigma, -1), min(a_j + sigma, 1)), with sigma
decaying linearly; optional parameter noise perturbs a copy of the actor
weights with adaptive scale.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from . import nn
from .util import substream

__all__ = [
    "SlotSpec",
    "ActorLayout",
    "Actor",
    "Critic",
    "ReplayBuffer",
    "NoiseConfig",
    "AgentConfig",
    "DDPGAgent",
    "soft_update",
    "adapt_parameter_noise",
]

N_LOCAL_FEATURES = 8


@dataclass(frozen=True)
class SlotSpec:
    """One decode position: its observation row and parameter group."""

    local_row: int
    param_indices: tuple[int, ...]


@dataclass(frozen=True)
class ActorLayout:
    """Observation and action geometry the networks are built around."""

    global_dim: int
    n_local_rows: int
    slots: tuple[SlotSpec, ...]
    local_dim: int = N_LOCAL_FEATURES

    def __post_init__(self):
        seen: set[int] = set()
        for slot in self.slots:
            for idx in slot.param_indices:
                if idx in seen:
                    raise ValueError(f"parameter index {idx} owned by two slots")
                seen.add(idx)
        if seen and seen != set(range(len(seen))):
            raise ValueError("slot param_indices must cover 0..n-1")

    @property
    def n_params(self) -> int:
        return sum(len(s.param_indices) for s in self.slots)

    @property
    def group_max(self) -> int:
        return max((len(s.param_indices) for s in self.slots), default=1) or 1

    @property
    def obs_dim(self) -> int:
        return self.global_dim + self.n_local_rows * self.local_dim

    def emit_order(self) -> np.ndarray:
        """Parameter index at each emitted position."""
        return np.array(
            [i for s in self.slots for i in s.param_indices], dtype=int
        )

    @classmethod
    def from_env(cls, env) -> "ActorLayout":
        slots = tuple(
            SlotSpec(local_row=s.local_row, param_indices=s.param_indices)
            for s in env.sequence
        )
        return cls(global_dim=env.global_dim, n_local_rows=env.n_local_rows, slots=slots)

    def split_obs(self, obs_flat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        obs_flat = np.asarray(obs_flat, dtype=float)
        g = obs_flat[..., : self.global_dim]
        loc = obs_flat[..., self.global_dim :].reshape(
            obs_flat.shape[:-1] + (self.n_local_rows, self.local_dim)
        )
        return g, loc


class Actor:
    """Encoder-decoder policy network; emits actions in parameter order."""

    def __init__(self, layout: ActorLayout, rng: np.random.Generator,
                 hidden: int = 64, proj: int = 32):
        self.layout = layout
        self.hidden = hidden
        self.proj = proj
        enc_in = layout.local_dim + proj
        self.weights: dict[str, np.ndarray] = {}
        self.weights.update(nn.init_dense(rng, proj, layout.global_dim, "proj"))
        self.weights.update(nn.init_gru(rng, hidden, enc_in, "enc"))
        self.weights.update(nn.init_gru(rng, hidden, layout.group_max, "dec"))
        self.weights.update(nn.init_dense(rng, layout.group_max, hidden, "out"))
        self._emit_order = layout.emit_order()

    def clone(self) -> "Actor":
        other = object.__new__(Actor)
        other.layout = self.layout
        other.hidden = self.hidden
        other.proj = self.proj
        other.weights = {k: v.copy() for k, v in self.weights.items()}
        other._emit_order = self._emit_order
        return other

    def forward(self, global_b: np.ndarray, locals_b: np.ndarray,
                weights: Optional[Mapping[str, np.ndarray]] = None):
        """Batched forward pass; returns (action (B, n), cache).

        Actions are returned in parameter order (the emit permutation is
        applied internally).
        """
        w = self.weights if weights is None else weights
        layout = self.layout
        B = global_b.shape[0]
        gmax = layout.group_max

        p, proj_cache = nn.dense_forward(w["proj.W"], w["proj.b"], global_b, "tanh")
        enc_w = nn.gru_view(w, "enc")
        dec_w = nn.gru_view(w, "dec")

        h = np.zeros((B, self.hidden))
        enc_caches = []
        zero_loc = np.zeros((B, layout.local_dim))
        for slot in layout.slots:
            loc = locals_b[:, slot.local_row, :] if slot.local_row >= 0 else zero_loc
            x = np.concatenate([loc, p], axis=1)
            h, cache = nn.gru_step(enc_w, h, x)
            enc_caches.append(cache)

        hd = h
        prev = np.zeros((B, gmax))
        dec_caches = []
        head_caches = []
        outs = []
        pieces = []
        for slot in layout.slots:
            hd, dcache = nn.gru_step(dec_w, hd, prev)
            o, hcache = nn.dense_forward(w["out.W"], w["out.b"], hd, "tanh")
            size = len(slot.param_indices)
            pieces.append(o[:, :size])
            prev = np.zeros((B, gmax))
            if size:
                prev[:, :size] = o[:, :size]
            dec_caches.append(dcache)
            head_caches.append(hcache)
            outs.append(o)
        emitted = (
            np.concatenate(pieces, axis=1) if pieces else np.zeros((B, 0))
        )
        action = np.empty_like(emitted)
        action[:, self._emit_order] = emitted
        cache = (proj_cache, enc_caches, dec_caches, head_caches, outs, p, B)
        return action, cache

    def backward(self, cache, d_action: np.ndarray) -> dict[str, np.ndarray]:
        """Gradients for every weight given d(loss)/d(action)."""
        proj_cache, enc_caches, dec_caches, head_caches, outs, p, B = cache
        layout = self.layout
        w = self.weights
        gmax = layout.group_max
        d_emitted = d_action[:, self._emit_order]

        grads = {key: np.zeros_like(val) for key, val in w.items()}
        sizes = [len(s.param_indices) for s in layout.slots]
        offsets = np.cumsum([0] + sizes)

        dhd = np.zeros((B, self.hidden))
        dprev_next = np.zeros((B, gmax))
        for i in reversed(range(len(layout.slots))):
            size = sizes[i]
            do = np.zeros((B, gmax))
            if size:
                do[:, :size] += d_emitted[:, offsets[i] : offsets[i + 1]]
                do[:, :size] += dprev_next[:, :size]
            dWo, dbo, dhd_head = nn.dense_backward(head_caches[i], do)
            grads["out.W"] += dWo
            grads["out.b"] += dbo
            dhd = dhd + dhd_head
            g_dec, dhd, dprev_next = nn.gru_step_backward(dec_caches[i], dhd)
            for key in nn.GRU_KEYS:
                grads[f"dec.{key}"] += g_dec[key]

        dh = dhd
        dp = np.zeros_like(p)
        for i in reversed(range(len(layout.slots))):
            g_enc, dh, dx = nn.gru_step_backward(enc_caches[i], dh)
            for key in nn.GRU_KEYS:
                grads[f"enc.{key}"] += g_enc[key]
            dp += dx[:, layout.local_dim :]
        dWp, dbp, _ = nn.dense_backward(proj_cache, dp)
        grads["proj.W"] += dWp
        grads["proj.b"] += dbp
        return grads

    def act_single(self, obs_flat: np.ndarray,
                   weights: Optional[Mapping[str, np.ndarray]] = None) -> np.ndarray:
        g, loc = self.layout.split_obs(np.asarray(obs_flat, dtype=float))
        action, _ = self.forward(g[None, :], loc[None, :, :], weights)
        return action[0]


class Critic:
    """Q(observation, action) MLP with relu hidden layers."""

    def __init__(self, obs_dim: int, act_dim: int, rng: np.random.Generator,
                 hidden: Sequence[int] = (128, 128)):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = tuple(hidden)
        self.weights: dict[str, np.ndarray] = {}
        n_in = obs_dim + act_dim
        for i, width in enumerate(self.hidden):
            self.weights.update(nn.init_dense(rng, width, n_in, f"l{i}"))
            n_in = width
        self.weights.update(nn.init_dense(rng, 1, n_in, "q"))

    def clone(self) -> "Critic":
        other = object.__new__(Critic)
        other.obs_dim = self.obs_dim
        other.act_dim = self.act_dim
        other.hidden = self.hidden
        other.weights = {k: v.copy() for k, v in self.weights.items()}
        return other

    def forward(self, obs: np.ndarray, action: np.ndarray,
                weights: Optional[Mapping[str, np.ndarray]] = None):
        w = self.weights if weights is None else weights
        x = np.concatenate([obs, action], axis=1)
        caches = []
        for i in range(len(self.hidden)):
            x, cache = nn.dense_forward(w[f"l{i}.W"], w[f"l{i}.b"], x, "relu")
            caches.append(cache)
        q, qcache = nn.dense_forward(w["q.W"], w["q.b"], x, "identity")
        caches.append(qcache)
        return q[:, 0], caches

    def backward(self, caches, dq: np.ndarray):
        """Returns (grads, d_obs, d_action) for upstream use."""
        grads: dict[str, np.ndarray] = {}
        dx = dq[:, None]
        dW, db, dx = nn.dense_backward(caches[-1], dx)
        grads["q.W"] = dW
        grads["q.b"] = db
        for i in reversed(range(len(self.hidden))):
            dW, db, dx = nn.dense_backward(caches[i], dx)
            grads[f"l{i}.W"] = dW
            grads[f"l{i}.b"] = db
        return grads, dx[:, : self.obs_dim], dx[:, self.obs_dim :]


class ReplayBuffer:
    """Fixed-capacity FIFO transition store with uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, act_dim: int):
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, act_dim))
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.dones = np.zeros(capacity)
        self._next = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def add(self, obs, action, reward, next_obs, done):
        i = self._next
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.dones[i] = float(done)
        self._next = (i + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)

    def sample(self, rng: np.random.Generator, batch_size: int):
        if self._size < batch_size:
            raise ValueError(f"buffer holds {self._size} < batch {batch_size}")
        idx = rng.integers(0, self._size, size=batch_size)
        return {
            "obs": self.obs[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_obs": self.next_obs[idx],
            "dones": self.dones[idx],
        }


@dataclass
class NoiseConfig:
    """Truncated-uniform action noise schedule plus parameter noise."""

    sigma_start: float = 1.0
    sigma_end: float = 0.05
    decay_steps: int = 6000
    param_noise: bool = False
    param_noise_scale: float = 0.1
    param_noise_target: float = 0.2

    def sigma(self, step: int) -> float:
        if self.decay_steps <= 0 or step >= self.decay_steps:
            return self.sigma_end
        frac = step / self.decay_steps
        return self.sigma_start + (self.sigma_end - self.sigma_start) * frac


@dataclass
class AgentConfig:
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 64
    buffer_capacity: int = 50_000
    warmup: int = 1000
    gru_hidden: int = 64
    global_proj: int = 32
    critic_hidden: tuple[int, ...] = (128, 128)
    noise: NoiseConfig = field(default_factory=NoiseConfig)


def soft_update(target: dict[str, np.ndarray], online: Mapping[str, np.ndarray],
                tau: float) -> dict[str, np.ndarray]:
    """theta' <- tau * theta + (1 - tau) * theta', in place on ``target``."""
    for key, w in online.items():
        t = target[key]
        if t.shape != w.shape:
            raise ValueError(f"shape mismatch for {key}: {t.shape} vs {w.shape}")
        t *= 1.0 - tau
        t += tau * w
    return target


def adapt_parameter_noise(agent: "DDPGAgent", distance: float) -> float:
    """Grow the perturbation scale below the target distance, else shrink."""
    noise = agent.config.noise
    if distance < noise.param_noise_target:
        noise.param_noise_scale *= 1.01
    else:
        noise.param_noise_scale /= 1.01
    return noise.param_noise_scale


class DDPGAgent:
    """Actor-critic learner over a :class:`ActorLayout`-shaped environment."""

    def __init__(self, layout: ActorLayout, config: AgentConfig = None,  # type: ignore[assignment]
                 seed: int = 0):
        self.layout = layout
        self.config = config if config is not None else AgentConfig()
        cfg = self.config
        init_rng = substream(seed, "agent.init")
        self.actor = Actor(layout, init_rng, cfg.gru_hidden, cfg.global_proj)
        self.critic = Critic(layout.obs_dim, layout.n_params, init_rng, cfg.critic_hidden)
        self.target_actor = self.actor.clone()
        self.target_critic = self.critic.clone()
        self.opt_actor = nn.AdamState(lr=cfg.actor_lr)
        self.opt_critic = nn.AdamState(lr=cfg.critic_lr)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, layout.obs_dim, layout.n_params)
        self.noise_rng = substream(seed, "agent.noise")
        self.sample_rng = substream(seed, "agent.sample")
        self.env_steps = 0
        self.train_steps = 0
        self._perturbed_weights: Optional[dict[str, np.ndarray]] = None

    # -- acting -------------------------------------------------------------

    def act(self, obs_flat: np.ndarray, explore: bool = True) -> np.ndarray:
        """Normalized action for one observation (parameter order)."""
        weights = None
        if explore and self.config.noise.param_noise:
            if self._perturbed_weights is None:
                self.refresh_parameter_noise()
            weights = self._perturbed_weights
        a = self.actor.act_single(obs_flat, weights)
        if not explore:
            return a
        sigma = self.config.noise.sigma(self.env_steps)
        if sigma > 0.0:
            lo = np.maximum(a - sigma, -1.0)
            hi = np.minimum(a + sigma, 1.0)
            a = self.noise_rng.uniform(lo, hi)
        return a

    def refresh_parameter_noise(self):
        scale = self.config.noise.param_noise_scale
        self._perturbed_weights = {
            key: w + self.noise_rng.normal(0.0, scale, size=w.shape)
            for key, w in self.actor.weights.items()
        }

    def parameter_noise_distance(self, obs_batch: np.ndarray) -> float:
        """Mean |perturbed - clean| action gap over a probe batch."""
        if self._perturbed_weights is None:
            return 0.0
        g, loc = self.layout.split_obs(obs_batch)
        clean, _ = self.actor.forward(g, loc)
        noisy, _ = self.actor.forward(g, loc, self._perturbed_weights)
        return float(np.mean(np.abs(noisy - clean)))

    # -- learning -------------------------------------------------------------

    def observe_transition(self, obs_flat, action, reward, next_obs_flat, done):
        self.buffer.add(obs_flat, action, reward, next_obs_flat, done)
        self.env_steps += 1

    def ready(self) -> bool:
        return len(self.buffer) >= max(self.config.warmup, self.config.batch_size)

    def train_step(self) -> tuple[float, float]:
        """One critic + actor update from a uniform replay batch.

        Returns (critic mean-squared error, actor mean Q objective).
        """
        cfg = self.config
        batch = self.buffer.sample(self.sample_rng, cfg.batch_size)
        B = cfg.batch_size

        g_next, loc_next = self.layout.split_obs(batch["next_obs"])
        next_action, _ = self.target_actor.forward(
            g_next, loc_next, self.target_actor.weights
        )
        q_next, _ = self.target_critic.forward(
            batch["next_obs"], next_action, self.target_critic.weights
        )
        y = batch["rewards"] + cfg.gamma * (1.0 - batch["dones"]) * q_next

        q, caches = self.critic.forward(batch["obs"], batch["actions"])
        err = q - y
        critic_loss = float(np.mean(err * err))
        dq = 2.0 * err / B
        c_grads, _, _ = self.critic.backward(caches, dq)
        self.opt_critic.step(self.critic.weights, c_grads)

        g_obs, loc_obs = self.layout.split_obs(batch["obs"])
        action, a_cache = self.actor.forward(g_obs, loc_obs)
        q_pi, q_caches = self.critic.forward(batch["obs"], action)
        actor_objective = float(np.mean(q_pi))
        # ascend mean Q: loss = -mean(Q), dQ = -1/B
        _, _, d_action = self.critic.backward(q_caches, np.full(B, -1.0 / B))
        a_grads = self.actor.backward(a_cache, d_action)
        self.opt_actor.step(self.actor.weights, a_grads)

        soft_update(self.target_actor.weights, self.actor.weights, cfg.tau)
        soft_update(self.target_critic.weights, self.critic.weights, cfg.tau)
        self.train_steps += 1
        return critic_loss, actor_objective

    # -- persistence -----------------------------------------------------------

    def save_checkpoint(self, directory, include_buffer: bool = False):
        os.makedirs(directory, exist_ok=True)
        tensors: dict[str, np.ndarray] = {}
        for prefix, weights in (
            ("actor.", self.actor.weights),
            ("critic.", self.critic.weights),
            ("target_actor.", self.target_actor.weights),
            ("target_critic.", self.target_critic.weights),
        ):
            for key, val in weights.items():
                tensors[prefix + key] = val
        tensors.update(self.opt_actor.tensors("opt_actor."))
        tensors.update(self.opt_critic.tensors("opt_critic."))
        nn.save_tensors(os.path.join(directory, "weights.bin"), tensors)
        state = {
            "env_steps": self.env_steps,
            "train_steps": self.train_steps,
            "noise": asdict(self.config.noise),
            "rng_noise": self.noise_rng.bit_generator.state,
            "rng_sample": self.sample_rng.bit_generator.state,
        }
        with open(os.path.join(directory, "state.json"), "w") as fh:
            json.dump(state, fh, indent=1, sort_keys=True)
        if include_buffer:
            np.savez(
                os.path.join(directory, "buffer.npz"),
                obs=self.buffer.obs[: len(self.buffer)],
                actions=self.buffer.actions[: len(self.buffer)],
                rewards=self.buffer.rewards[: len(self.buffer)],
                next_obs=self.buffer.next_obs[: len(self.buffer)],
                dones=self.buffer.dones[: len(self.buffer)],
                next=np.array([self.buffer._next]),
            )

    def load_checkpoint(self, directory):
        tensors = nn.load_tensors(os.path.join(directory, "weights.bin"))
        for prefix, weights in (
            ("actor.", self.actor.weights),
            ("critic.", self.critic.weights),
            ("target_actor.", self.target_actor.weights),
            ("target_critic.", self.target_critic.weights),
        ):
            for key in weights:
                weights[key][...] = tensors[prefix + key]
        self.opt_actor.load_tensors(tensors, "opt_actor.")
        self.opt_critic.load_tensors(tensors, "opt_critic.")
        with open(os.path.join(directory, "state.json")) as fh:
            state = json.load(fh)
        self.env_steps = state["env_steps"]
        self.train_steps = state["train_steps"]
        self.config.noise = NoiseConfig(**state["noise"])
        self.noise_rng.bit_generator.state = state["rng_noise"]
        self.sample_rng.bit_generator.state = state["rng_sample"]
        buffer_path = os.path.join(directory, "buffer.npz")
        if os.path.exists(buffer_path):
            data = np.load(buffer_path)
            n = len(data["rewards"])
            self.buffer.obs[:n] = data["obs"]
            self.buffer.actions[:n] = data["actions"]
            self.buffer.rewards[:n] = data["rewards"]
            self.buffer.next_obs[:n] = data["next_obs"]
            self.buffer.dones[:n] = data["dones"]
            self.buffer._size = n
            self.buffer._next = int(data["next"][0])
