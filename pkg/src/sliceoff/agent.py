"""Twin-critic deterministic-policy agents with delayed actor updates,
target-action smoothing, and confidence-weighted dual policy distillation.

Networks are small fully-connected float64 MLPs with hand-written backprop
and Adam; at these sizes that is several times faster than a tensor
framework on CPU and keeps training bit-reproducible. Two agents train on
independently seeded environments and exchange frozen policy snapshots at
episode boundaries; each adds an imitation term toward its peer weighted by
exp(alpha * advantage), so knowledge flows predominantly from the currently
stronger policy into the weaker one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, asdict, field

import numpy as np

from .env import ActionVector, snapshot_features
from .env import action_dim as env_action_dim
from .env import feature_dim as env_feature_dim


class AgentError(RuntimeError):
    pass


@dataclass
class AgentConfig:
    discount: float = 0.99
    soft_update_rate: float = 0.005
    batch_size: int = 128
    buffer_capacity: int = 100_000
    exploration_noise_sd: float = 0.1
    target_noise_sd: float = 0.2
    target_noise_clip: float = 0.5
    actor_delay: int = 2
    distill_confidence: float = 1.0     # alpha in the exp(...) weight
    advantage_clamp: float = 5.0
    learning_rate: float = 0.001
    distill_period_episodes: int = 1
    distill_weight: float = 1.0         # lambda on the distillation term
    hidden_layer_sizes: tuple = (256, 256)
    reward_scale: float = 1.0
    bootstrap_terminal: bool = False
    debug_checks: bool = False

    def __post_init__(self):
        if not (0.0 < self.discount < 1.0):
            raise ValueError("discount must be in (0, 1)")
        if not (0.0 < self.soft_update_rate <= 1.0):
            raise ValueError("soft_update_rate must be in (0, 1]")
        if self.batch_size < 1 or self.actor_delay < 1:
            raise ValueError("batch_size and actor_delay must be >= 1")


class Mlp:
    """ReLU MLP, float64, optional sigmoid output; manual forward/backward."""

    def __init__(self, sizes, rng=None, output="linear"):
        self.sizes = tuple(sizes)
        self.output = output
        self.weights, self.biases = [], []
        if rng is not None:
            last = len(sizes) - 2
            for i, (m, n) in enumerate(zip(sizes[:-1], sizes[1:])):
                if i == last:
                    bound = 3e-3           # small head keeps initial Q near 0 / actor near 0.5
                    self.weights.append(rng.uniform(-bound, bound, size=(m, n)))
                    self.biases.append(rng.uniform(-bound, bound, size=n))
                else:
                    bound = math.sqrt(6.0 / m)
                    self.weights.append(rng.uniform(-bound, bound, size=(m, n)))
                    self.biases.append(np.zeros(n))

    def params(self):
        out = []
        for w, b in zip(self.weights, self.biases):
            out.append(w)
            out.append(b)
        return out

    def copy(self) -> "Mlp":
        dup = Mlp(self.sizes, output=self.output)
        dup.weights = [w.copy() for w in self.weights]
        dup.biases = [b.copy() for b in self.biases]
        return dup

    def forward(self, x, want_cache=False):
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        pre, post = [], [x]
        h = x
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = h @ w + b
            if i < last:
                h = np.maximum(z, 0.0)
            elif self.output == "sigmoid":
                h = 1.0 / (1.0 + np.exp(-z))
            else:
                h = z
            pre.append(z)
            post.append(h)
        if want_cache:
            return h, (pre, post)
        return h

    def backward(self, cache, grad_out):
        """Grads of sum(grad_out * output) w.r.t. params and input."""
        pre, post = cache
        g = np.asarray(grad_out, dtype=np.float64)
        if self.output == "sigmoid":
            y = post[-1]
            g = g * y * (1.0 - y)
        grads = [None] * (2 * len(self.weights))
        for i in range(len(self.weights) - 1, -1, -1):
            grads[2 * i] = post[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
            if i > 0:
                g = g * (pre[i - 1] > 0)
        return grads, g


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        bc1 = 1.0 - self.b1 ** self.t
        bc2 = 1.0 - self.b2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class ReplayBuffer:
    def __init__(self, capacity, state_dim, action_dim):
        self.capacity = capacity
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity)
        self.size = 0
        self._head = 0

    def push(self, s, a, r, s2, terminal):
        i = self._head
        self.states[i] = s
        self.actions[i] = a
        self.rewards[i] = r
        self.next_states[i] = s2
        self.terminals[i] = float(terminal)
        self._head = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, k, rng):
        idx = rng.integers(0, self.size, size=k)
        return {
            "states": self.states[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_states": self.next_states[idx],
            "terminals": self.terminals[idx],
        }

    def sample_states(self, k, rng):
        return self.states[rng.integers(0, self.size, size=k)]


@dataclass
class PolicySnapshot:
    """Frozen copy of a peer: actor plus its critics for advantage estimates."""

    actor: Mlp
    critics: tuple

    def act(self, states):
        return self.actor.forward(states)

    def value(self, states):
        a = self.actor.forward(states)
        x = np.concatenate([np.atleast_2d(states), a], axis=1)
        return np.min([q.forward(x)[:, 0] for q in self.critics], axis=0)

    def param_arrays(self):
        out = list(self.actor.params())
        for q in self.critics:
            out.extend(q.params())
        return out


class OffloadAgent:
    """One deterministic-policy agent. variant='td3' uses twin critics,
    target smoothing and delayed actor updates; variant='ddpg' uses a single
    critic, no smoothing, and updates the actor every step."""

    def __init__(self, state_dim, action_dim, config: AgentConfig, seed: int,
                 variant: str = "td3"):
        if variant not in ("td3", "ddpg"):
            raise ValueError(f"unknown variant {variant}")
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.config = config
        self.variant = variant
        self.seed = seed
        init_rng = np.random.default_rng([seed, 0xA11CE])
        self.rng = np.random.default_rng([seed, 0xB0B])
        hidden = tuple(config.hidden_layer_sizes)
        self.actor = Mlp((state_dim, *hidden, action_dim), init_rng, output="sigmoid")
        self.q1 = Mlp((state_dim + action_dim, *hidden, 1), init_rng)
        self.q2 = Mlp((state_dim + action_dim, *hidden, 1), init_rng) if variant == "td3" else None
        self.actor_target = self.actor.copy()
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy() if self.q2 is not None else None
        lr = config.learning_rate
        self.actor_opt = Adam(self.actor.params(), lr)
        self.q1_opt = Adam(self.q1.params(), lr)
        self.q2_opt = Adam(self.q2.params(), lr) if self.q2 is not None else None
        self.buffer = ReplayBuffer(config.buffer_capacity, state_dim, action_dim)
        self.total_steps = 0

    @property
    def effective_actor_delay(self) -> int:
        return 1 if self.variant == "ddpg" else self.config.actor_delay

    # --- acting ---

    def select_action(self, state, explore: bool) -> np.ndarray:
        a = self.actor.forward(state)[0]
        if explore:
            a = a + self.rng.normal(0.0, self.config.exploration_noise_sd, size=a.shape)
        return np.clip(a, 0.0, 1.0)

    def target_action(self, next_states) -> np.ndarray:
        a = self.actor_target.forward(next_states)
        if self.variant == "td3" and self.config.target_noise_sd > 0:
            noise = self.rng.normal(0.0, self.config.target_noise_sd, size=a.shape)
            noise = np.clip(noise, -self.config.target_noise_clip, self.config.target_noise_clip)
            a = a + noise
        return np.clip(a, 0.0, 1.0)

    # --- learning ---

    def critic_target(self, rewards, next_states, terminals) -> np.ndarray:
        rewards = np.atleast_1d(np.asarray(rewards, dtype=np.float64))
        terminals = np.atleast_1d(np.asarray(terminals, dtype=np.float64))
        a2 = self.target_action(np.atleast_2d(next_states))
        x2 = np.concatenate([np.atleast_2d(next_states), a2], axis=1)
        q = self.q1_target.forward(x2)[:, 0]
        if self.q2_target is not None:
            q = np.minimum(q, self.q2_target.forward(x2)[:, 0])
        if self.config.bootstrap_terminal:
            return rewards + self.config.discount * q
        return rewards + self.config.discount * (1.0 - terminals) * q

    def update_critics(self, batch):
        k = len(batch["rewards"])
        if k == 0:
            raise AgentError("empty batch")
        y = self.critic_target(batch["rewards"], batch["next_states"], batch["terminals"])
        x = np.concatenate([batch["states"], batch["actions"]], axis=1)
        losses = []
        for critic, opt in ((self.q1, self.q1_opt), (self.q2, self.q2_opt)):
            if critic is None:
                losses.append(math.nan)
                continue
            q, cache = critic.forward(x, want_cache=True)
            err = q[:, 0] - y
            losses.append(float(np.mean(err ** 2)))
            grads, _ = critic.backward(cache, (2.0 * err / k)[:, None])
            opt.step(critic.params(), grads)
        return tuple(losses)

    def update_actor(self, states, step: int | None = None,
                     peer: PolicySnapshot | None = None, peer_states=None):
        """Gradient step on -mean Q1(s, pi(s)) plus the weighted imitation term.

        Returns (policy_loss, distill_loss); distill_loss is None when no
        peer snapshot/states are supplied.
        """
        if self.config.debug_checks and step is not None:
            if step % self.effective_actor_delay != 0:
                raise AgentError(f"actor update at off-schedule step {step}")
        policy_loss, grads = self._policy_grads(states)
        distill_loss = None
        if peer is not None and peer_states is not None and self.config.distill_weight > 0:
            d_loss, d_grads = self._distill_grads(peer, peer_states)
            distill_loss = d_loss
            lam = self.config.distill_weight
            grads = [g + lam * dg for g, dg in zip(grads, d_grads)]
        self.actor_opt.step(self.actor.params(), grads)
        return policy_loss, distill_loss

    def advantage(self, states, peer: PolicySnapshot) -> np.ndarray:
        """Clamped estimate of how much better the peer's policy is at each state,
        each side valued by its own twin critics at its own action."""
        states = np.atleast_2d(states)
        v_self = self._own_value(states)
        v_peer = peer.value(states)
        c = self.config.advantage_clamp
        return np.clip(v_peer - v_self, -c, c)

    def distill_from_peer(self, peer: PolicySnapshot, states) -> float:
        """Evaluate the imitation loss against a frozen peer (no update)."""
        loss, _ = self._distill_grads(peer, states)
        return loss

    def _policy_grads(self, states):
        """Loss -mean Q1(s, pi(s)) and its gradient w.r.t. actor parameters."""
        states = np.atleast_2d(states)
        k = states.shape[0]
        actions, actor_cache = self.actor.forward(states, want_cache=True)
        x = np.concatenate([states, actions], axis=1)
        q, q_cache = self.q1.forward(x, want_cache=True)
        _, grad_x = self.q1.backward(q_cache, np.full((k, 1), -1.0 / k))
        grads, _ = self.actor.backward(actor_cache, grad_x[:, self.state_dim:])
        return float(-np.mean(q)), grads

    def _own_value(self, states) -> np.ndarray:
        a = self.actor.forward(states)
        x = np.concatenate([states, a], axis=1)
        v = self.q1.forward(x)[:, 0]
        if self.q2 is not None:
            v = np.minimum(v, self.q2.forward(x)[:, 0])
        return v

    def _distill_grads(self, peer: PolicySnapshot, states):
        states = np.atleast_2d(states)
        k = states.shape[0]
        xi = self.advantage(states, peer)
        weights = np.exp(self.config.distill_confidence * xi)  # fixed coefficients
        actions, cache = self.actor.forward(states, want_cache=True)
        diff = actions - peer.act(states)
        loss = float(np.mean(np.sum(diff ** 2, axis=1) * weights))
        grads, _ = self.actor.backward(cache, 2.0 * diff * weights[:, None] / k)
        return loss, grads

    def soft_update(self, tau: float | None = None):
        tau = self.config.soft_update_rate if tau is None else tau
        pairs = [(self.actor, self.actor_target), (self.q1, self.q1_target)]
        if self.q2 is not None:
            pairs.append((self.q2, self.q2_target))
        for online, target in pairs:
            for p, tp in zip(online.params(), target.params()):
                tp *= 1.0 - tau
                tp += tau * p

    def snapshot(self) -> PolicySnapshot:
        critics = (self.q1.copy(),) if self.q2 is None else (self.q1.copy(), self.q2.copy())
        return PolicySnapshot(actor=self.actor.copy(), critics=critics)

    # --- persistence ---

    def save(self, path):
        arrays = {}
        for name, net in self._named_nets():
            if net is None:
                continue
            for i, p in enumerate(net.params()):
                arrays[f"{name}_{i}"] = p
        meta = {
            "config": asdict(self.config),
            "variant": self.variant,
            "seed": self.seed,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "total_steps": self.total_steps,
        }
        np.savez(path, meta=json.dumps(meta), **arrays)

    @classmethod
    def load(cls, path) -> "OffloadAgent":
        data = np.load(path, allow_pickle=False)
        meta = json.loads(str(data["meta"]))
        cfg = meta["config"]
        cfg["hidden_layer_sizes"] = tuple(cfg["hidden_layer_sizes"])
        agent = cls(meta["state_dim"], meta["action_dim"], AgentConfig(**cfg),
                    seed=meta["seed"], variant=meta["variant"])
        agent.total_steps = meta["total_steps"]
        for name, net in agent._named_nets():
            if net is None:
                continue
            for i, p in enumerate(net.params()):
                p[...] = data[f"{name}_{i}"]
        return agent

    def _named_nets(self):
        return [("actor", self.actor), ("q1", self.q1), ("q2", self.q2),
                ("actor_t", self.actor_target), ("q1_t", self.q1_target),
                ("q2_t", self.q2_target)]


def make_baseline_agent(kind: str, state_dim: int, action_dim: int,
                        config: AgentConfig, seed: int) -> OffloadAgent:
    """Ablation variants: 'td3_no_distill' zeroes the imitation term,
    'ddpg_single_critic' drops the twin critic, smoothing and delay."""
    if kind == "td3_no_distill":
        cfg = AgentConfig(**{**asdict(config), "distill_weight": 0.0})
        return OffloadAgent(state_dim, action_dim, cfg, seed, variant="td3")
    if kind == "ddpg_single_critic":
        return OffloadAgent(state_dim, action_dim, config, seed, variant="ddpg")
    raise ValueError(f"unknown baseline kind {kind}")


def hybrid_policy_eval(agent: OffloadAgent, peer: OffloadAgent, states):
    """Per-state composite of the two trained policies.

    Takes the peer's action exactly where the peer's value advantage is
    positive and the agent's own action otherwise, so the composite's
    estimated value dominates both constituents pointwise. Also reports the
    fraction of states routed to the peer.
    """
    states = np.atleast_2d(states)
    xi = agent.advantage(states, peer.snapshot())
    own = agent.actor.forward(states)
    other = peer.actor.forward(states)
    pick_peer = xi > 0
    actions = np.where(pick_peer[:, None], other, own)
    return actions, float(np.mean(pick_peer))


# --- training loops ---

@dataclass
class EpisodeStats:
    reward: float
    critic_updates: int = 0
    actor_update_steps: list = field(default_factory=list)
    distill_losses: list = field(default_factory=list)


def run_episode(agent: OffloadAgent, env, scenario, explore=True, update=True,
                peer: PolicySnapshot | None = None,
                peer_buffer: ReplayBuffer | None = None) -> EpisodeStats:
    """One full day in the environment, with per-step critic updates and
    delayed actor/target updates while training.

    Each region is its own MDP sharing the one policy: the stored successor
    of a region's step is that same region's state at the next short slot,
    not the next region visited, so bootstrapped values stay region-
    consistent."""
    cfg = agent.config
    stats = EpisodeStats(reward=0.0)
    env.reset()
    pending = {}   # region_id -> (features, action, reward)
    while not env.done:
        snapshot = env.current_snapshot()
        features = snapshot_features(snapshot, scenario)
        rid = snapshot.region_id
        if update and rid in pending:
            p_feat, p_act, p_rew = pending.pop(rid)
            agent.buffer.push(p_feat, p_act, p_rew, features, False)
        action = agent.select_action(features, explore=explore)
        out = env.step(ActionVector.from_flat(action))
        stats.reward += out.reward
        if update:
            pending[rid] = (features, action, out.reward * cfg.reward_scale)
            agent.total_steps += 1
            if agent.buffer.size >= cfg.batch_size:
                batch = agent.buffer.sample(cfg.batch_size, agent.rng)
                agent.update_critics(batch)
                stats.critic_updates += 1
                if agent.total_steps % agent.effective_actor_delay == 0:
                    peer_states = None
                    if (peer is not None and peer_buffer is not None
                            and peer_buffer.size >= cfg.batch_size):
                        peer_states = peer_buffer.sample_states(cfg.batch_size, agent.rng)
                    _, d_loss = agent.update_actor(batch["states"], step=agent.total_steps,
                                                   peer=peer, peer_states=peer_states)
                    agent.soft_update()
                    stats.actor_update_steps.append(agent.total_steps)
                    if d_loss is not None:
                        stats.distill_losses.append(d_loss)
    if update:
        for rid, (p_feat, p_act, p_rew) in sorted(pending.items()):
            agent.buffer.push(p_feat, p_act, p_rew, np.zeros_like(p_feat), True)
    return stats


@dataclass
class TrainResult:
    agents: list
    rewards: np.ndarray          # (n_agents, episodes)
    distill_loss_means: np.ndarray
    peer_fractions: np.ndarray = None   # per episode: share of probe states where
                                        # agent 1 looks better to agent 0

    @property
    def better_index(self) -> int:
        final = max(1, self.rewards.shape[1] // 10)
        return int(np.argmax(self.rewards[:, -final:].mean(axis=1)))


def train_single(env_factory, episodes: int, config: AgentConfig, seed: int,
                 variant: str = "td3") -> TrainResult:
    """Train one agent without distillation (the no-distill / single-critic
    ablations)."""
    scenario = env_factory(0, 0).scenario
    agent = OffloadAgent(env_feature_dim(scenario), env_action_dim(scenario), config,
                         seed, variant=variant)
    rewards = np.zeros((1, episodes))
    for ep in range(episodes):
        stats = run_episode(agent, env_factory(0, ep), scenario)
        rewards[0, ep] = stats.reward
    return TrainResult([agent], rewards, np.zeros((1, episodes)))


def train_pair(env_factory, episodes: int, config: AgentConfig, seeds=(0, 1)) -> TrainResult:
    """The dual-distillation loop: both agents explore their own environment
    streams, and exchange frozen policy snapshots every
    distill_period_episodes to drive the imitation terms."""
    scenario = env_factory(0, 0).scenario
    agents = [OffloadAgent(env_feature_dim(scenario), env_action_dim(scenario), config,
                           seeds[i], variant="td3") for i in range(2)]
    snapshots = [None, None]
    rewards = np.zeros((2, episodes))
    distill = np.zeros((2, episodes))
    fractions = np.full(episodes, math.nan)
    probe_rng = np.random.default_rng([seeds[0], seeds[1], 0xF4AC])
    for ep in range(episodes):
        for i, agent in enumerate(agents):
            stats = run_episode(agent, env_factory(i, ep), scenario,
                                peer=snapshots[i], peer_buffer=agents[1 - i].buffer)
            rewards[i, ep] = stats.reward
            distill[i, ep] = float(np.mean(stats.distill_losses)) if stats.distill_losses else 0.0
        if (ep + 1) % config.distill_period_episodes == 0:
            snapshots = [agents[1].snapshot(), agents[0].snapshot()]
        if agents[0].buffer.size >= config.batch_size:
            probe = agents[0].buffer.sample_states(min(256, agents[0].buffer.size), probe_rng)
            fractions[ep] = float(np.mean(agents[0].advantage(probe, agents[1].snapshot()) > 0))
    return TrainResult(agents, rewards, distill, peer_fractions=fractions)


def random_policy_rewards(env_factory, episodes: int, seed: int) -> np.ndarray:
    """Episode rewards of uniform-random actions; the convergence yardstick."""
    rng = np.random.default_rng(seed)
    rewards = np.zeros(episodes)
    for ep in range(episodes):
        env = env_factory(0, ep)
        env.reset()
        total = 0.0
        n = env.scenario.state_slots
        while not env.done:
            total += env.step(ActionVector(rng.random(n), rng.random(n))).reward
        rewards[ep] = total
    return rewards
