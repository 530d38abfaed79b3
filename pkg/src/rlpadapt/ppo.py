"""Actor-critic PPO with hand-written backpropagation and Adam.

Both networks are 2 -> 64 -> 64 MLPs with tanh activations; the actor ends
in 3 linear logits over {decrease, keep, increase} and the critic in one
linear value output. Updates use the clipped importance-ratio surrogate
with GAE advantages, several full-batch epochs per collected episode, and
per-parameter Adam moments. Everything is plain numpy so that gradients
can be verified against finite differences and checkpoints round-trip
bit-exactly.
"""

from __future__ import annotations

import json
import zipfile
from dataclasses import asdict, dataclass, field

import numpy as np

from .environment import Action, AgentObservation, EpisodeConfig

INPUT_DIM = 2
HIDDEN_DIM = 64
N_ACTIONS = 3
CHECKPOINT_VERSION = 1

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

# Parameter arrays in documented checkpoint order: three (weight, bias)
# layers for the actor, then the same for the critic.
PARAM_KEYS = tuple(
    f"{net}.{kind}{layer}"
    for net in ("actor", "critic")
    for layer in range(3)
    for kind in ("w", "b")
)


class CheckpointError(RuntimeError):
    pass


class VersionMismatchError(CheckpointError):
    pass


class ArchitectureMismatchError(CheckpointError):
    pass


class CorruptCheckpointError(CheckpointError):
    pass


@dataclass
class AgentConfig:
    learning_rate: float = 1e-3
    exploration: float = 1e-2
    discount: float = 0.99
    clip_ratio: float = 0.1
    gae_lambda: float = 0.95
    epochs_per_update: int = 10
    entropy_coefficient: float = 0.01
    value_loss_coefficient: float = 0.5
    max_grad_norm: float | None = None  # off unless explicitly set

    def __post_init__(self):
        if not 0 < self.discount <= 1:
            raise ValueError("discount must be in (0, 1]")
        if not 0 < self.clip_ratio < 1:
            raise ValueError("clip_ratio must be in (0, 1)")
        if not 0 <= self.exploration < 1:
            raise ValueError("exploration must be in [0, 1)")


@dataclass
class Transition:
    observation: AgentObservation
    action: Action
    log_prob: float
    reward: float
    value: float


@dataclass
class Trajectory:
    transitions: list[Transition]
    terminal: bool = True

    def __len__(self):
        return len(self.transitions)

    def observation_matrix(self) -> np.ndarray:
        return np.array([t.observation.as_vector() for t in self.transitions])

    def is_finite(self) -> bool:
        cols = [
            [t.log_prob for t in self.transitions],
            [t.reward for t in self.transitions],
            [t.value for t in self.transitions],
            [t.observation.e for t in self.transitions],
        ]
        return bool(np.all(np.isfinite(cols)))


@dataclass
class PolicyParameters:
    """All network weights plus the optimiser state, keyed by PARAM_KEYS."""

    values: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)
    step_count: int = 0

    def __post_init__(self):
        for k in PARAM_KEYS:
            if k not in self.values:
                raise ValueError(f"missing parameter array {k}")
            self.adam_m.setdefault(k, np.zeros_like(self.values[k]))
            self.adam_v.setdefault(k, np.zeros_like(self.values[k]))

    def copy(self) -> "PolicyParameters":
        return PolicyParameters(
            values={k: v.copy() for k, v in self.values.items()},
            adam_m={k: v.copy() for k, v in self.adam_m.items()},
            adam_v={k: v.copy() for k, v in self.adam_v.items()},
            step_count=self.step_count,
        )

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.values.values())


def _layer_shapes():
    dims = (INPUT_DIM, HIDDEN_DIM, HIDDEN_DIM)
    shapes = {}
    for net, out_dim in (("actor", N_ACTIONS), ("critic", 1)):
        sizes = dims + (out_dim,)
        for layer in range(3):
            shapes[f"{net}.w{layer}"] = (sizes[layer], sizes[layer + 1])
            shapes[f"{net}.b{layer}"] = (sizes[layer + 1],)
    return shapes


def init_parameters(rng: np.random.Generator) -> PolicyParameters:
    """Xavier-uniform hidden layers; output layers scaled down to keep the
    initial policy near-uniform and the initial values near zero."""
    values = {}
    for key, shape in _layer_shapes().items():
        if key.endswith(("b0", "b1", "b2")):
            values[key] = np.zeros(shape)
        else:
            fan_in, fan_out = shape
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            w = rng.uniform(-limit, limit, size=shape)
            if key.endswith("w2"):
                w *= 0.01
            values[key] = w
    return PolicyParameters(values=values)


def _mlp_forward(params: PolicyParameters, net: str, x: np.ndarray):
    v = params.values
    h1 = np.tanh(x @ v[f"{net}.w0"] + v[f"{net}.b0"])
    h2 = np.tanh(h1 @ v[f"{net}.w1"] + v[f"{net}.b1"])
    out = h2 @ v[f"{net}.w2"] + v[f"{net}.b2"]
    return out, (x, h1, h2)


def _mlp_backward(params, net, cache, d_out, grads):
    v = params.values
    x, h1, h2 = cache
    grads[f"{net}.w2"] = h2.T @ d_out
    grads[f"{net}.b2"] = d_out.sum(axis=0)
    d_h2 = (d_out @ v[f"{net}.w2"].T) * (1.0 - h2 * h2)
    grads[f"{net}.w1"] = h1.T @ d_h2
    grads[f"{net}.b1"] = d_h2.sum(axis=0)
    d_h1 = (d_h2 @ v[f"{net}.w1"].T) * (1.0 - h1 * h1)
    grads[f"{net}.w0"] = x.T @ d_h1
    grads[f"{net}.b0"] = d_h1.sum(axis=0)


def _forward_batch(params, obs_matrix):
    logits, actor_cache = _mlp_forward(params, "actor", obs_matrix)
    value_col, critic_cache = _mlp_forward(params, "critic", obs_matrix)
    return logits, value_col[:, 0], actor_cache, critic_cache


def policy_forward(params: PolicyParameters, obs: AgentObservation):
    """Logits over the three actions and the critic value for one state."""
    x = obs.as_vector()[None, :]
    logits, values, _, _ = _forward_batch(params, x)
    return logits[0], float(values[0])


def log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _sample_from_logits(logits, mode, rng, exploration):
    log_probs = log_softmax(logits)
    if mode == "greedy":
        action = int(np.argmax(logits))  # argmax ties resolve to lowest index
    elif mode == "stochastic":
        if exploration > 0 and rng.random() < exploration:
            action = int(rng.integers(N_ACTIONS))
        else:
            cdf = np.cumsum(np.exp(log_probs))
            action = min(int(np.searchsorted(cdf, rng.random(), side="right")), N_ACTIONS - 1)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return Action(action), float(log_probs[action])


def select_action(params, obs, mode="stochastic", rng=None, exploration=1e-2):
    """Pick an action; the returned log-probability is always the softmax
    one, excluding the epsilon-exploration mixture."""
    logits, _ = policy_forward(params, obs)
    return _sample_from_logits(logits, mode, rng, exploration)


def compute_advantages(traj: Trajectory, gamma: float, lam: float, normalize=True):
    """GAE advantages and value targets; the episode is treated as terminal
    (bootstrap value 0 past the last step). Advantage normalisation is
    skipped for degenerate batches (N < 2 or tiny variance)."""
    n = len(traj)
    rewards = np.array([t.reward for t in traj.transitions])
    values = np.array([t.value for t in traj.transitions])
    next_values = np.append(values[1:], 0.0)
    deltas = rewards + gamma * next_values - values
    advantages = np.empty(n)
    acc = 0.0
    for t in reversed(range(n)):
        acc = deltas[t] + gamma * lam * acc
        advantages[t] = acc
    returns = advantages + values
    if normalize and n >= 2:
        var = advantages.var()
        if var >= 1e-8:
            advantages = (advantages - advantages.mean()) / np.sqrt(var)
    return advantages, returns


@dataclass
class _Batch:
    obs: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray


def _make_batch(traj: Trajectory, cfg: AgentConfig) -> _Batch:
    advantages, returns = compute_advantages(traj, cfg.discount, cfg.gae_lambda)
    return _Batch(
        obs=traj.observation_matrix(),
        actions=np.array([int(t.action) for t in traj.transitions]),
        old_log_probs=np.array([t.log_prob for t in traj.transitions]),
        advantages=advantages,
        returns=returns,
    )


def _losses_and_grads(params, batch: _Batch, cfg: AgentConfig, want_grads=True):
    n = len(batch.actions)
    idx = np.arange(n)
    logits, values, actor_cache, critic_cache = _forward_batch(params, batch.obs)
    log_probs = log_softmax(logits)
    probs = np.exp(log_probs)

    chosen_logp = log_probs[idx, batch.actions]
    ratios = np.exp(chosen_logp - batch.old_log_probs)
    clipped = np.clip(ratios, 1.0 - cfg.clip_ratio, 1.0 + cfg.clip_ratio)
    surr_unclipped = ratios * batch.advantages
    surr_clipped = clipped * batch.advantages
    entropy = -(probs * log_probs).sum(axis=1)

    surrogate = np.minimum(surr_unclipped, surr_clipped).mean()
    mean_entropy = entropy.mean()
    actor_loss = -surrogate - cfg.entropy_coefficient * mean_entropy
    value_err = values - batch.returns
    critic_loss = cfg.value_loss_coefficient * np.mean(value_err**2)

    stats = {
        "actor_loss": float(actor_loss),
        "critic_loss": float(critic_loss),
        "entropy": float(mean_entropy),
        "surrogate": float(surrogate),
    }
    if not want_grads:
        return None, stats

    # d(actor_loss)/d(logits): the unclipped branch contributes ratio * A
    # wherever it attains the min (ties included); a saturated clip branch
    # has zero gradient.
    use_unclipped = surr_unclipped <= surr_clipped
    dsurr_dlogp = np.where(use_unclipped, ratios * batch.advantages, 0.0)
    one_hot = np.zeros_like(logits)
    one_hot[idx, batch.actions] = 1.0
    d_logits = -(dsurr_dlogp[:, None] * (one_hot - probs)) / n
    d_entropy = -probs * (log_probs + entropy[:, None])
    d_logits -= cfg.entropy_coefficient * d_entropy / n

    d_values = 2.0 * cfg.value_loss_coefficient * value_err / n

    grads = {}
    _mlp_backward(params, "actor", actor_cache, d_logits, grads)
    _mlp_backward(params, "critic", critic_cache, d_values[:, None], grads)
    return grads, stats


def ppo_losses(params, traj: Trajectory, cfg: AgentConfig):
    """Losses of the current parameters on a trajectory (no update)."""
    _, stats = _losses_and_grads(params, _make_batch(traj, cfg), cfg, want_grads=False)
    return stats


def _adam_step(params: PolicyParameters, grads, lr, max_grad_norm=None):
    if max_grad_norm is not None:
        total = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
        if total > max_grad_norm:
            scale = max_grad_norm / total
            grads = {k: g * scale for k, g in grads.items()}
    params.step_count += 1
    t = params.step_count
    bc1 = 1.0 - ADAM_BETA1**t
    bc2 = 1.0 - ADAM_BETA2**t
    for k in PARAM_KEYS:
        g = grads[k]
        m = params.adam_m[k]
        v = params.adam_v[k]
        m *= ADAM_BETA1
        m += (1 - ADAM_BETA1) * g
        v *= ADAM_BETA2
        v += (1 - ADAM_BETA2) * g * g
        params.values[k] -= lr * (m / bc1) / (np.sqrt(v / bc2) + ADAM_EPS)


def ppo_update(params: PolicyParameters, traj: Trajectory, cfg: AgentConfig):
    """Clipped-surrogate PPO update over the whole trajectory batch."""
    if not traj.is_finite():
        raise ValueError("trajectory contains non-finite entries")
    batch = _make_batch(traj, cfg)
    new_params = params.copy()
    for _ in range(cfg.epochs_per_update):
        grads, _ = _losses_and_grads(new_params, batch, cfg)
        _adam_step(new_params, grads, cfg.learning_rate, cfg.max_grad_norm)
    return new_params


def collect_episode(env, params, cfg: AgentConfig, episodes: EpisodeConfig, rng):
    """Roll out one training episode under the stochastic policy."""
    g, p, obs = env.episode_reset(rng)
    transitions = []
    for _ in range(episodes.steps_per_episode):
        logits, value = policy_forward(params, obs)
        action, log_prob = _sample_from_logits(logits, "stochastic", rng, cfg.exploration)
        p, obs_next, reward = env.episode_step(g, p, action)
        transitions.append(Transition(obs, action, log_prob, reward, value))
        obs = obs_next
    return Trajectory(transitions)


def train(
    env,
    cfg: AgentConfig,
    episodes: EpisodeConfig,
    rng: np.random.Generator,
    log_rows: list | None = None,
    progress_every: int = 0,
):
    """Train a fresh agent: one PPO update per collected episode.

    `env` is any namespace providing episode_reset / episode_step (the
    environment module itself in normal use). When given, `log_rows`
    receives one (episode, mean_reward, actor_loss, critic_loss, entropy)
    tuple per episode.
    """
    params = init_parameters(rng)
    for ep in range(episodes.num_episodes):
        traj = collect_episode(env, params, cfg, episodes, rng)
        if log_rows is not None:
            stats = ppo_losses(params, traj, cfg)
            mean_reward = float(np.mean([t.reward for t in traj.transitions]))
            log_rows.append(
                (ep, mean_reward, stats["actor_loss"], stats["critic_loss"], stats["entropy"])
            )
        params = ppo_update(params, traj, cfg)
        if not params.all_finite():
            raise FloatingPointError(f"non-finite parameters after episode {ep}")
        if progress_every and (ep + 1) % progress_every == 0:
            print(f"episode {ep + 1}/{episodes.num_episodes}", flush=True)
    return params


def save_checkpoint(
    params: PolicyParameters,
    path,
    config: AgentConfig | None = None,
    seed_provenance=None,
):
    """Write a self-describing npz checkpoint (bit-exact round trip)."""
    meta = {
        "format_version": CHECKPOINT_VERSION,
        "architecture": {
            "input": INPUT_DIM,
            "hidden": [HIDDEN_DIM, HIDDEN_DIM],
            "actions": N_ACTIONS,
        },
        "param_keys": list(PARAM_KEYS),
        "dtype": "<f8",
        "step_count": params.step_count,
        "agent_config": asdict(config) if config is not None else None,
        "seed_provenance": seed_provenance,
    }
    arrays = {"meta": np.array(json.dumps(meta))}
    for k in PARAM_KEYS:
        arrays[f"param/{k}"] = params.values[k]
        arrays[f"adam_m/{k}"] = params.adam_m[k]
        arrays[f"adam_v/{k}"] = params.adam_v[k]
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def checkpoint_metadata(path) -> dict:
    try:
        with np.load(path) as data:
            return json.loads(str(data["meta"]))
    except (OSError, zipfile.BadZipFile, KeyError, ValueError) as err:
        raise CorruptCheckpointError(f"cannot read checkpoint {path}: {err}") from err


def load_checkpoint(path) -> PolicyParameters:
    meta = checkpoint_metadata(path)
    if meta.get("format_version") != CHECKPOINT_VERSION:
        raise VersionMismatchError(
            f"checkpoint format {meta.get('format_version')} != {CHECKPOINT_VERSION}"
        )
    arch = meta.get("architecture", {})
    expected = {"input": INPUT_DIM, "hidden": [HIDDEN_DIM, HIDDEN_DIM], "actions": N_ACTIONS}
    if arch != expected:
        raise ArchitectureMismatchError(f"architecture {arch} != {expected}")
    shapes = _layer_shapes()
    try:
        with np.load(path) as data:
            values, adam_m, adam_v = {}, {}, {}
            for k in PARAM_KEYS:
                values[k] = data[f"param/{k}"]
                adam_m[k] = data[f"adam_m/{k}"]
                adam_v[k] = data[f"adam_v/{k}"]
    except (OSError, zipfile.BadZipFile, KeyError, ValueError) as err:
        raise CorruptCheckpointError(f"cannot read checkpoint {path}: {err}") from err
    for k, arr in values.items():
        if arr.shape != shapes[k]:
            raise ArchitectureMismatchError(
                f"{k} has shape {arr.shape}, expected {shapes[k]}"
            )
    return PolicyParameters(
        values=values, adam_m=adam_m, adam_v=adam_v, step_count=int(meta["step_count"])
    )
