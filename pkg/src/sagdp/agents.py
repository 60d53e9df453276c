"""Offline agents: behavioral cloning, conservative Q-learning, baselines.

Both learners consume the frozen transition dataset; there is no
environment interaction during training.  The 8-dimensional rate action is
factorized into 8 independent heads sharing one trunk: BC regresses the 8
normalized rates, CQL keeps per-head action values over the 0..paar_max
rate alphabet so the per-head argmax (and max in the TD target) is exact.

The CQL objective per head is the squared TD error against the target
network plus alpha * (logsumexp of the head's values minus the value of
the dataset action); alpha = 0 reduces to plain DQN-style TD learning and
the code skips the regularizer entirely so the traces match bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import nn_core as nn
from .data_model import Scenario
from .env import Action, EnvConfig, N_LOOKAHEAD, Observation, SagdpEnv
from .errors import ValidationError
from .scenario_gen import Dataset, GenConfig, gen_scenario, scripted_expert


@dataclass(frozen=True)
class TrainConfig:
    n_iter: int = 1000
    batch_size: int = 64
    eval_batch_size: int = 100
    eval_interval: int = 100
    seed: int = 0

    def __post_init__(self):
        if min(self.n_iter, self.batch_size, self.eval_batch_size, self.eval_interval) < 1:
            raise ValidationError("train config counts must be positive")


@dataclass(frozen=True)
class CqlConfig:
    """CQL hyperparameters; alpha = 0 degenerates to DQN."""

    alpha: float = 1.0
    gamma: float = 0.99
    target_sync_period: int = 200
    lr: float = 1e-3
    reward_scale: float = 1e-3  # keeps Q targets O(1) for raw quarter-cost rewards

    def __post_init__(self):
        if self.alpha < 0:
            raise ValidationError("alpha must be >= 0", field="alpha")
        if not (0.0 <= self.gamma < 1.0):
            raise ValidationError("gamma must lie in [0, 1)", field="gamma")
        if self.target_sync_period < 1:
            raise ValidationError("target_sync_period must be >= 1")
        if self.lr <= 0 or self.reward_scale <= 0:
            raise ValidationError("lr and reward_scale must be positive")


@dataclass
class LogRow:
    """One training-log line; eval fields filled only on eval iterations."""

    iteration: int
    train_loss: float
    td_term: Optional[float] = None
    conservative_term: Optional[float] = None
    eval_mean: Optional[float] = None
    eval_std: Optional[float] = None


@dataclass
class BcPolicy:
    """Rate regressor: 8 heads of normalized rates, rounded and clamped."""

    params: nn.Params
    obs_mean: np.ndarray
    obs_std: np.ndarray
    paar_max: int = 16

    def action(self, obs: Observation) -> Action:
        x = (obs.flatten() - self.obs_mean) / self.obs_std
        out, _ = nn.forward(self.params, x)
        rates = np.clip(np.rint(out * self.paar_max), 0, self.paar_max)
        return Action(tuple(int(r) for r in rates))

    def save(self, path) -> None:
        meta = {
            "kind": "bc",
            "layer_sizes": list(self.params.spec.layer_sizes),
            "activations": list(self.params.spec.activations),
            "paar_max": self.paar_max,
        }
        arrays = nn.params_to_arrays(self.params, "net_")
        arrays["obs_mean"] = self.obs_mean
        arrays["obs_std"] = self.obs_std
        nn.save_checkpoint(path, meta, arrays)


@dataclass
class CqlAgent:
    """Factorized Q agent: per-head values over the rate alphabet."""

    q_params: nn.Params
    target_params: nn.Params
    obs_mean: np.ndarray
    obs_std: np.ndarray
    paar_max: int = 16
    config: CqlConfig = field(default_factory=CqlConfig)

    def __post_init__(self):
        want = N_LOOKAHEAD * (self.paar_max + 1)
        if self.q_params.spec.n_out != want:
            raise ValidationError(
                f"q net must emit {want} values (8 heads x {self.paar_max + 1} rates)"
            )
        if self.target_params.spec != self.q_params.spec:
            raise ValidationError("target net spec must match q net spec")

    @property
    def n_rates(self) -> int:
        return self.paar_max + 1

    def q_values(self, obs_norm: np.ndarray, *, target: bool = False) -> np.ndarray:
        """(batch, 8, n_rates) action values for already-normalized observations."""
        params = self.target_params if target else self.q_params
        out, _ = nn.forward(params, np.atleast_2d(obs_norm))
        return out.reshape(-1, N_LOOKAHEAD, self.n_rates)

    def action(self, obs: Observation) -> Action:
        x = (obs.flatten() - self.obs_mean) / self.obs_std
        q = self.q_values(x)[0]
        rates = np.argmax(q, axis=1)  # first max wins: ties go to the lower rate
        return Action(tuple(int(r) for r in rates))

    def save(self, path) -> None:
        meta = {
            "kind": "cql",
            "layer_sizes": list(self.q_params.spec.layer_sizes),
            "activations": list(self.q_params.spec.activations),
            "paar_max": self.paar_max,
            "alpha": self.config.alpha,
            "gamma": self.config.gamma,
            "target_sync_period": self.config.target_sync_period,
            "lr": self.config.lr,
            "reward_scale": self.config.reward_scale,
        }
        arrays = nn.params_to_arrays(self.q_params, "q_")
        arrays.update(nn.params_to_arrays(self.target_params, "t_"))
        arrays["obs_mean"] = self.obs_mean
        arrays["obs_std"] = self.obs_std
        nn.save_checkpoint(path, meta, arrays)


def load_policy(path):
    """Load a BC or CQL checkpoint, dispatching on its kind tag."""
    meta, arrays = nn.load_checkpoint(path)
    spec = nn.NetSpec(tuple(meta["layer_sizes"]), tuple(meta["activations"]))
    if meta["kind"] == "bc":
        return BcPolicy(
            params=nn.params_from_arrays(spec, arrays, "net_"),
            obs_mean=arrays["obs_mean"],
            obs_std=arrays["obs_std"],
            paar_max=int(meta["paar_max"]),
        )
    if meta["kind"] == "cql":
        return CqlAgent(
            q_params=nn.params_from_arrays(spec, arrays, "q_"),
            target_params=nn.params_from_arrays(spec, arrays, "t_"),
            obs_mean=arrays["obs_mean"],
            obs_std=arrays["obs_std"],
            paar_max=int(meta["paar_max"]),
            config=CqlConfig(
                alpha=meta["alpha"],
                gamma=meta["gamma"],
                target_sync_period=int(meta["target_sync_period"]),
                lr=meta["lr"],
                reward_scale=meta["reward_scale"],
            ),
        )
    raise ValidationError(f"unknown checkpoint kind {meta.get('kind')!r}")


# --- behavioral cloning ----------------------------------------------------


def bc_train(
    dataset: Dataset,
    spec: nn.NetSpec | None = None,
    train_config: TrainConfig | None = None,
    *,
    lr: float = 1e-3,
    paar_max: int = 16,
    eval_fn: Callable[[BcPolicy, int], tuple[float, float]] | None = None,
) -> tuple[BcPolicy, list[LogRow]]:
    """Minimize MSE between net outputs and normalized dataset rates."""
    if len(dataset) == 0:
        raise ValidationError("dataset is empty", field="dataset")
    cfg = train_config or TrainConfig()
    obs_dim = dataset.obs.shape[1]
    spec = spec or nn.NetSpec.dense((obs_dim, 64, 64, N_LOOKAHEAD))
    if spec.n_in != obs_dim or spec.n_out != N_LOOKAHEAD:
        raise ValidationError(f"spec must map {obs_dim} -> {N_LOOKAHEAD}")
    rng = np.random.default_rng(cfg.seed)
    params = nn.init_params(spec, rng)
    state = nn.adam_init(params)
    obs_norm = dataset.normalize(dataset.obs)
    targets = dataset.actions.astype(np.float64) / paar_max
    log: list[LogRow] = []
    for it in range(1, cfg.n_iter + 1):
        idx = rng.integers(0, len(dataset), size=cfg.batch_size)
        x, y = obs_norm[idx], targets[idx]
        out, cache = nn.forward(params, x)
        diff = out - y
        loss = float(np.mean(diff * diff))
        grads = nn.backward(params, cache, 2.0 * diff / diff.size)
        params, state = nn.adam_step(params, grads, state, lr)
        row = LogRow(iteration=it, train_loss=loss)
        if eval_fn is not None and it % cfg.eval_interval == 0:
            policy = BcPolicy(params, dataset.obs_mean, dataset.obs_std, paar_max)
            row.eval_mean, row.eval_std = eval_fn(policy, it)
        log.append(row)
    return BcPolicy(params, dataset.obs_mean, dataset.obs_std, paar_max), log


# --- conservative Q-learning -------------------------------------------------


@dataclass(frozen=True)
class TransitionBatch:
    obs: np.ndarray  # (B, obs_dim), already normalized
    actions: np.ndarray  # (B, 8) integer rates
    rewards: np.ndarray  # (B,)
    next_obs: np.ndarray  # (B, obs_dim), already normalized
    dones: np.ndarray  # (B,) bool


def _cql_terms(agent: CqlAgent, batch: TransitionBatch, *, want_grad: bool):
    b = batch.obs.shape[0]
    heads = np.arange(N_LOOKAHEAD)
    rows = np.arange(b)[:, None]

    out, cache = nn.forward(agent.q_params, batch.obs)
    q = out.reshape(b, N_LOOKAHEAD, agent.n_rates)
    q_next = agent.q_values(batch.next_obs, target=True).max(axis=2)
    not_done = 1.0 - batch.dones.astype(np.float64)
    y = batch.rewards[:, None] + agent.config.gamma * not_done[:, None] * q_next

    q_data = q[rows, heads[None, :], batch.actions]
    delta = q_data - y
    td_term = float(np.mean(delta * delta))

    q_max = q.max(axis=2, keepdims=True)
    exp_q = np.exp(q - q_max)
    lse = q_max[:, :, 0] + np.log(exp_q.sum(axis=2))
    conservative_term = float(np.mean(lse - q_data))

    alpha = agent.config.alpha
    loss = td_term if alpha == 0.0 else td_term + alpha * conservative_term

    if not want_grad:
        return loss, td_term, conservative_term, None

    denom = b * N_LOOKAHEAD
    g = np.zeros_like(q)
    g[rows, heads[None, :], batch.actions] = 2.0 * delta / denom
    if alpha != 0.0:
        softmax = exp_q / exp_q.sum(axis=2, keepdims=True)
        g += alpha * softmax / denom
        g[rows, heads[None, :], batch.actions] -= alpha / denom
    grads = nn.backward(agent.q_params, cache, g.reshape(b, -1))
    return loss, td_term, conservative_term, grads


def cql_loss(agent: CqlAgent, batch: TransitionBatch):
    """(loss, td_term, conservative_term) on one batch; no gradients."""
    loss, td, cons, _ = _cql_terms(agent, batch, want_grad=False)
    return loss, td, cons


def cql_train(
    dataset: Dataset,
    spec: nn.NetSpec | None = None,
    agent_config: CqlConfig | None = None,
    train_config: TrainConfig | None = None,
    *,
    paar_max: int = 16,
    eval_fn: Callable[[CqlAgent, int], tuple[float, float]] | None = None,
) -> tuple[CqlAgent, list[LogRow]]:
    """Minibatch gradient descent on the CQL objective with a periodic target copy."""
    if len(dataset) == 0:
        raise ValidationError("dataset is empty", field="dataset")
    acfg = agent_config or CqlConfig()
    cfg = train_config or TrainConfig()
    obs_dim = dataset.obs.shape[1]
    n_out = N_LOOKAHEAD * (paar_max + 1)
    spec = spec or nn.NetSpec.dense((obs_dim, 64, 64, n_out))
    if spec.n_in != obs_dim or spec.n_out != n_out:
        raise ValidationError(f"spec must map {obs_dim} -> {n_out}")
    rng = np.random.default_rng(cfg.seed)
    params = nn.init_params(spec, rng)
    agent = CqlAgent(
        q_params=params,
        target_params=params.copy(),
        obs_mean=dataset.obs_mean,
        obs_std=dataset.obs_std,
        paar_max=paar_max,
        config=acfg,
    )
    state = nn.adam_init(agent.q_params)
    obs_norm = dataset.normalize(dataset.obs)
    next_norm = dataset.normalize(dataset.next_obs)
    rewards = dataset.rewards * acfg.reward_scale
    log: list[LogRow] = []
    for it in range(1, cfg.n_iter + 1):
        idx = rng.integers(0, len(dataset), size=cfg.batch_size)
        batch = TransitionBatch(
            obs=obs_norm[idx],
            actions=dataset.actions[idx],
            rewards=rewards[idx],
            next_obs=next_norm[idx],
            dones=dataset.dones[idx],
        )
        loss, td, cons, grads = _cql_terms(agent, batch, want_grad=True)
        agent.q_params, state = nn.adam_step(agent.q_params, grads, state, acfg.lr)
        if it % acfg.target_sync_period == 0:
            agent.target_params = agent.q_params.copy()
        row = LogRow(iteration=it, train_loss=loss, td_term=td, conservative_term=cons)
        if eval_fn is not None and it % cfg.eval_interval == 0:
            row.eval_mean, row.eval_std = eval_fn(agent, it)
        log.append(row)
    return agent, log


# --- action selection, baselines, evaluation --------------------------------


def select_action(policy, obs: Observation) -> Action:
    """Greedy action of any policy object exposing .action(obs)."""
    return policy.action(obs)


@dataclass(frozen=True)
class BaselinePolicy:
    kind: str
    fn: Callable[[Observation], Action]

    def action(self, obs: Observation) -> Action:
        return self.fn(obs)


def baseline_policy(kind: str, param=None, *, env_config: EnvConfig | None = None) -> BaselinePolicy:
    """CONSTANT emits one fixed rate everywhere; ORACLE_CAPACITY matches capacity."""
    env_config = env_config or EnvConfig()
    kind = kind.upper()
    if kind == "CONSTANT":
        rate = int(param)
        if not (0 <= rate <= env_config.paar_max):
            raise ValidationError(
                f"constant rate {rate} outside 0..{env_config.paar_max}", field="param"
            )
        fixed = Action((rate,) * N_LOOKAHEAD)
        return BaselinePolicy("CONSTANT", lambda obs: fixed)
    if kind == "ORACLE_CAPACITY":
        return BaselinePolicy(
            "ORACLE_CAPACITY", lambda obs: scripted_expert(obs, env_config)
        )
    raise ValidationError(f"unknown baseline kind {kind!r}", field="kind")


class ExpertPolicy:
    """scripted_expert wrapped with the .action() policy interface."""

    def __init__(self, env_config: EnvConfig | None = None):
        self.env_config = env_config or EnvConfig()

    def action(self, obs: Observation) -> Action:
        return scripted_expert(obs, self.env_config)


def episode_seed(master_seed: int, index: int) -> int:
    """Stable per-episode scenario seed within a generator family."""
    return ((master_seed + 1) * 1_000_003 + index) % 2**63


@dataclass(frozen=True)
class EvalResult:
    mean: float
    std: float  # standard error of the mean-return estimate
    returns: np.ndarray


def rollout_return(env: SagdpEnv, policy, scenario: Scenario) -> float:
    obs = env.reset(scenario)
    total = 0.0
    done = False
    while not done:
        result = env.step(select_action(policy, obs))
        total += result.reward
        obs = result.obs
        done = result.done
    return total


def evaluate(
    policy,
    gen_config: GenConfig,
    eval_batch_size: int,
    seed: int,
    *,
    env_config: EnvConfig | None = None,
) -> EvalResult:
    """Greedy rollouts over freshly generated scenarios from one family.

    The reported std is the standard error of the mean estimate
    (sample std / sqrt(n)): the quantity the evaluation batch size shrinks.
    """
    if eval_batch_size < 1:
        raise ValidationError("eval_batch_size must be >= 1")
    env_config = env_config or EnvConfig()
    returns = np.empty(eval_batch_size)
    env: SagdpEnv | None = None
    for i in range(eval_batch_size):
        scenario = gen_scenario(replace(gen_config, seed=episode_seed(seed, i)))
        if env is None:
            env = SagdpEnv(scenario, env_config)
        returns[i] = rollout_return(env, policy, scenario)
    spread = float(returns.std(ddof=1)) if eval_batch_size > 1 else 0.0
    sem = spread / np.sqrt(eval_batch_size)
    return EvalResult(mean=float(returns.mean()), std=float(sem), returns=returns)
