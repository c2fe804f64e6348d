"""DQN training loop: shared network, replay, target sync, joint actions."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ..errors import DataError
from ..patrol import PatrolEnv, encode_state
from .net import AdamState, QNet, adam_update, loss_and_grads, sync_target
from .policies import generate_joint_action, simultaneous_actions


class Experience(NamedTuple):
    s: np.ndarray
    a: int
    r: float
    s2: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self._items: list[Experience] = []
        self._cursor = 0

    def append(self, exp: Experience) -> None:
        if len(self._items) < self.capacity:
            self._items.append(exp)
        else:
            self._items[self._cursor] = exp
            self._cursor = (self._cursor + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._items)

    def sample(self, rng: np.random.Generator, k: int):
        if k > len(self._items):
            raise DataError(f"cannot sample {k} from buffer of {len(self._items)}")
        idx = rng.integers(0, len(self._items), size=k)
        s = np.stack([self._items[i].s for i in idx])
        a = np.array([self._items[i].a for i in idx], dtype=np.int64)
        r = np.array([self._items[i].r for i in idx])
        s2 = np.stack([self._items[i].s2 for i in idx])
        term = np.array([self._items[i].terminal for i in idx], dtype=bool)
        return s, a, r, s2, term


@dataclass
class TrainConfig:
    gamma: float = 0.99
    batch: int = 1024
    target_sync: int = 2048
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_fraction: float = 0.5      # of total env steps spent annealing
    buffer_capacity: int = 100_000
    episodes: int = 60
    lr: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    hidden: tuple = (256, 128, 32)
    seed: int = 0
    divergence_loss: float = 1e6
    divergence_patience: int = 100


def td_targets(batch, target_net: QNet, gamma: float) -> np.ndarray:
    """r + gamma * max_a Q_target(s', a); terminal transitions use r alone."""
    rewards, next_states, terminals = batch
    if len(rewards) == 0:
        raise DataError("empty batch")
    q2 = target_net.forward(next_states).max(axis=1)
    return rewards + gamma * q2 * (~np.asarray(terminals, dtype=bool))


def train_step(
    net: QNet,
    target_net: QNet,
    buffer: ReplayBuffer,
    adam: AdamState,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> float:
    s, a, r, s2, term = buffer.sample(rng, cfg.batch)
    targets = td_targets((r, s2, term), target_net, cfg.gamma)
    loss, gw, gb = loss_and_grads(net, s, a, targets)
    adam_update(net, gw, gb, adam)
    return loss


def linear_epsilon(step: int, total_steps: int, cfg: TrainConfig) -> float:
    horizon = max(1, int(total_steps * cfg.eps_fraction))
    frac = min(1.0, step / horizon)
    return cfg.eps_start + (cfg.eps_end - cfg.eps_start) * frac


@dataclass
class TrainResult:
    net: QNet
    curve: list[tuple]  # (episode, reward, n_tot, mean_loss, epsilon)
    train_steps: int
    config: TrainConfig = field(repr=False, default=None)


def _masked_encode(world, k, grid, zero_m: bool, zero_partners: bool) -> np.ndarray:
    vec = encode_state(world, k, grid)
    c = grid.n_cells
    if zero_m:
        vec[:c] = 0.0
    if zero_partners:
        vec[2 * c : 3 * c] = 0.0
    return vec


def train(
    env: PatrolEnv,
    cfg: TrainConfig,
    order: str = "q_priority",
    simultaneous: bool = False,
    zero_m: bool = False,
    zero_partners: bool = False,
    catch_rate: float | None = None,
) -> TrainResult:
    """Run Alg.-style episodes and fit the shared Q-network.

    Experiences are stored per agent with the same state view the acting
    policy used (violation or partner planes zeroed for the ablations).
    Aborts if the loss stays above the divergence ceiling for too long.
    """
    grid = env.grid
    state_dim = grid.state_dim
    net = QNet.create([state_dim, *cfg.hidden, 9], seed=cfg.seed)
    target = net.clone()
    adam = AdamState.for_net(net, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)
    buffer = ReplayBuffer(cfg.buffer_capacity)
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(909,)))
    if catch_rate is None:
        catch_rate = (
            env.cfg.fixed_capacity if env.cfg.fixed_capacity is not None else env.cfg.lambda_p
        )

    total_env_steps = cfg.episodes * grid.t_steps
    env_step = 0
    train_steps = 0
    diverged_run = 0
    curve = []
    for ep in range(cfg.episodes):
        world = env.reset(ep)
        ep_reward = 0
        losses = []
        eps = cfg.eps_start
        for _t in range(grid.t_steps):
            eps = linear_epsilon(env_step, total_env_steps, cfg)
            states = [
                _masked_encode(world, k, grid, zero_m, zero_partners)
                for k in range(env.n_agents)
            ]
            if simultaneous:
                actions = simultaneous_actions(
                    net.forward, world, grid, eps, rng, zero_m, zero_partners
                )
            else:
                actions = generate_joint_action(
                    net.forward, world, grid, eps, rng, order, catch_rate,
                    zero_m, zero_partners,
                )
            world, rewards, done = env.step_actions(actions)
            for k in range(env.n_agents):
                s2 = (
                    np.zeros(state_dim)
                    if done
                    else _masked_encode(world, k, grid, zero_m, zero_partners)
                )
                buffer.append(Experience(states[k], actions[k], float(rewards[k]), s2, done))
            ep_reward += sum(rewards)
            env_step += 1
            if len(buffer) >= cfg.batch:
                train_steps += 1
                loss = train_step(net, target, buffer, adam, cfg, rng)
                losses.append(loss)
                if loss > cfg.divergence_loss:
                    diverged_run += 1
                    if diverged_run >= cfg.divergence_patience:
                        raise RuntimeError(
                            f"training diverged: loss > {cfg.divergence_loss} "
                            f"for {diverged_run} consecutive steps"
                        )
                else:
                    diverged_run = 0
                sync_target(net, target, train_steps, cfg.target_sync)
        mean_loss = float(np.mean(losses)) if losses else float("nan")
        curve.append((ep, ep_reward, world.n_tot, mean_loss, eps))
    return TrainResult(net, curve, train_steps, cfg)
