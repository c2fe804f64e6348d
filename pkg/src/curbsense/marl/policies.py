"""Joint-action generation and the heuristic patrol policies.

Ordered generation commits one agent at a time: the remaining agent with
the highest greedy Q-value (or the lowest id) takes its action, the shared
violation-count plane loses the expected catch at the destination cell, the
partner planes move, and the rest re-evaluate. This is what stops two
symmetric agents from piling onto the same cell.
"""

from __future__ import annotations

import numpy as np

from ..patrol import (
    N_ACTIONS,
    STAY,
    GridSpec,
    WorldState,
    apply_action,
    feasible_actions,
)

NEG_INF = -1e18


def _encode(m_flat, positions, k, t, grid: GridSpec, zero_partners: bool) -> np.ndarray:
    n_cells = grid.n_cells
    vec = np.zeros(3 * n_cells + grid.t_steps)
    vec[:n_cells] = m_flat
    vec[n_cells + positions[k][0] * grid.n2 + positions[k][1]] = 1.0
    if not zero_partners:
        for a, cell in enumerate(positions):
            if a != k:
                vec[2 * n_cells + cell[0] * grid.n2 + cell[1]] += 1.0
    if t < grid.t_steps:
        vec[3 * n_cells + t] = 1.0
    return vec


def _masked_q(q_fn, states: np.ndarray, positions, grid: GridSpec) -> np.ndarray:
    """Q-values with off-grid actions masked out."""
    q = np.atleast_2d(np.asarray(q_fn(states), dtype=float)).copy()
    for r, cell in enumerate(positions):
        ok = feasible_actions(cell, grid)
        mask = np.full(N_ACTIONS, True)
        mask[ok] = False
        q[r, mask] = NEG_INF
    return q


def generate_joint_action(
    q_fn,
    world: WorldState,
    grid: GridSpec,
    epsilon: float,
    rng: np.random.Generator,
    order: str = "q_priority",
    catch_rate: float = 1.0,
    zero_m: bool = False,
    zero_partners: bool = False,
) -> list[int]:
    """Ordered epsilon-greedy joint action (one commit per loop iteration).

    ``q_fn`` maps a (batch, state_dim) array to (batch, 9) action values;
    ``order`` is "q_priority" or "agent_id". After each commit the expected
    catch min(catch_rate, M_cell) is subtracted from the destination cell
    and the committed agent's partner-plane position moves to its target.
    """
    if order not in ("q_priority", "agent_id"):
        raise ValueError(f"unknown order {order!r}")
    n = len(world.agents)
    m_hat = (
        np.zeros(grid.n_cells)
        if zero_m
        else world.board.counts.ravel().astype(float).copy()
    )
    positions = list(world.agents)
    actions = [STAY] * n
    remaining = list(range(n))
    while remaining:
        states = np.stack(
            [_encode(m_hat, positions, k, world.t, grid, zero_partners) for k in remaining]
        )
        q = _masked_q(q_fn, states, [positions[k] for k in remaining], grid)
        greedy = np.argmax(q, axis=1)
        values = q[np.arange(len(remaining)), greedy]
        row = int(np.argmax(values)) if order == "q_priority" else 0
        k_star = remaining[row]
        action = int(greedy[row])
        if rng.random() < epsilon:
            feas = feasible_actions(positions[k_star], grid)
            action = int(feas[rng.integers(len(feas))])
        dest, _ = apply_action(positions[k_star], action, grid)
        actions[k_star] = action
        positions[k_star] = dest
        cell_idx = dest[0] * grid.n2 + dest[1]
        m_hat[cell_idx] -= min(catch_rate, m_hat[cell_idx])
        remaining.pop(row)
    return actions


def simultaneous_actions(
    q_fn,
    world: WorldState,
    grid: GridSpec,
    epsilon: float,
    rng: np.random.Generator,
    zero_m: bool = False,
    zero_partners: bool = False,
) -> list[int]:
    """Every agent argmaxes its own state at once; no re-evaluation."""
    n = len(world.agents)
    m_flat = (
        np.zeros(grid.n_cells)
        if zero_m
        else world.board.counts.ravel().astype(float)
    )
    states = np.stack(
        [_encode(m_flat, world.agents, k, world.t, grid, zero_partners) for k in range(n)]
    )
    q = _masked_q(q_fn, states, world.agents, grid)
    actions = [int(a) for a in np.argmax(q, axis=1)]
    for k in range(n):
        if rng.random() < epsilon:
            feas = feasible_actions(world.agents[k], grid)
            actions[k] = int(feas[rng.integers(len(feas))])
    return actions


def joint_action_policy(
    q_fn,
    epsilon: float = 0.0,
    order: str = "q_priority",
    catch_rate: float = 1.0,
    zero_m: bool = False,
    zero_partners: bool = False,
):
    """Policy adapter: (world, grid, rng) -> joint action."""
    def policy(world, grid, rng):
        return generate_joint_action(
            q_fn, world, grid, epsilon, rng, order, catch_rate, zero_m, zero_partners
        )

    return policy


def simultaneous_policy(
    q_fn, epsilon: float = 0.0, zero_m: bool = False, zero_partners: bool = False
):
    def policy(world, grid, rng):
        return simultaneous_actions(q_fn, world, grid, epsilon, rng, zero_m, zero_partners)

    return policy


# -- heuristics ----------------------------------------------------------------

def _neighborhood(cell, grid: GridSpec):
    """(action, destination) pairs for the feasible 3x3 neighborhood."""
    return [(a, apply_action(cell, a, grid)[0]) for a in feasible_actions(cell, grid)]


def _greedy_actions(world: WorldState, grid: GridSpec, rng, epsilon: float) -> list[int]:
    counts = world.board.counts
    actions = []
    for cell in world.agents:
        if rng.random() < epsilon:
            feas = feasible_actions(cell, grid)
            actions.append(int(feas[rng.integers(len(feas))]))
            continue
        options = _neighborhood(cell, grid)
        # max violations; ties prefer staying, then the lowest cell index
        best = min(
            options,
            key=lambda ad: (
                -counts[ad[1]],
                0 if ad[0] == STAY else 1,
                ad[1][0] * grid.n2 + ad[1][1],
            ),
        )
        actions.append(best[0])
    return actions


def _softmax_actions(world: WorldState, grid: GridSpec, rng, tau: float) -> list[int]:
    counts = world.board.counts
    actions = []
    for cell in world.agents:
        options = _neighborhood(cell, grid)
        vals = np.array([counts[d] for _, d in options], dtype=float) / tau
        w = np.exp(vals - vals.max())
        p = w / w.sum()
        pick = rng.choice(len(options), p=p)
        actions.append(options[int(pick)][0])
    return actions


def baseline_policy(kind: str, q_fn=None, epsilon: float = 0.1, tau: float = 1.0):
    """random | greedy | softmax | independent_dqn policies."""
    if kind == "random":
        return lambda world, grid, rng: [int(rng.integers(N_ACTIONS)) for _ in world.agents]
    if kind == "greedy":
        return lambda world, grid, rng: _greedy_actions(world, grid, rng, epsilon)
    if kind == "softmax":
        return lambda world, grid, rng: _softmax_actions(world, grid, rng, tau)
    if kind == "independent_dqn":
        if q_fn is None:
            raise ValueError("independent_dqn needs a trained q_fn")
        return simultaneous_policy(q_fn, epsilon=0.0, zero_partners=True)
    raise ValueError(f"unknown policy kind {kind!r}")
