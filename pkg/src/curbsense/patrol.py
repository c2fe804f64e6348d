"""Grid-world patrol MDP driven by per-step road activity indicators.

The urban region is cut into n1 x n2 cells over 10-minute steps. Each step
the board is rebuilt from the activity indicators (so a processed road can
reappear while its indicator stays on), movers relocate for the whole step,
and stayers remove a Poisson-limited number of events from their cell.
Everything is deterministic given (seed, policy, eta stream).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, FormatError
from .geo import RoadNetwork

logger = logging.getLogger(__name__)

# action 0 = stay and process; 1..8 = move to the 8-neighborhood, row-major
ACTION_OFFSETS = [
    (0, 0),
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
]
N_ACTIONS = 9
STAY = 0


@dataclass
class GridSpec:
    n1: int
    n2: int
    cell_m: float = 500.0
    t_steps: int = 102          # 6:30 AM - 11:30 PM in 10-minute steps
    step_minutes: int = 10
    origin: tuple[float, float] = (0.0, 0.0)  # local-frame (x, y) of cell (0, 0)

    @property
    def n_cells(self) -> int:
        return self.n1 * self.n2

    @property
    def state_dim(self) -> int:
        return 3 * self.n1 * self.n2 + self.t_steps

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        i = int((y - self.origin[1]) // self.cell_m)
        j = int((x - self.origin[0]) // self.cell_m)
        ci = min(max(i, 0), self.n1 - 1)
        cj = min(max(j, 0), self.n2 - 1)
        if (ci, cj) != (i, j):
            logger.warning("point (%.1f, %.1f) outside grid, clamped to %s", x, y, (ci, cj))
        return ci, cj


def grid_for_network(
    net: RoadNetwork, cell_m: float = 500.0, t_steps: int = 102, step_minutes: int = 10
) -> GridSpec:
    xs = [p.x for p in net.nodes.values()]
    ys = [p.y for p in net.nodes.values()]
    n2 = max(1, int(np.ceil((max(xs) - min(xs)) / cell_m + 1e-9)))
    n1 = max(1, int(np.ceil((max(ys) - min(ys)) / cell_m + 1e-9)))
    return GridSpec(n1, n2, cell_m, t_steps, step_minutes, origin=(min(xs), min(ys)))


@dataclass
class SimConfig:
    lambda_p: float = 1.0        # expected events processed per full step
    t_mv_minutes: float = 2.0
    cooldown_steps: int = 0      # 0 keeps the literal refresh-every-step rule
    move_then_process: bool = False
    fixed_capacity: int | None = None  # deterministic stand-in for the Poisson draw

    def __post_init__(self):
        if self.lambda_p <= 0:
            raise ValueError("lambda_p must be positive")


@dataclass
class EventBoard:
    active: dict[tuple[int, int], set[str]]
    counts: np.ndarray  # M matrix, shape (n1, n2)

    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class WorldState:
    t: int
    board: EventBoard
    agents: list[tuple[int, int]]
    catches: list[int]
    n_tot: int
    cooldowns: dict[str, int] = field(default_factory=dict)


def segment_cells(net: RoadNetwork, grid: GridSpec) -> dict[str, tuple[int, int]]:
    """Grid cell containing each segment's midpoint."""
    out = {}
    for seg_id, seg in net.segments.items():
        mid = seg.geom.locate(seg.length / 2.0, 0.0)
        out[seg_id] = grid.cell_of(mid.x, mid.y)
    return out


def map_events(
    eta: set[str],
    net: RoadNetwork,
    grid: GridSpec,
    seg_cells: dict[str, tuple[int, int]] | None = None,
) -> EventBoard:
    """Board from the active-road indicator set; M mirrors the cell sets."""
    cells = seg_cells if seg_cells is not None else segment_cells(net, grid)
    active: dict[tuple[int, int], set[str]] = {}
    counts = np.zeros((grid.n1, grid.n2), dtype=np.int64)
    for seg_id in eta:
        cell = cells[seg_id]
        active.setdefault(cell, set()).add(seg_id)
        counts[cell] += 1
    return EventBoard(active, counts)


def encode_state(world: WorldState, k: int, grid: GridSpec) -> np.ndarray:
    """[flattened M | own one-hot | partner counts | time one-hot]."""
    own = np.zeros(grid.n_cells)
    own[world.agents[k][0] * grid.n2 + world.agents[k][1]] = 1.0
    partners = np.zeros(grid.n_cells)
    for a, cell in enumerate(world.agents):
        if a != k:
            partners[cell[0] * grid.n2 + cell[1]] += 1.0
    time_oh = np.zeros(grid.t_steps)
    time_oh[world.t] = 1.0
    return np.concatenate([world.board.counts.ravel().astype(float), own, partners, time_oh])


def apply_action(cell: tuple[int, int], action: int, grid: GridSpec) -> tuple[tuple[int, int], bool]:
    """(new cell, moved); off-grid moves degrade to stay."""
    di, dj = ACTION_OFFSETS[action]
    if action == STAY:
        return cell, False
    ni, nj = cell[0] + di, cell[1] + dj
    if 0 <= ni < grid.n1 and 0 <= nj < grid.n2:
        return (ni, nj), True
    logger.warning("agent action %d off-grid from %s, treated as stay", action, cell)
    return cell, False


def feasible_actions(cell: tuple[int, int], grid: GridSpec) -> list[int]:
    out = [STAY]
    for a in range(1, N_ACTIONS):
        di, dj = ACTION_OFFSETS[a]
        if 0 <= cell[0] + di < grid.n1 and 0 <= cell[1] + dj < grid.n2:
            out.append(a)
    return out


def refresh_board(world: WorldState, eta_t: set[str], net, grid, seg_cells, cfg: SimConfig) -> EventBoard:
    if cfg.cooldown_steps > 0 and world.cooldowns:
        eta_t = {s for s in eta_t if world.cooldowns.get(s, -1) < world.t}
    return map_events(eta_t, net, grid, seg_cells)


def step(
    world: WorldState,
    joint_action: list[int],
    eta_t: set[str],
    net: RoadNetwork,
    grid: GridSpec,
    cfg: SimConfig,
    rng: np.random.Generator,
    seg_cells: dict[str, tuple[int, int]] | None = None,
) -> tuple[WorldState, list[int]]:
    """One simulator transition; returns (next world, per-agent rewards).

    Board refresh from eta_t, movers relocate with zero reward, stayers in
    agent-id order draw their processing capacity and remove random events
    from their cell's shared pool, then the step counter advances.
    """
    if world.t >= grid.t_steps:
        raise DataError("episode already finished")
    cells = seg_cells if seg_cells is not None else segment_cells(net, grid)
    board = refresh_board(world, eta_t, net, grid, cells, cfg)
    n_tot = world.n_tot + board.total()

    agents = list(world.agents)
    moved = [False] * len(agents)
    rewards = [0] * len(agents)
    for k, action in enumerate(joint_action):
        agents[k], moved[k] = apply_action(agents[k], action, grid)

    cooldowns = dict(world.cooldowns)
    for k in range(len(agents)):
        if moved[k] and not cfg.move_then_process:
            continue
        frac = 1.0
        if moved[k]:
            frac = max(0.0, 1.0 - cfg.t_mv_minutes / grid.step_minutes)
        if cfg.fixed_capacity is not None:
            n_k = cfg.fixed_capacity
        else:
            n_k = int(rng.poisson(cfg.lambda_p * frac))
        pool = board.active.get(agents[k])
        if not pool or n_k <= 0:
            continue
        take = min(n_k, len(pool))
        items = sorted(pool)
        picked = rng.choice(len(items), size=take, replace=False) if take < len(items) else np.arange(take)
        removed = [items[int(x)] for x in picked]
        for seg_id in removed:
            pool.discard(seg_id)
            board.counts[agents[k]] -= 1
            if cfg.cooldown_steps > 0:
                cooldowns[seg_id] = world.t + cfg.cooldown_steps
        rewards[k] = len(removed)
        if not pool:
            board.active.pop(agents[k], None)

    catches = [c + r for c, r in zip(world.catches, rewards)]
    return (
        WorldState(world.t + 1, board, agents, catches, n_tot, cooldowns),
        rewards,
    )


def initial_world(n_agents: int, grid: GridSpec, starts=None) -> WorldState:
    agents = list(starts) if starts else default_starts(grid, n_agents)
    board = EventBoard({}, np.zeros((grid.n1, grid.n2), dtype=np.int64))
    return WorldState(0, board, agents, [0] * n_agents, 0)


def default_starts(grid: GridSpec, n_agents: int) -> list[tuple[int, int]]:
    """Spread agents evenly over the cells in row-major order."""
    out = []
    for k in range(n_agents):
        idx = (k * grid.n_cells) // max(1, n_agents)
        out.append((idx // grid.n2, idx % grid.n2))
    return out


@dataclass
class EpisodeResult:
    n_catch: int
    n_tot: int
    catches: list[int]
    trace: list[tuple]  # (step, agent, action, reward, cell_i, cell_j)


class PatrolEnv:
    """Episode driver: keeps the board the policy sees refreshed for the
    current step, feeds the simulator, and manages per-episode RNG."""

    def __init__(
        self,
        net: RoadNetwork,
        grid: GridSpec,
        cfg: SimConfig,
        eta_source,
        n_agents: int,
        starts=None,
        base_seed: int = 0,
    ):
        self.net = net
        self.grid = grid
        self.cfg = cfg
        self.eta_source = eta_source  # callable(episode) -> list[set[seg_id]]
        self.n_agents = n_agents
        self.starts = starts
        self.base_seed = base_seed
        self.seg_cells = segment_cells(net, grid)
        self.rng: np.random.Generator | None = None
        self.world: WorldState | None = None
        self._eta: list[set[str]] = []

    def _eta_at(self, t: int) -> set[str]:
        return self._eta[t] if t < len(self._eta) else set()

    def _stage(self) -> None:
        w = self.world
        board = refresh_board(w, self._eta_at(w.t), self.net, self.grid, self.seg_cells, self.cfg)
        self.world = WorldState(w.t, board, w.agents, w.catches, w.n_tot, w.cooldowns)

    def reset(self, episode: int = 0) -> WorldState:
        self.rng = np.random.default_rng(
            np.random.SeedSequence(self.base_seed, spawn_key=(episode,))
        )
        self._eta = self.eta_source(episode)
        self.world = initial_world(self.n_agents, self.grid, self.starts)
        self._stage()
        return self.world

    def step_actions(self, actions: list[int]) -> tuple[WorldState, list[int], bool]:
        t = self.world.t
        self.world, rewards = step(
            self.world, actions, self._eta_at(t), self.net, self.grid,
            self.cfg, self.rng, self.seg_cells,
        )
        done = self.world.t >= self.grid.t_steps
        if not done:
            self._stage()
        return self.world, rewards, done


def run_episode(
    policy,
    eta_stream: list[set[str]],
    net: RoadNetwork,
    grid: GridSpec,
    cfg: SimConfig,
    n_agents: int,
    seed: int = 0,
    starts=None,
) -> EpisodeResult:
    """Roll one episode; ``policy(world, grid, rng) -> joint action list``.

    The policy always sees the board already refreshed for the current step.
    """
    env = PatrolEnv(net, grid, cfg, lambda _ep: eta_stream, n_agents, starts, seed)
    world = env.reset(0)
    trace = []
    for t in range(grid.t_steps):
        actions = policy(world, grid, env.rng)
        world, rewards, _done = env.step_actions(actions)
        for k, (a, r) in enumerate(zip(actions, rewards)):
            trace.append((t, k, a, r, world.agents[k][0], world.agents[k][1]))
    return EpisodeResult(sum(world.catches), world.n_tot, world.catches, trace)


# -- eta stream file -----------------------------------------------------------
# `H <step> <seg_id> <0|1>`; absent rows default to 0.

def save_eta(stream: list[set[str]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for t, active in enumerate(stream):
            for seg_id in sorted(active):
                fh.write(f"H {t} {seg_id} 1\n")


def load_eta(path, t_steps: int | None = None) -> list[set[str]]:
    rows: dict[int, set[str]] = {}
    max_step = -1
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 4 or parts[0] != "H" or parts[3] not in ("0", "1"):
                raise FormatError(path, line_no, "expected: H <step> <seg_id> <0|1>")
            t = int(parts[1])
            max_step = max(max_step, t)
            if parts[3] == "1":
                rows.setdefault(t, set()).add(parts[2])
    n = t_steps if t_steps is not None else max_step + 1
    return [rows.get(t, set()) for t in range(n)]


def write_trace_csv(result: EpisodeResult, path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "agent", "action", "reward", "cell_i", "cell_j"])
        for row in result.trace:
            w.writerow(row)
