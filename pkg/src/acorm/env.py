"""RoleArena: a deterministic, seeded grid-combat Dec-POMDP.

A team of heterogeneous ally units (controlled by the learner) fights a
scripted enemy team on a small grid.  Distances and ranges are Chebyshev.
All dynamics are deterministic given the config and the action sequence;
the episode seed is recorded for bookkeeping but the environment itself
draws no random numbers.

Step resolution order:

1. Ally moves, in agent-index order; a move into an occupied cell is a no-op.
2. Ally attacks and heals resolve simultaneously against pre-step positions
   (heals are applied at the end of this phase).
3. Scripted enemies act in enemy-index order: attack the nearest living ally
   in range (ties to the lowest ally index), otherwise step one cell toward
   the nearest living ally, reducing the larger coordinate gap first with
   ties preferring x; blocked enemy moves are no-ops.
4. All accumulated damage lands and deaths are applied.  Units reduced to
   zero hp still acted this step (mutual kills are possible).

Reward per step: 0.05 * (enemy hp removed / total enemy max hp) * 20,
plus 2.0 per enemy killed, plus 20.0 on a win, minus a 0.02 living penalty.
The episode terminates on win (all enemies dead -- checked first), loss
(all allies dead), or when the step count reaches ``episode_limit``.

Trace export is line-delimited JSON (see ``TraceWriter``), schema
``rolearena-trace/v1``: one header record with the config followed by one
record per step with fields (t, positions, healths, joint_action, reward,
terminated, won).
"""

import json
from dataclasses import dataclass, field

import numpy as np

# move deltas in (row, col); x is the column axis, y the row axis
STAY, UP, DOWN, LEFT, RIGHT = 0, 1, 2, 3, 4
_MOVE_DELTAS = {UP: (-1, 0), DOWN: (1, 0), LEFT: (0, -1), RIGHT: (0, 1)}

DAMAGE_REWARD_SCALE = 0.05
DAMAGE_REWARD_GAIN = 20.0
KILL_REWARD = 2.0
WIN_REWARD = 20.0
STEP_PENALTY = 0.02

TRACE_SCHEMA = "rolearena-trace/v1"


@dataclass(frozen=True)
class UnitClass:
    name: str
    max_health: int
    attack_power: int
    attack_range: int
    heal_power: int = 0
    move_speed: int = 1


HEAVY = UnitClass("HEAVY", max_health=12, attack_power=3, attack_range=1)
STRIKER = UnitClass("STRIKER", max_health=6, attack_power=2, attack_range=2)
HEALER = UnitClass("HEALER", max_health=6, attack_power=0, attack_range=2, heal_power=2)
ENEMY_GRUNT = UnitClass("ENEMY_GRUNT", max_health=6, attack_power=2, attack_range=1)
ENEMY_BRUTE = UnitClass("ENEMY_BRUTE", max_health=12, attack_power=3, attack_range=1)

CLASSES = [HEAVY, STRIKER, HEALER, ENEMY_GRUNT, ENEMY_BRUTE]
_CLASS_INDEX = {c.name: i for i, c in enumerate(CLASSES)}
_CLASS_BY_NAME = {c.name: c for c in CLASSES}


@dataclass
class EnvConfig:
    grid_size: int = 8
    ally_roster: list = field(
        default_factory=lambda: [HEAVY, HEAVY, STRIKER, STRIKER, STRIKER, HEALER]
    )
    enemy_roster: list = field(
        default_factory=lambda: [ENEMY_GRUNT, ENEMY_GRUNT, ENEMY_GRUNT, ENEMY_GRUNT,
                                 ENEMY_BRUTE, ENEMY_BRUTE]
    )
    sight_range: int = 4
    episode_limit: int = 60
    seed: int = 0

    def validate(self):
        if self.grid_size < 1:
            raise ValueError("grid_size must be positive")
        if len(self.ally_roster) < 2:
            raise ValueError("ally_roster must contain at least 2 units")
        if len(self.enemy_roster) < 1:
            raise ValueError("enemy_roster must contain at least 1 unit")
        if not (1 <= self.sight_range <= self.grid_size):
            raise ValueError("sight_range must satisfy 1 <= sight_range <= grid_size")
        if self.episode_limit < 1:
            raise ValueError("episode_limit must be positive")
        for c in self.ally_roster:
            if c.name.startswith("ENEMY"):
                raise ValueError(f"ally roster contains enemy class {c.name}")
            if not ((c.attack_power > 0) ^ (c.heal_power > 0)):
                raise ValueError(f"ally class {c.name} must attack xor heal")
        for c in self.enemy_roster:
            if c.heal_power != 0:
                raise ValueError(f"enemy class {c.name} must have heal_power 0")
        # two spawn columns per side
        if len(self.ally_roster) > 2 * self.grid_size:
            raise ValueError("ally roster does not fit the two spawn columns")
        if len(self.enemy_roster) > 2 * self.grid_size:
            raise ValueError("enemy roster does not fit the two spawn columns")

    def to_dict(self):
        return {
            "grid_size": self.grid_size,
            "ally_roster": [c.name for c in self.ally_roster],
            "enemy_roster": [c.name for c in self.enemy_roster],
            "sight_range": self.sight_range,
            "episode_limit": self.episode_limit,
            "seed": self.seed,
        }

    @staticmethod
    def from_dict(d):
        return EnvConfig(
            grid_size=d["grid_size"],
            ally_roster=[_CLASS_BY_NAME[n] for n in d["ally_roster"]],
            enemy_roster=[_CLASS_BY_NAME[n] for n in d["enemy_roster"]],
            sight_range=d["sight_range"],
            episode_limit=d["episode_limit"],
            seed=d.get("seed", 0),
        )


def default_config(seed=0):
    """2 HEAVY + 3 STRIKER + 1 HEALER vs 4 GRUNT + 2 BRUTE on an 8x8 grid."""
    return EnvConfig(seed=seed)


def easy_config(seed=0):
    """Smoke-test preset: 3 STRIKERs vs 2 GRUNTs on a 6x6 grid."""
    return EnvConfig(
        grid_size=6,
        ally_roster=[STRIKER, STRIKER, STRIKER],
        enemy_roster=[ENEMY_GRUNT, ENEMY_GRUNT],
        seed=seed,
    )


PRESETS = {"default": default_config, "easy": easy_config}


@dataclass
class StepResult:
    observations: np.ndarray  # (n_agents, obs_dim)
    state: np.ndarray  # (state_dim,)
    reward: float
    terminated: bool
    won: bool
    available_actions: np.ndarray  # (n_agents, n_actions) bool


class RoleArena:
    """Single-threaded environment instance; run copies in parallel instead."""

    def __init__(self, config: EnvConfig):
        config.validate()
        self.cfg = config
        self.n_agents = len(config.ally_roster)
        self.n_enemies = len(config.enemy_roster)
        self.n_actions = 5 + self.n_enemies + self.n_agents
        self.obs_dim = 8 + 9 * (self.n_agents - 1) + 9 * self.n_enemies
        self.state_dim = 8 * (self.n_agents + self.n_enemies) + 1
        self.total_enemy_max_hp = sum(c.max_health for c in config.enemy_roster)
        self._started = False

    # -- lifecycle ----------------------------------------------------------

    def reset(self, episode_seed=0) -> StepResult:
        g = self.cfg.grid_size
        self.episode_seed = int(episode_seed)
        self.t = 0
        self.terminated = False
        self.won = False
        # allies fill (row, col) over cols {0,1} row-major; enemies mirror
        # from the right edge, so ally 0 sits at (0,0) and enemy 0 at (0,g-1)
        self.ally_pos = []
        for i, _ in enumerate(self.cfg.ally_roster):
            self.ally_pos.append((i // 2, i % 2))
        self.enemy_pos = []
        for j, _ in enumerate(self.cfg.enemy_roster):
            self.enemy_pos.append((j // 2, g - 1 - (j % 2)))
        self.ally_hp = [c.max_health for c in self.cfg.ally_roster]
        self.enemy_hp = [c.max_health for c in self.cfg.enemy_roster]
        self._started = True
        return StepResult(
            observations=self._observations(),
            state=self._state(),
            reward=0.0,
            terminated=False,
            won=False,
            available_actions=self._masks(),
        )

    # -- action space -------------------------------------------------------

    def available_actions(self, agent_index) -> np.ndarray:
        if not (0 <= agent_index < self.n_agents):
            raise ValueError(f"agent index {agent_index} out of range")
        mask = np.zeros(self.n_actions, dtype=bool)
        mask[STAY] = True
        if self.ally_hp[agent_index] <= 0:
            return mask
        cls = self.cfg.ally_roster[agent_index]
        r, c = self.ally_pos[agent_index]
        g = self.cfg.grid_size
        for a, (dr, dc) in _MOVE_DELTAS.items():
            if 0 <= r + dr < g and 0 <= c + dc < g:
                mask[a] = True
        for j in range(self.n_enemies):
            if self.enemy_hp[j] > 0 and self._cheb(self.ally_pos[agent_index], self.enemy_pos[j]) <= cls.attack_range:
                mask[5 + j] = True
        if cls.heal_power > 0:
            for i in range(self.n_agents):
                if (
                    self.ally_hp[i] > 0
                    and self.ally_hp[i] < self.cfg.ally_roster[i].max_health
                    and self._cheb(self.ally_pos[agent_index], self.ally_pos[i]) <= cls.attack_range
                ):
                    mask[5 + self.n_enemies + i] = True
        return mask

    def _masks(self):
        return np.stack([self.available_actions(i) for i in range(self.n_agents)])

    # -- dynamics -----------------------------------------------------------

    def step(self, joint_action) -> StepResult:
        if not self._started:
            raise RuntimeError("step() before reset()")
        if self.terminated:
            raise RuntimeError("step() after termination")
        joint_action = [int(a) for a in joint_action]
        if len(joint_action) != self.n_agents:
            raise ValueError(f"expected {self.n_agents} actions, got {len(joint_action)}")
        masks = self._masks()
        for i, a in enumerate(joint_action):
            if not (0 <= a < self.n_actions) or not masks[i, a]:
                raise ValueError(f"agent {i}: action {a} unavailable")

        pre_enemy_hp = list(self.enemy_hp)

        # phase 1: ally moves, sequential in agent order
        occupied = {p for i, p in enumerate(self.ally_pos) if self.ally_hp[i] > 0}
        occupied |= {p for j, p in enumerate(self.enemy_pos) if self.enemy_hp[j] > 0}
        for i, a in enumerate(joint_action):
            if self.ally_hp[i] <= 0 or a not in _MOVE_DELTAS:
                continue
            dr, dc = _MOVE_DELTAS[a]
            r, c = self.ally_pos[i]
            dest = (r + dr, c + dc)
            if dest not in occupied:
                occupied.discard((r, c))
                occupied.add(dest)
                self.ally_pos[i] = dest

        # phase 2: ally attacks and heals, simultaneous vs pre-step positions
        enemy_dmg = [0] * self.n_enemies
        ally_dmg = [0] * self.n_agents
        for i, a in enumerate(joint_action):
            if self.ally_hp[i] <= 0:
                continue
            cls = self.cfg.ally_roster[i]
            if 5 <= a < 5 + self.n_enemies:
                enemy_dmg[a - 5] += cls.attack_power
            elif a >= 5 + self.n_enemies:
                target = a - 5 - self.n_enemies
                self.ally_hp[target] = min(
                    self.cfg.ally_roster[target].max_health,
                    self.ally_hp[target] + cls.heal_power,
                )

        # phase 3: scripted enemies, sequential in enemy order
        living = [i for i in range(self.n_agents) if self.ally_hp[i] > 0]
        for j in range(self.n_enemies):
            if self.enemy_hp[j] <= 0 or not living:
                continue
            cls = self.cfg.enemy_roster[j]
            dists = [self._cheb(self.enemy_pos[j], self.ally_pos[i]) for i in living]
            best = min(range(len(living)), key=lambda k: (dists[k], living[k]))
            target, d = living[best], dists[best]
            if d <= cls.attack_range:
                ally_dmg[target] += cls.attack_power
            else:
                er, ec = self.enemy_pos[j]
                tr, tc = self.ally_pos[target]
                dr, dc = tr - er, tc - ec
                if abs(dc) >= abs(dr):  # larger gap first, ties prefer x
                    dest = (er, ec + (1 if dc > 0 else -1))
                else:
                    dest = (er + (1 if dr > 0 else -1), ec)
                if dest not in occupied:
                    occupied.discard((er, ec))
                    occupied.add(dest)
                    self.enemy_pos[j] = dest

        # phase 4: damage lands, deaths applied
        for i in range(self.n_agents):
            if ally_dmg[i] > 0:
                self.ally_hp[i] = max(0, self.ally_hp[i] - ally_dmg[i])
        kills = 0
        for j in range(self.n_enemies):
            if enemy_dmg[j] > 0:
                self.enemy_hp[j] = max(0, self.enemy_hp[j] - enemy_dmg[j])
                if pre_enemy_hp[j] > 0 and self.enemy_hp[j] == 0:
                    kills += 1
        hp_removed = sum(pre_enemy_hp) - sum(self.enemy_hp)

        self.t += 1
        won = all(hp <= 0 for hp in self.enemy_hp)
        lost = all(hp <= 0 for hp in self.ally_hp)
        if won:
            self.terminated, self.won = True, True
        elif lost or self.t >= self.cfg.episode_limit:
            self.terminated, self.won = True, False

        reward = (
            DAMAGE_REWARD_SCALE * (hp_removed / self.total_enemy_max_hp) * DAMAGE_REWARD_GAIN
            + KILL_REWARD * kills
            - STEP_PENALTY
        )
        if won:
            reward += WIN_REWARD

        return StepResult(
            observations=self._observations(),
            state=self._state(),
            reward=reward,
            terminated=self.terminated,
            won=self.won,
            available_actions=self._masks(),
        )

    # -- views --------------------------------------------------------------

    @staticmethod
    def _cheb(a, b):
        return max(abs(a[0] - b[0]), abs(a[1] - b[1]))

    def _unit_onehot(self, cls):
        v = np.zeros(len(CLASSES))
        v[_CLASS_INDEX[cls.name]] = 1.0
        return v

    def _observations(self):
        return np.stack([self._observe(i) for i in range(self.n_agents)])

    def _observe(self, i):
        obs = np.zeros(self.obs_dim)
        if self.ally_hp[i] <= 0:
            return obs
        g1 = max(self.cfg.grid_size - 1, 1)
        sight = self.cfg.sight_range
        r, c = self.ally_pos[i]
        cls = self.cfg.ally_roster[i]
        obs[0] = self.ally_hp[i] / cls.max_health
        obs[1] = c / g1  # x
        obs[2] = r / g1  # y
        obs[3:8] = self._unit_onehot(cls)
        k = 8
        for j in range(self.n_agents):
            if j == i:
                continue
            if self.ally_hp[j] > 0 and self._cheb((r, c), self.ally_pos[j]) <= sight:
                jr, jc = self.ally_pos[j]
                obs[k] = 1.0
                obs[k + 1] = (jc - c) / sight
                obs[k + 2] = (jr - r) / sight
                obs[k + 3] = self.ally_hp[j] / self.cfg.ally_roster[j].max_health
                obs[k + 4 : k + 9] = self._unit_onehot(self.cfg.ally_roster[j])
            k += 9
        for j in range(self.n_enemies):
            if self.enemy_hp[j] > 0 and self._cheb((r, c), self.enemy_pos[j]) <= sight:
                jr, jc = self.enemy_pos[j]
                obs[k] = 1.0
                obs[k + 1] = (jc - c) / sight
                obs[k + 2] = (jr - r) / sight
                obs[k + 3] = self.enemy_hp[j] / self.cfg.enemy_roster[j].max_health
                obs[k + 4 : k + 9] = self._unit_onehot(self.cfg.enemy_roster[j])
            k += 9
        return obs

    def _state(self):
        g1 = max(self.cfg.grid_size - 1, 1)
        state = np.zeros(self.state_dim)
        k = 0
        units = [
            (self.cfg.ally_roster[i], self.ally_pos[i], self.ally_hp[i])
            for i in range(self.n_agents)
        ] + [
            (self.cfg.enemy_roster[j], self.enemy_pos[j], self.enemy_hp[j])
            for j in range(self.n_enemies)
        ]
        for cls, (r, c), hp in units:
            if hp > 0:
                state[k] = hp / cls.max_health
                state[k + 1] = c / g1
                state[k + 2] = r / g1
            state[k + 3 : k + 8] = self._unit_onehot(cls)
            k += 8
        state[k] = self.t / self.cfg.episode_limit
        return state

    def render_text(self):
        """ASCII grid snapshot: allies a0..  enemies E0.., '.' empty."""
        g = self.cfg.grid_size
        grid = [["." for _ in range(g)] for _ in range(g)]
        for i, (r, c) in enumerate(self.ally_pos):
            if self.ally_hp[i] > 0:
                grid[r][c] = f"a{i}"
        for j, (r, c) in enumerate(self.enemy_pos):
            if self.enemy_hp[j] > 0:
                grid[r][c] = f"E{j}"
        return "\n".join(" ".join(f"{cell:>2}" for cell in row) for row in grid)


class TraceWriter:
    """Line-delimited JSON trace, one record per step plus a header."""

    def __init__(self, path, config: EnvConfig):
        self.fh = open(path, "w")
        header = {"record": "header", "schema": TRACE_SCHEMA, "config": config.to_dict()}
        self.fh.write(json.dumps(header) + "\n")

    def write_step(self, env: RoleArena, joint_action, result: StepResult):
        rec = {
            "record": "step",
            "t": env.t,
            "positions": {
                "allies": [list(p) for p in env.ally_pos],
                "enemies": [list(p) for p in env.enemy_pos],
            },
            "healths": {"allies": list(env.ally_hp), "enemies": list(env.enemy_hp)},
            "joint_action": [int(a) for a in joint_action],
            "reward": result.reward,
            "terminated": result.terminated,
            "won": result.won,
        }
        self.fh.write(json.dumps(rec) + "\n")

    def close(self):
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
