"""Frozen-lake style grid with goal tiles worth different amounts of gold."""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from ..bank import BankConfig, StateKey
from .base import DriftSchedule, Environment, mutation_kind

LEFT, DOWN, RIGHT, UP = 0, 1, 2, 3
_MOVES = {LEFT: (0, -1), DOWN: (1, 0), RIGHT: (0, 1), UP: (-1, 0)}
_PERPENDICULAR = {LEFT: (DOWN, UP), RIGHT: (DOWN, UP), DOWN: (LEFT, RIGHT), UP: (LEFT, RIGHT)}

Cell = tuple[int, int]


@dataclass
class GridLakeSpec:
    tiles: tuple[str, ...]
    start: Cell
    golds: dict[Cell, float] = field(default_factory=dict)
    slip: float = 0.0

    def __post_init__(self):
        self.tiles = tuple(self.tiles)
        self.start = tuple(self.start)
        self.golds = {tuple(k): float(v) for k, v in self.golds.items()}
        width = {len(r) for r in self.tiles}
        if len(width) != 1:
            raise ValueError("grid rows must have equal length")
        if any(ch not in "FHG" for row in self.tiles for ch in row):
            raise ValueError("tiles must be F, H or G")
        if self.tile(self.start) != "F":
            raise ValueError("start tile must be F")
        goals = {(r, c) for r, row in enumerate(self.tiles) for c, ch in enumerate(row) if ch == "G"}
        if not goals:
            raise ValueError("map needs at least one goal")
        if set(self.golds) - goals:
            raise ValueError(f"gold values on non-goal cells: {sorted(set(self.golds) - goals)}")
        for g in goals:
            self.golds.setdefault(g, 1.0)
        if any(v <= 0 for v in self.golds.values()):
            raise ValueError("gold values must be positive")
        if not 0 <= self.slip < 1:
            raise ValueError("slip must lie in [0, 1)")

    @property
    def rows(self) -> int:
        return len(self.tiles)

    @property
    def cols(self) -> int:
        return len(self.tiles[0])

    def tile(self, cell: Cell) -> str:
        return self.tiles[cell[0]][cell[1]]

    def goals(self) -> list[Cell]:
        return sorted(self.golds)


def parse_map(text: str, slip: float = 0.0) -> GridLakeSpec:
    """Parse an ASCII map: rows of F/H/G/S, then ``gold r,c value`` lines."""
    rows, golds, start = [], {}, None
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("gold"):
            _, cell, value = line.split()
            r, c = (int(x) for x in cell.split(","))
            golds[(r, c)] = float(value)
            continue
        if "S" in line:
            if start is not None:
                raise ValueError("map has more than one start cell")
            start = (len(rows), line.index("S"))
            line = line.replace("S", "F")
        rows.append(line)
    if start is None:
        raise ValueError("map has no start cell")
    return GridLakeSpec(tuple(rows), start, golds, slip)


def load_map(name: str, slip: float = 0.0) -> GridLakeSpec:
    text = resources.files("glovesim.envs").joinpath("maps", f"{name}.txt").read_text()
    return parse_map(text, slip)


class GridLake(Environment):
    name = "gridlake"
    step_cap = 96

    def __init__(self, spec: GridLakeSpec, schedule: DriftSchedule | None = None,
                 snapshots: bool = True, success_rule: str = "goal"):
        if success_rule not in ("goal", "full_score"):
            raise ValueError("success_rule must be 'goal' or 'full_score'")
        super().__init__(spec, schedule, snapshots)
        self.success_rule = success_rule

    @property
    def max_score(self) -> float:
        return max(self.spec.golds.values())

    def action_space(self) -> list[int]:
        return [LEFT, DOWN, RIGHT, UP]

    def is_deterministic(self) -> bool:
        return self.spec.slip == 0

    def default_bank_config(self) -> BankConfig:
        return BankConfig(aliases={"cur_pos": "pos", "tile_type": "tile", "gold_collected": "gold"})

    def default_horizon(self) -> int:
        return self.spec.rows + self.spec.cols

    def form_state(self) -> dict:
        r, c = self._world["pos"]
        return {"cur_pos": [r, c], "tile_type": self.spec.tile((r, c)), "gold_collected": self._world["gold"]}

    def terminal_score(self, key: StateKey) -> float | None:
        f = key.fields()
        tile = f.get("tile", f.get("tile_type"))
        if tile == "H":
            return 0.0
        if tile == "G":
            return float(f.get("gold", f.get("gold_collected", 0)))
        return None

    def success(self, score: float, state: dict) -> bool:
        if self.success_rule == "goal":
            return state["tile_type"] == "G"
        return score >= self.max_score

    def apply_drift(self, mutation) -> None:
        kind = mutation_kind(mutation, ("map_swap", "gold_swap"))
        if kind == "map_swap":
            if "map_text" in mutation:
                new = parse_map(mutation["map_text"], self.spec.slip)
            elif "map" in mutation:
                new = load_map(mutation["map"], self.spec.slip)
            else:
                raise ValueError("map_swap needs 'map' or 'map_text'")
            self.spec = new
            return
        cells = mutation.get("cells")
        if not cells or len(cells) != 2:
            raise ValueError("gold_swap needs exactly two goal cells")
        a, b = (tuple(c) for c in cells)
        golds = dict(self.spec.golds)
        if a not in golds or b not in golds:
            raise ValueError(f"gold_swap cells must be goals, got {a} and {b}")
        golds[a], golds[b] = golds[b], golds[a]
        self.spec.golds = golds

    def _initial_world(self, rng: np.random.Generator) -> dict:
        return {"pos": self.spec.start, "gold": 0, "done": False}

    def _transition(self, action, rng: np.random.Generator) -> float:
        if self.spec.slip > 0:
            u_slip, u_side = rng.random(), rng.random()
            if u_slip < self.spec.slip:
                action = _PERPENDICULAR[action][int(u_side < 0.5)]
        r, c = self._world["pos"]
        dr, dc = _MOVES[action]
        nr, nc = r + dr, c + dc
        if 0 <= nr < self.spec.rows and 0 <= nc < self.spec.cols:
            r, c = nr, nc
        self._world["pos"] = (r, c)
        tile = self.spec.tile((r, c))
        if tile == "H":
            self._world["done"] = True
            return 0.0
        if tile == "G":
            gold = self.spec.golds[(r, c)]
            self._world["gold"] = gold
            self._world["done"] = True
            return gold
        return 0.0
