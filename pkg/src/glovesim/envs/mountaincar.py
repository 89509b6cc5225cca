"""Classic-control mountain car with a mutable engine force."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..bank import BankConfig, StateKey
from .base import DriftSchedule, Environment, mutation_kind

MIN_POSITION = -1.2
MAX_POSITION = 0.6
MAX_SPEED = 0.07
GOAL_POSITION = 0.5


@dataclass
class MountainCarSpec:
    force: float = 0.001
    gravity: float = 0.0025
    position_bin: float = 0.05
    velocity_bin: float = 0.005

    def __post_init__(self):
        if not self.force > 0:
            raise ValueError("force must be positive")
        if not self.gravity > 0:
            raise ValueError("gravity must be positive")


class MountainCar(Environment):
    name = "mountaincar"
    max_score = 1.0
    step_cap = 200

    def action_space(self) -> list[int]:
        return [0, 1, 2]

    def is_deterministic(self) -> bool:
        # the dynamics are deterministic, but binned keys alias many continuous
        # states, so keyed transitions must be treated as stochastic
        return False

    def default_bank_config(self) -> BankConfig:
        return BankConfig(bins={"position": self.spec.position_bin, "velocity": self.spec.velocity_bin})

    def default_horizon(self) -> int:
        return 40

    def form_state(self) -> dict:
        return {"position": self._world["position"], "velocity": self._world["velocity"]}

    def terminal_score(self, key: StateKey) -> float | None:
        pos_bin = int(key.fields()["position"])
        # bin b covers [b*w, (b+1)*w); a terminal bin lies wholly past the goal
        if pos_bin * self.spec.position_bin >= GOAL_POSITION - 1e-12:
            return 1.0
        return None

    def success(self, score: float, state: dict) -> bool:
        return state["position"] >= GOAL_POSITION

    def heuristic(self, state: dict) -> int:
        return 2 if state["velocity"] >= 0 else 0

    def apply_drift(self, mutation) -> None:
        mutation_kind(mutation, ("force_set",))
        force = float(mutation.get("force", 0))
        if not force > 0:
            raise ValueError("force_set needs a positive 'force'")
        self.spec.force = force

    def _initial_world(self, rng: np.random.Generator) -> dict:
        return {"position": float(rng.uniform(-0.6, -0.4)), "velocity": 0.0, "done": False}

    def _transition(self, action, rng: np.random.Generator) -> float:
        position, velocity = self._world["position"], self._world["velocity"]
        velocity += (action - 1) * self.spec.force - math.cos(3 * position) * self.spec.gravity
        velocity = min(max(velocity, -MAX_SPEED), MAX_SPEED)
        position += velocity
        position = min(max(position, MIN_POSITION), MAX_POSITION)
        if position == MIN_POSITION and velocity < 0:
            velocity = 0.0
        done = position >= GOAL_POSITION
        self._world.update(position=position, velocity=velocity, done=done)
        return 1.0 if done else 0.0


def make(force: float = 0.001, gravity: float = 0.0025, schedule: DriftSchedule | None = None,
         snapshots: bool = True) -> MountainCar:
    return MountainCar(MountainCarSpec(force, gravity), schedule, snapshots)
