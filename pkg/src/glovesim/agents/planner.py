"""Memory planner: backward induction over the transitions the bank believes in.

Chaining each remembered outcome to the experiences that start from it gives a
small world model.  Values are expected terminal scores within a horizon;
branches the bank has never seen are worth 0.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Protocol, Sequence

import numpy as np

from ..bank import ExperienceBank, Key, StateKey

TOL = 1e-9

TerminalScore = Callable[[StateKey], "float | None"]


class BeliefView(Protocol):
    """What a planner may read from memory."""

    version: Any

    def keys(self) -> Iterable[Key]: ...

    def dist(self, state: StateKey, action) -> Mapping[StateKey, float] | None: ...


class BankView:
    """Records plus verified summaries, pooled per key."""

    def __init__(self, bank: ExperienceBank):
        self.bank = bank

    @property
    def version(self):
        return (id(self.bank), self.bank.version)

    def keys(self):
        return self.bank.keys()

    def dist(self, state, action):
        b = self.bank.belief(state, action)
        return None if b is None else b.support

    def changed_since(self, version):
        """Keys whose belief may differ from what it was at ``version`` (None: unknown)."""
        if not isinstance(version, tuple) or version[0] != id(self.bank):
            return None
        return self.bank.changed_since(version[1])


@dataclass(frozen=True)
class PathValueAnnotation:
    key: Key
    result: StateKey
    max_path_score: float
    steps: int = 1
    terminal: bool = False

    @property
    def action(self):
        return self.key[1]

    @property
    def dead_end(self) -> bool:
        """Known to end the episode with nothing."""
        return self.terminal and self.max_path_score <= TOL


class ValueTable:
    """Expected-value backups over a belief view.

    The value of taking ``a`` in ``s`` is the best expected terminal score
    reachable from the outcome within the horizon, over routes that do not
    come back through ``s`` itself (those are better described by another
    action at ``s``).  ``steps`` is the smallest horizon at which that value
    is already reached, i.e. how far away it is.
    """

    def __init__(self, view: BeliefView, horizon: int, terminal_score: TerminalScore):
        if horizon < 1:
            raise ValueError("horizon must be >= 1")
        self.horizon = horizon
        keys = sorted(view.keys(), key=lambda k: (k[0].key_bytes, _action_order(k[1])))
        state_ix: dict[StateKey, int] = {}

        def ix(s):
            if s not in state_ix:
                state_ix[s] = len(state_ix)
            return state_ix[s]

        self.keys: list[Key] = []
        self.dists: list[dict[StateKey, float]] = []
        dst, prob, row = [], [], []
        self._edges: list[tuple[int, int]] = []
        for k in keys:
            d = view.dist(*k)
            if not d:
                continue
            r = len(self.keys)
            self.keys.append(k)
            self.dists.append(dict(d))
            self._edges.append((len(dst), len(dst) + len(d)))
            ix(k[0])
            for o, p in d.items():
                dst.append(ix(o))
                prob.append(p)
                row.append(r)
        self.state_ix = state_ix
        self.key_ix = {k: i for i, k in enumerate(self.keys)}
        n_states = len(state_ix)
        self._tscore = np.zeros(n_states)
        self._terminal = np.zeros(n_states, dtype=bool)
        self.terminal_states = set()
        for s, i in state_ix.items():
            t = terminal_score(s)
            if t is not None:
                self._terminal[i] = True
                self._tscore[i] = t
                self.terminal_states.add(s)
        self._key_state = np.array([state_ix[k[0]] for k in self.keys], dtype=np.intp)
        self._row = np.array(row, dtype=np.intp)
        self._dst = np.array(dst, dtype=np.intp)
        self._prob = np.array(prob, dtype=float)
        self.by_state: dict[StateKey, list[int]] = {}
        for i, k in enumerate(self.keys):
            self.by_state.setdefault(k[0], []).append(i)
        self.dead = {i for i, d in enumerate(self.dists)
                     if all(o in self.terminal_states and not terminal_score(o) for o in d)}
        self._cache: dict[StateKey, tuple[np.ndarray, np.ndarray]] = {}

    def refresh(self, view: BeliefView, changed: Iterable[Key]) -> bool:
        """Take new probabilities for ``changed`` keys in place.

        Only possible when no key appears or vanishes and every outcome support
        is unchanged; returns False when a full rebuild is needed instead.
        """
        updates = []
        for k in changed:
            i = self.key_ix.get(k)
            d = view.dist(*k)
            if i is None or not d or d.keys() != self.dists[i].keys():
                return False
            updates.append((i, dict(d)))
        for i, d in updates:
            lo, _ = self._edges[i]
            self.dists[i] = d
            self._prob[lo:lo + len(d)] = list(d.values())
        if updates:
            self._cache.clear()
        return True

    def backup(self, block: StateKey | None = None, optimistic: Iterable[int] = (),
               optimistic_score: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """(values, steps) for every key, with routes re-entering ``block`` worth 0.

        Keys listed in ``optimistic`` have their positive terminal outcomes
        valued at ``optimistic_score`` instead of the remembered score.
        """
        n_keys, n_states = len(self.keys), len(self.state_ix)
        if not n_keys:
            return np.zeros(0), np.zeros(0, dtype=int)
        b = self.state_ix.get(block) if block is not None else None
        boost = np.zeros(len(self._row), dtype=bool)
        opt = np.zeros(n_keys, dtype=bool)
        opt[list(optimistic)] = True
        if opt.any():
            boost = opt[self._row] & self._terminal[self._dst] & (self._tscore[self._dst] > 0)
        q_hist = np.zeros((self.horizon, n_keys))
        v = np.zeros(n_states)
        for h in range(self.horizon):
            w = np.where(self._terminal, self._tscore, v)[self._dst]
            w[boost] = optimistic_score
            q = np.bincount(self._row, weights=self._prob * w, minlength=n_keys)
            q_hist[h] = q
            v = np.zeros(n_states)
            np.maximum.at(v, self._key_state, q)
            if b is not None:
                v[b] = 0.0
        q = q_hist[-1]
        steps = np.argmax(np.abs(q_hist - q) <= TOL, axis=0) + 1
        return q, steps

    def annotations(self, state: StateKey) -> list[PathValueAnnotation]:
        rows = self.by_state.get(state, ())
        if not rows:
            return []
        if state not in self._cache:
            self._cache[state] = self.backup(block=state)
        q, steps = self._cache[state]
        out = []
        for i in rows:
            d = self.dists[i]
            result = max(sorted(d), key=lambda o: d[o])
            terminal = all(o in self.terminal_states for o in d)
            out.append(PathValueAnnotation(self.keys[i], result, float(q[i]), int(steps[i]), terminal))
        out.sort(key=lambda a: _action_order(a.action))
        return out


def _action_order(a):
    return (0, a, "") if isinstance(a, (int, np.integer)) else (1, 0, str(a))


def annotate(bank: ExperienceBank | BeliefView, state: StateKey, horizon: int,
             terminal_score: TerminalScore) -> list[PathValueAnnotation]:
    view = BankView(bank) if isinstance(bank, ExperienceBank) else bank
    return ValueTable(view, horizon, terminal_score).annotations(state)


# -- decision rule -------------------------------------------------------------

ExplorePolicy = Callable[[StateKey, Sequence[Any]], Any]


def lowest_index_policy(state: StateKey, candidates: Sequence[Any]) -> Any:
    return min(candidates, key=_action_order)


def planner_decide(state: StateKey, annotations: Sequence[PathValueAnnotation], action_space: Sequence[Any],
                   explore_policy: ExplorePolicy | None = None, max_score: float | None = None):
    """Pick the best-valued action; hand ties and unknown territory to ``explore_policy``.

    When ``max_score`` is known and the best remembered path falls short of
    it, the explore policy chooses among the best actions and the actions
    with no memory at all.  Equal-valued best actions are first narrowed to
    the ones whose value is fewest steps away.  Actions annotated 0 are never
    offered while a positive value exists.
    """
    explore = explore_policy or lowest_index_policy
    actions = list(action_space)
    ann = {a.action: a for a in annotations if a.action in actions}
    if not ann:
        return _checked(explore(state, actions), actions)
    best = max(a.max_path_score for a in ann.values())
    if best > TOL:
        top = [a for a in actions if a in ann and ann[a].max_path_score >= best - TOL]
        if max_score is not None and best < max_score - TOL:
            cands = top + [a for a in actions if a not in ann]
            return _checked(explore(state, cands), cands)
        if len(top) > 1:
            near = min(ann[a].steps for a in top)
            top = [a for a in top if ann[a].steps == near]
        if len(top) == 1:
            return top[0]
        return _checked(explore(state, top), top)
    cands = [a for a in actions if not (a in ann and ann[a].dead_end)] or actions
    return _checked(explore(state, cands), cands)


def _checked(action, allowed):
    if action not in allowed:
        raise ValueError(f"explore policy returned {action!r}, not among {list(allowed)}")
    return action


# -- agent -----------------------------------------------------------------------


class SystematicExplorer:
    """Deterministic exploration over the planner's memory.

    Among the offered candidates it prefers, in order: the best route when
    stale memory (tried before the latest realignment episode) is assumed to
    pay the maximum score, if that beats what is currently believed; an
    action never tried here; the first step of the shortest believed route to
    a state with untried actions; the nearest best value; the lowest index.
    """

    def __init__(self, agent: PlannerAgent):
        self.agent = agent

    def __call__(self, state, candidates):
        ag = self.agent
        ordered = sorted(candidates, key=_action_order)
        hopeful = ag.optimistic_choice(state, ordered)
        if hopeful is not None:
            return hopeful
        untried = [a for a in ordered if not ag.tried(state, a)]
        if untried:
            return untried[0]
        first = ag.route_to_frontier(state, ordered)
        if first is not None:
            return first
        return ag.nearest(state, ordered)


class RandomExplorer:
    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)

    def __call__(self, state, candidates):
        ordered = sorted(candidates, key=_action_order)
        return ordered[int(self.rng.integers(len(ordered)))]


class PlannerAgent:
    """Decision backend that plans over whatever belief view it is handed.

    While ``collecting`` is set the agent maps its surroundings first: it
    follows the explore policy for as long as some believed-reachable action
    is untried, and only then plans.
    """

    name = "planner"

    def __init__(self, action_space: Sequence[Any], horizon: int, terminal_score: TerminalScore,
                 max_score: float | None = None, explore: str = "systematic", seed: int = 0):
        self.action_space = list(action_space)
        self.horizon = horizon
        self.terminal_score = terminal_score
        self.max_score = max_score
        self.last_tried: dict[Key, tuple[int, int]] = {}
        self.stale_before = -1
        self.collecting = False
        self.view: BeliefView | None = None
        self._table: ValueTable | None = None
        self._table_version = None
        if explore == "systematic":
            self.explore_policy: ExplorePolicy = SystematicExplorer(self)
        elif explore == "random":
            self.explore_policy = RandomExplorer(seed)
        else:
            raise ValueError(f"unknown explore policy {explore!r}")

    # memory plumbing

    def attach(self, view: BeliefView) -> None:
        self.view = view
        self._table = None

    def table(self) -> ValueTable:
        if self.view is None:
            raise RuntimeError("planner has no memory attached")
        v = self.view.version
        if self._table is not None and v != self._table_version:
            changed = getattr(self.view, "changed_since", lambda _: None)(self._table_version)
            if changed is not None and self._table.refresh(self.view, changed):
                self._table_version = v
        if self._table is None or v != self._table_version:
            self._table = ValueTable(self.view, self.horizon, self.terminal_score)
            self._table_version = v
        return self._table

    def note_realignment(self, episode: int) -> None:
        """Everything tried before ``episode`` may describe a world that is gone."""
        self.stale_before = max(self.stale_before, episode)

    def observe(self, key: Key, at: tuple[int, int]) -> None:
        self.last_tried[key] = tuple(at)

    # exploration helpers

    def tried(self, state, action) -> bool:
        return (state, action) in self.last_tried or (state, action) in self.table().key_ix

    def is_stale(self, state, action) -> bool:
        at = self.last_tried.get((state, action))
        if at is None:
            # remembered from before this agent existed (e.g. a loaded bank)
            return self.stale_before >= 0 and (state, action) in self.table().key_ix
        return at[0] < self.stale_before

    def is_dead_end(self, state, action) -> bool:
        t = self.table()
        i = t.key_ix.get((state, action))
        return i is not None and i in t.dead

    def _open(self, s) -> bool:
        return any(not self.tried(s, a) for a in self.action_space)

    def optimistic_choice(self, state, candidates):
        """Candidate whose route looks best if stale goal memories paid the maximum.

        Returns None unless that optimistic value beats every believed value.
        """
        if self.max_score is None or self.stale_before < 0:
            return None
        t = self.table()
        stale = [i for i, k in enumerate(t.keys) if self.is_stale(*k)]
        if not stale:
            return None
        q_opt, steps = t.backup(block=state, optimistic=stale, optimistic_score=self.max_score)
        believed = {a.action: a.max_path_score for a in t.annotations(state)}
        best_believed = max(believed.values(), default=0.0)
        scored = [(q_opt[t.key_ix[(state, a)]], steps[t.key_ix[(state, a)]], a)
                  for a in candidates if (state, a) in t.key_ix]
        if not scored:
            return None
        top = max(x[0] for x in scored)
        if top <= best_believed + TOL:
            return None
        return min((x for x in scored if x[0] >= top - TOL), key=lambda x: (x[1], _action_order(x[2])))[2]

    def route_to_frontier(self, state, first_moves: Sequence[Any]):
        """First action of the shortest believed route to a state with untried actions."""
        t = self.table()
        seen = {state}
        queue: deque = deque()
        for a in first_moves:
            for o in self._successors(t, state, a):
                if o not in seen:
                    seen.add(o)
                    queue.append((o, a))
        while queue:
            s, first = queue.popleft()
            if self._open(s):
                return first
            for a in self.action_space:
                for o in self._successors(t, s, a):
                    if o not in seen:
                        seen.add(o)
                        queue.append((o, first))
        return None

    @staticmethod
    def _successors(t: ValueTable, s, a):
        i = t.key_ix.get((s, a))
        if i is None:
            return ()
        return [o for o in sorted(t.dists[i]) if o not in t.terminal_states]

    def nearest(self, state, candidates):
        ann = {a.action: a for a in self.annotations(state)}
        known = [a for a in candidates if a in ann]
        if not known:
            return min(candidates, key=_action_order)
        return min(known, key=lambda a: (-ann[a].max_path_score, ann[a].steps, _action_order(a)))

    # decision

    def annotations(self, state: StateKey) -> list[PathValueAnnotation]:
        return self.table().annotations(state)

    def decide(self, state: StateKey, raw_state: dict | None = None):
        if self.collecting:
            safe = [a for a in self.action_space if not self.is_dead_end(state, a)] or self.action_space
            if self._open(state) or self.route_to_frontier(state, safe) is not None:
                return _checked(self.explore_policy(state, safe), safe)
        return planner_decide(state, self.annotations(state), self.action_space, self.explore_policy,
                              self.max_score)
