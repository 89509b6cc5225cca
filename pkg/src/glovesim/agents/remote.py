"""Remote decision backend: one HTTP POST per decision, one action token back."""

from __future__ import annotations

import logging
import re
import urllib.error
import urllib.request
from importlib import resources
from typing import Any, Sequence

from ..bank import StateKey
from .planner import PathValueAnnotation, PlannerAgent

log = logging.getLogger(__name__)

_TOKEN = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*\.?\s*$")


class RemoteError(RuntimeError):
    pass


def load_template(name: str) -> str:
    return resources.files("glovesim.agents").joinpath(f"prompt_{name}.txt").read_text()


def render_experience(annotations: Sequence[PathValueAnnotation]) -> str:
    if not annotations:
        return "No earlier experience from this state.\n"
    lines = [f"Earlier visits to this state ({len(annotations)} remembered action(s)):", ""]
    for a in annotations:
        f = a.result.fields()
        lines.append(f"  Action: {a.action}")
        if "pos" in f:
            lines.append(f"  Landed on: [{f['pos'].replace(',', ', ')}]")
            lines.append(f"  Tile there: {f.get('tile', '?')}")
        else:
            lines.append(f"  Led to: {a.result.text}")
        lines.append(f"  Best score reachable along this path: {_num(a.max_path_score)}")
        lines.append("")
    return "\n".join(lines)


def _num(x: float) -> str:
    return str(int(x)) if float(x).is_integer() else f"{x:g}"


def render_prompt(template: str, state: StateKey, annotations, action_space, env=None) -> str:
    f = state.fields()
    ctx: dict[str, Any] = {
        "actions": ", ".join(str(a) for a in action_space),
        "position": f"[{f['pos'].replace(',', ', ')}]" if "pos" in f else state.text,
        "experience": render_experience(annotations),
        "env": getattr(env, "name", "env"),
        "rows": "?", "cols": "?", "n_goals": "?", "goals": "?",
    }
    spec = getattr(env, "spec", None)
    if spec is not None and hasattr(spec, "golds"):
        goals = spec.goals()
        ctx.update(rows=spec.rows, cols=spec.cols, n_goals=len(goals),
                   goals=", ".join(f"({r}, {c})" for r, c in goals))
    return template.format(**ctx)


def parse_action(reply: str, action_space: Sequence[Any]):
    lines = [ln for ln in reply.strip().splitlines() if ln.strip()]
    if len(lines) != 1:
        raise RemoteError(f"expected one line, got {len(lines)}")
    m = _TOKEN.match(lines[0])
    if not m:
        raise RemoteError(f"reply {lines[0]!r} is not a single action token")
    token = m.group(1)
    for a in action_space:
        if str(a) == token:
            return a
    raise RemoteError(f"action {token!r} not in {list(action_space)}")


def remote_decide(endpoint: str, prompt: str, action_space: Sequence[Any], timeout: float = 30.0):
    req = urllib.request.Request(endpoint, data=prompt.encode("utf-8"), method="POST",
                                 headers={"Content-Type": "text/plain; charset=utf-8"})
    try:
        with urllib.request.urlopen(req, timeout=timeout) as resp:
            reply = resp.read().decode("utf-8", errors="replace")
    except (urllib.error.URLError, TimeoutError, OSError) as exc:
        raise RemoteError(f"request to {endpoint} failed: {exc}") from exc
    return parse_action(reply, action_space)


class RemoteAgent(PlannerAgent):
    """Planner whose final choice comes from an external model.

    Annotations are rendered into the prompt; on a transport or parse error
    the agent either falls back to the planner's explore policy or aborts.
    """

    name = "remote"

    def __init__(self, action_space, horizon, terminal_score, max_score=None, *, endpoint: str,
                 timeout: float = 30.0, fallback: str = "explore", template: str = "generic", env=None, **kw):
        super().__init__(action_space, horizon, terminal_score, max_score, **kw)
        if fallback not in ("explore", "abort"):
            raise ValueError("fallback must be 'explore' or 'abort'")
        self.endpoint = endpoint
        self.timeout = timeout
        self.fallback = fallback
        self.template = load_template(template)
        self.env = env
        self.fallbacks = 0

    def decide(self, state: StateKey, raw_state: dict | None = None):
        ann = self.annotations(state)
        prompt = render_prompt(self.template, state, ann, self.action_space, self.env)
        try:
            return remote_decide(self.endpoint, prompt, self.action_space, self.timeout)
        except RemoteError as exc:
            if self.fallback == "abort":
                raise
            self.fallbacks += 1
            log.warning("remote backend fell back to exploration: %s", exc)
            return self.explore_policy(state, self.action_space)
