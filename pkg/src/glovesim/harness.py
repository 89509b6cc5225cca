"""Experiment runner: episodes, phases, seeds, metrics and report files."""

from __future__ import annotations

import csv
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Sequence

from .agents.baselines import DecayView, NoMemoryAgent
from .agents.planner import BankView, PlannerAgent
from .agents.remote import RemoteAgent
from .bank import BankConfig, ExperienceBank, ExperienceRecord, Metadata, atomic_write, canonical_key
from .config import ConfigError, DEFAULTS, merge
from .detect import DetectorConfig, PersistenceState, default_p_th
from .envs import DriftSchedule, Environment, make_env
from .verify import REALIGNED, ProbeAccess, VerifierConfig, verify_cycle

log = logging.getLogger(__name__)

AGENT_KINDS = ("planner", "static", "decay", "no_memory", "remote")


@dataclass
class RunConfig:
    """Validated view of a config mapping (see ``config.DEFAULTS`` for the schema)."""

    raw: dict

    def __post_init__(self):
        c = self.raw
        if c["agent"]["kind"] not in AGENT_KINDS:
            raise ConfigError(f"agent.kind must be one of {AGENT_KINDS}")
        for name in ("collection_episodes", "episodes_per_phase", "rounds", "curve_window"):
            if not isinstance(c[name], int) or c[name] < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if c["episodes_per_phase"] < c["rounds"] or c["collection_episodes"] < c["rounds"]:
            raise ConfigError("every phase must be at least `rounds` episodes long")
        if not c["seeds"] or not all(isinstance(s, int) and s >= 0 for s in c["seeds"]):
            raise ConfigError("seeds must be a nonempty list of nonnegative integers")
        if c["step_cap"] is not None and (not isinstance(c["step_cap"], int) or c["step_cap"] < 1):
            raise ConfigError("step_cap must be a positive integer")
        if not isinstance(c["drifts"], list):
            raise ConfigError("drifts must be a list")
        try:
            self.schedule = self._schedule()
            # builds the environment and nested configs once so errors surface early
            env = self.make_env()
            self.detector(env)
            self.verifier(env)
        except ConfigError:
            raise
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RunConfig:
        return cls(merge(DEFAULTS, data))

    # -- derived pieces ----------------------------------------------------

    @property
    def glove_enabled(self) -> bool:
        return bool(self.raw["glove"]["enabled"]) and self.raw["agent"]["kind"] in ("planner", "remote")

    @property
    def method(self) -> str:
        if self.raw["method"]:
            return str(self.raw["method"])
        kind = self.raw["agent"]["kind"]
        if kind == "planner":
            return "glove" if self.glove_enabled else "planner"
        return kind + ("+glove" if kind == "remote" and self.glove_enabled else "")

    def boundaries(self) -> list[int]:
        return self.schedule.boundaries()

    @property
    def total_episodes(self) -> int:
        b = self.boundaries()
        if not b:
            return self.raw["collection_episodes"]
        return b[-1] + self.raw["episodes_per_phase"]

    def _schedule(self) -> DriftSchedule:
        items = []
        for k, d in enumerate(self.raw["drifts"]):
            if not isinstance(d, Mapping) or "mutations" not in d:
                raise ConfigError(f"drift {k} needs a 'mutations' list")
            ep = d.get("episode")
            if ep is None:
                ep = self.raw["collection_episodes"] + k * self.raw["episodes_per_phase"]
            items.append((int(ep), d["mutations"]))
        sched = DriftSchedule.from_list(items)
        b = sched.boundaries()
        if b and b[0] < self.raw["rounds"]:
            raise ConfigError("first drift leaves the source phase shorter than `rounds`")
        for x, y in zip(b, b[1:]):
            if y - x < self.raw["rounds"]:
                raise ConfigError("a drift phase is shorter than `rounds`")
        return sched

    def make_env(self) -> Environment:
        return make_env(self.raw["env"], self.schedule)

    def bank_config(self, env: Environment) -> BankConfig:
        cfg = env.default_bank_config()
        bins = self.raw["bank"].get("bins")
        if bins:
            cfg = BankConfig(bins=dict(bins), aliases=cfg.aliases, key_fields=cfg.key_fields)
        return cfg

    def deterministic(self, env: Environment) -> bool:
        flag = self.raw["glove"]["deterministic"]
        return env.is_deterministic() if flag is None else bool(flag)

    def detector(self, env: Environment) -> DetectorConfig:
        g = self.raw["glove"]
        det = self.deterministic(env)
        p_th = g["p_th"] if g["p_th"] is not None else default_p_th(det)
        return DetectorConfig(g["epsilon_mode"], g["epsilon"], g["epsilon_min"], g["delta"], p_th, det)

    def verifier(self, env: Environment) -> VerifierConfig:
        g = self.raw["glove"]
        return VerifierConfig(g["K"], g["verify_epsilon"], g["verify_delta"], g["alpha_max"],
                              self.deterministic(env), g["alpha"])

    def step_cap(self, env: Environment) -> int:
        return self.raw["step_cap"] or env.step_cap

    def phase_of(self, episode: int) -> str:
        k = self.schedule.active(episode)
        return "source" if k == 0 else f"drift-{k}"

    def phases(self) -> list[tuple[str, int, int]]:
        """(label, first episode, end episode) for every phase."""
        starts = [0] + self.boundaries()
        ends = starts[1:] + [self.total_episodes]
        return [("source" if i == 0 else f"drift-{i}", a, b) for i, (a, b) in enumerate(zip(starts, ends))]


@dataclass
class EpisodeMetrics:
    episode: int
    phase: str
    success: bool
    score: float
    steps: int
    probe_count: int = 0
    conflict_events: int = 0
    realignments: int = 0
    replay_cost: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunReport:
    method: str
    seed: int
    episodes: list[EpisodeMetrics] = field(default_factory=list)
    events: list[dict] = field(default_factory=list)
    failed: str | None = None


class Run:
    """One seed's environment, bank and agent, carried across all phases."""

    def __init__(self, cfg: RunConfig, seed: int, bank: ExperienceBank | None = None):
        self.cfg = cfg
        self.seed = seed
        self.env = cfg.make_env()
        self.bank = bank if bank is not None else ExperienceBank()
        self.bank_cfg = cfg.bank_config(self.env)
        self.detect_cfg = cfg.detector(self.env)
        self.verify_cfg = cfg.verifier(self.env)
        self.pstate = PersistenceState()
        self.agent = self._make_agent()
        self.events: list[dict] = []

    def _make_agent(self):
        a = self.cfg.raw["agent"]
        env = self.env
        kind = a["kind"]
        if kind == "no_memory":
            return NoMemoryAgent(env.action_space(), env.heuristic, seed=self.seed)
        horizon = a["horizon"] or env.default_horizon()
        common = dict(explore=a["explore"], seed=self.seed)
        if kind == "remote":
            if not a["endpoint"]:
                raise ConfigError("agent.endpoint is required for the remote backend")
            template = a["template"] or ("gridlake" if env.name == "gridlake" else "generic")
            agent = RemoteAgent(env.action_space(), horizon, env.terminal_score, env.max_score,
                                endpoint=a["endpoint"], timeout=a["timeout"], fallback=a["fallback"],
                                template=template, env=env, **common)
        else:
            agent = PlannerAgent(env.action_space(), horizon, env.terminal_score, env.max_score, **common)
            agent.name = kind
        if kind == "decay":
            agent.attach(DecayView(self.bank, a["lam"], a["w_min"]))
        else:
            agent.attach(BankView(self.bank))
        return agent

    def memory_writable(self, episode: int) -> bool:
        kind = self.cfg.raw["agent"]["kind"]
        if kind == "no_memory":
            return False
        if kind == "static":
            b = self.cfg.boundaries()
            return not b or episode < b[0]
        return True

    def run_episode(self, episode: int) -> EpisodeMetrics:
        env, bank, agent = self.env, self.bank, self.agent
        glove = self.cfg.glove_enabled
        view = getattr(agent, "view", None)
        if isinstance(view, DecayView):
            view.set_episode(episode)
        if isinstance(agent, PlannerAgent):
            agent.collecting = bool(self.cfg.raw["agent"]["collect"]) and self.cfg.schedule.active(episode) == 0
        raw = env.reset(self.seed, episode)
        key = canonical_key(raw, self.bank_cfg)
        traj: list = []
        m = EpisodeMetrics(episode, self.cfg.phase_of(episode), False, 0.0, 0)
        cap = self.cfg.step_cap(env)
        done = False
        for step in range(cap):
            action = agent.decide(key, raw)
            before = env.snapshot() if glove else None
            raw_next, score, done = env.step(action)
            out = canonical_key(raw_next, self.bank_cfg)
            m.score += score
            m.steps += 1
            rec = ExperienceRecord(key, action, out, float(score), Metadata((episode, step), tuple(traj)))
            agent.observe(rec.key, (episode, step))
            realigned = False
            if glove:
                access = ProbeAccess(before, self.seed, episode, tuple(traj), out, self.bank_cfg)
                report = verify_cycle(bank, env, rec, self.detect_cfg, self.verify_cfg, self.pstate, access)
                if report.conflict:
                    m.conflict_events += 1
                    m.probe_count += report.probes_used
                    m.replay_cost += report.replay_cost
                    self.events.append({"type": "cycle", "seed": self.seed, **report.to_dict()})
                if report.kind == REALIGNED:
                    m.realignments += 1
                    realigned = True
                    agent.note_realignment(episode)
            if not realigned and self.memory_writable(episode):
                bank.insert(rec)
            traj.append((key, action))
            key, raw = out, raw_next
            if done:
                break
        m.success = bool(done and env.success(m.score, raw))
        self.events.append({"type": "episode", "seed": self.seed, **m.to_dict()})
        return m

    def run(self) -> RunReport:
        report = RunReport(self.cfg.method, self.seed)
        for ep in range(self.cfg.total_episodes):
            report.episodes.append(self.run_episode(ep))
        report.events = self.events
        return report


def _run_seed(args) -> RunReport:
    raw, seed = args
    cfg = RunConfig(raw)
    try:
        return Run(cfg, seed).run()
    except ConfigError:
        raise
    except Exception as exc:  # one broken seed must not sink the others
        log.exception("seed %d failed", seed)
        return RunReport(cfg.method, seed, failed=f"{type(exc).__name__}: {exc}")


def run_experiment(cfg: RunConfig, jobs: int = 1) -> list[RunReport]:
    args = [(cfg.raw, s) for s in cfg.raw["seeds"]]
    if jobs > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_seed, args))
    return [_run_seed(a) for a in args]


# -- aggregation ---------------------------------------------------------------


@dataclass
class PhaseStats:
    method: str
    phase: str
    success_rate: float
    mean_score: float
    mean_probes: float
    seeds: int


def phase_stats(cfg: RunConfig, report: RunReport) -> list[PhaseStats]:
    """Per-phase numbers over the final `rounds` episodes of each phase."""
    rounds = cfg.raw["rounds"]
    out = []
    for label, a, b in cfg.phases():
        window = [m for m in report.episodes if max(a, b - rounds) <= m.episode < b]
        n = len(window)
        out.append(PhaseStats(report.method, label,
                              sum(m.success for m in window) / n if n else 0.0,
                              sum(m.score for m in window) / n if n else 0.0,
                              sum(m.probe_count for m in window) / n if n else 0.0, 1))
    return out


def aggregate(cfg: RunConfig, reports: Sequence[RunReport]) -> list[PhaseStats]:
    """Average phase statistics across completed seeds."""
    good = [r for r in reports if r.failed is None]
    if not good:
        raise RuntimeError("no seed completed")
    methods = {r.method for r in good}
    if len(methods) != 1:
        raise ValueError(f"cannot aggregate reports from different methods: {sorted(methods)}")
    per_seed = [phase_stats(cfg, r) for r in good]
    out = []
    for rows in zip(*per_seed):
        n = len(rows)
        out.append(PhaseStats(rows[0].method, rows[0].phase,
                              sum(r.success_rate for r in rows) / n,
                              sum(r.mean_score for r in rows) / n,
                              sum(r.mean_probes for r in rows) / n, n))
    return out


def curves(cfg: RunConfig, reports: Sequence[RunReport]) -> list[dict]:
    good = [r for r in reports if r.failed is None]
    window = cfg.raw["curve_window"]
    boundaries = set(cfg.boundaries())
    rows = []
    for ep in range(cfg.total_episodes):
        succ = conf = probes = 0.0
        for r in good:
            lo = max(0, ep - window + 1)
            span = r.episodes[lo: ep + 1]
            succ += sum(m.success for m in span) / len(span)
            conf += r.episodes[ep].conflict_events
            probes += r.episodes[ep].probe_count
        n = max(len(good), 1)
        rows.append({"episode": ep, "phase": cfg.phase_of(ep), "drift": int(ep in boundaries),
                     "success_ma": succ / n, "conflicts": conf / n, "probes": probes / n})
    return rows


def _fmt(x) -> str:
    if isinstance(x, float):
        return f"{x:.6f}"
    return str(x)


def to_csv(rows: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    return buf.getvalue()


SUMMARY_COLUMNS = ("method", "phase", "success_rate", "mean_score", "mean_probes")
CURVE_COLUMNS = ("episode", "success_ma", "conflicts", "probes", "phase", "drift")


def write_reports(cfg: RunConfig, reports: Sequence[RunReport], out_dir: str) -> dict[str, str]:
    os.makedirs(out_dir, exist_ok=True)
    # failed seeds still get their events written; the summary is empty if none completed
    stats = aggregate(cfg, reports) if any(r.failed is None for r in reports) else []
    paths = {
        "summary": os.path.join(out_dir, "summary.csv"),
        "events": os.path.join(out_dir, "events.jsonl"),
        "curves": os.path.join(out_dir, "curves.csv"),
    }
    atomic_write(paths["summary"], to_csv([asdict(s) for s in stats], SUMMARY_COLUMNS))
    lines = []
    for r in reports:
        if r.failed is not None:
            lines.append(json.dumps({"type": "failed_seed", "seed": r.seed, "error": r.failed}, sort_keys=True))
        for e in r.events:
            lines.append(json.dumps(e, sort_keys=True))
    atomic_write(paths["events"], "".join(ln + "\n" for ln in lines))
    atomic_write(paths["curves"], to_csv(curves(cfg, reports), CURVE_COLUMNS))
    return paths
