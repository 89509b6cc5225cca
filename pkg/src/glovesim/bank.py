"""Experience bank: keyed transition store with verified summaries.

Records are indexed by ``(StateKey, action)``.  Identical transitions merge
into a single record whose ``exec_count`` grows, so empirical frequencies use
every observation without the store growing without bound.  Realignment moves
stale records to an append-only tombstone log and installs a verified outcome
distribution for the key.
"""

from __future__ import annotations

import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Iterable, Iterator, Mapping

FORMAT_HEADER = "glove-bank v1"

HISTORICAL = "historical"
VERIFIED = "verified"

DISCRETE = "discrete"
BINNED = "binned-continuous"


class BankFormatError(ValueError):
    def __init__(self, lineno: int, msg: str):
        super().__init__(f"line {lineno}: {msg}")
        self.lineno = lineno


@dataclass(frozen=True, order=True)
class StateKey:
    key_bytes: bytes
    kind: str = DISCRETE

    # keys are hashed constantly by the planner, so the hash is computed once;
    # it is process-local (str/bytes hashing is salted), hence the __reduce__
    def __post_init__(self):
        object.__setattr__(self, "_hash", hash((self.key_bytes, self.kind)))

    def __hash__(self) -> int:
        return self._hash

    def __reduce__(self):
        return (type(self), (self.key_bytes, self.kind))

    @classmethod
    def of(cls, text: str, kind: str = DISCRETE) -> StateKey:
        return cls(text.encode("utf-8"), kind)

    @property
    def text(self) -> str:
        return self.key_bytes.decode("utf-8")

    def fields(self) -> dict[str, str]:
        out = {}
        for part in self.text.split("|"):
            name, _, value = part.partition("=")
            out[name] = value
        return out

    @property
    def bins(self) -> tuple[int, ...]:
        if self.kind != BINNED:
            raise ValueError("only binned keys carry bin indices")
        return tuple(int(v) for v in self.fields().values())

    def encode(self) -> str:
        return ("b:" if self.kind == BINNED else "d:") + self.text

    @classmethod
    def decode(cls, s: str) -> StateKey:
        tag, sep, text = s.partition(":")
        if not sep or tag not in ("b", "d"):
            raise ValueError(f"bad key encoding {s!r}")
        return cls.of(text, BINNED if tag == "b" else DISCRETE)

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class BankConfig:
    """How raw environment states become keys.

    ``bins`` maps continuous field names to bin widths; ``aliases`` shortens
    field names in the key text; ``key_fields`` restricts (and orders) the
    fields that take part in matching.
    """

    bins: Mapping[str, float] = field(default_factory=dict)
    aliases: Mapping[str, str] = field(default_factory=dict)
    key_fields: tuple[str, ...] | None = None

    def __post_init__(self):
        for name, width in self.bins.items():
            if not (width > 0 and math.isfinite(width)):
                raise ValueError(f"bin width for {name!r} must be positive and finite")


def _bin_index(value: float, width: float) -> int:
    q = value / width
    if abs(q - round(q)) > 1e-9:
        return math.floor(q)
    # near a bin edge: decide with exact decimal rationals
    return math.floor(Fraction(repr(value)) / Fraction(repr(width)))


def _fmt(value: Any, name: str) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value in field {name!r}")
        return str(int(value)) if value.is_integer() else repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_fmt(v, name) for v in value)
    text = str(value)
    if "|" in text or "=" in text:
        raise ValueError(f"field {name!r} contains a reserved character")
    return text


def canonical_key(raw_state: Mapping[str, Any], cfg: BankConfig | None = None) -> StateKey:
    cfg = cfg or BankConfig()
    names = cfg.key_fields if cfg.key_fields is not None else tuple(raw_state)
    parts = []
    binned = False
    for name in names:
        if name not in raw_state:
            raise KeyError(f"state has no field {name!r}")
        value = raw_state[name]
        alias = cfg.aliases.get(name, name)
        if name in cfg.bins:
            value = float(value)
            if not math.isfinite(value):
                raise ValueError(f"non-finite continuous field {name!r}")
            parts.append(f"{alias}={_bin_index(value, cfg.bins[name])}")
            binned = True
        else:
            parts.append(f"{alias}={_fmt(value, name)}")
    return StateKey.of("|".join(parts), BINNED if binned else DISCRETE)


Stamp = tuple[int, int]
Key = tuple[StateKey, Any]


@dataclass
class Metadata:
    recorded_at: Stamp
    trajectory: tuple[tuple[StateKey, Any], ...] = ()
    exec_count: int = 1
    last_seen: Stamp | None = None

    def __post_init__(self):
        if self.exec_count < 1:
            raise ValueError("exec_count must be >= 1")
        self.recorded_at = tuple(self.recorded_at)
        if self.last_seen is None:
            self.last_seen = self.recorded_at
        else:
            self.last_seen = tuple(self.last_seen)


@dataclass(frozen=True)
class ExperienceRecord:
    state: StateKey
    action: Any
    outcome: StateKey
    reward: float | None = None
    meta: Metadata = field(default_factory=lambda: Metadata((0, 0)), compare=True)

    def __post_init__(self):
        if self.reward is not None and not math.isfinite(self.reward):
            raise ValueError("reward must be finite")

    @property
    def key(self) -> Key:
        return (self.state, self.action)

    def same_transition(self, other: ExperienceRecord) -> bool:
        return (self.state, self.action, self.outcome) == (other.state, other.action, other.outcome)


@dataclass(frozen=True)
class OutcomeDistribution:
    """Empirical categorical distribution kept as integer counts.

    Masses are exactly ``count / sample_size``.
    """

    counts: Mapping[StateKey, int]
    sample_size: int
    built_at: Stamp = (0, 0)
    origin: str = HISTORICAL

    def __post_init__(self):
        if any(c < 1 for c in self.counts.values()):
            raise ValueError("every support count must be >= 1")
        if sum(self.counts.values()) != self.sample_size:
            raise ValueError("counts must sum to sample_size")
        if self.origin not in (HISTORICAL, VERIFIED):
            raise ValueError(f"unknown origin {self.origin!r}")
        object.__setattr__(self, "counts", dict(sorted(self.counts.items())))
        object.__setattr__(self, "built_at", tuple(self.built_at))

    @classmethod
    def from_outcomes(cls, outcomes: Iterable[StateKey], built_at: Stamp = (0, 0),
                      origin: str = HISTORICAL) -> OutcomeDistribution:
        counts: dict[StateKey, int] = {}
        for o in outcomes:
            counts[o] = counts.get(o, 0) + 1
        return cls(counts, sum(counts.values()), built_at, origin)

    @property
    def support(self) -> dict[StateKey, float]:
        n = self.sample_size
        return {k: c / n for k, c in self.counts.items()}

    def mass(self, outcome: StateKey) -> float:
        if not self.sample_size:
            return 0.0
        return self.counts.get(outcome, 0) / self.sample_size

    def mode(self) -> StateKey:
        return min(self.counts, key=lambda k: (-self.counts[k], k.key_bytes))

    def __bool__(self) -> bool:
        return self.sample_size > 0


def empirical_histogram(counterparts: list[ExperienceRecord], built_at: Stamp = (0, 0)) -> OutcomeDistribution:
    if not counterparts:
        raise ValueError("empirical histogram needs at least one counterpart")
    counts: dict[StateKey, int] = {}
    for rec in counterparts:
        counts[rec.outcome] = counts.get(rec.outcome, 0) + rec.meta.exec_count
    return OutcomeDistribution(counts, sum(counts.values()), built_at, HISTORICAL)


@dataclass(frozen=True)
class Tombstone:
    entry: ExperienceRecord | tuple[Key, OutcomeDistribution]
    removed_at: Stamp


def _order(rec: ExperienceRecord):
    return (rec.meta.recorded_at, rec.outcome.key_bytes)


class ExperienceBank:
    """Single-writer store of experience records and verified summaries."""

    def __init__(self):
        self._records: dict[Key, list[ExperienceRecord]] = {}
        self._summaries: dict[Key, OutcomeDistribution] = {}
        self.tombstones: list[Tombstone] = []
        # bumps on every mutation; planners key their caches on it
        self.version = 0
        self._changes: list[Key] = []  # key touched by each mutation, in version order

    def __len__(self) -> int:
        return sum(len(v) for v in self._records.values())

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ExperienceBank):
            return NotImplemented
        return (
            list(self._records.items()) == list(other._records.items())
            and list(self._summaries.items()) == list(other._summaries.items())
            and self.tombstones == other.tombstones
        )

    def records(self) -> Iterator[ExperienceRecord]:
        for recs in self._records.values():
            yield from recs

    def summaries(self) -> dict[Key, OutcomeDistribution]:
        return dict(self._summaries)

    def keys(self) -> list[Key]:
        """Every (state, action) with a record or a verified summary."""
        seen = dict.fromkeys(self._records)
        seen.update(dict.fromkeys(self._summaries))
        return list(seen)

    def insert(self, record: ExperienceRecord) -> ExperienceRecord:
        recs = self._records.setdefault(record.key, [])
        self._touch(record.key)
        for existing in recs:
            if existing.same_transition(record):
                existing.meta.exec_count += record.meta.exec_count
                existing.meta.last_seen = max(existing.meta.last_seen, record.meta.last_seen)
                return existing
        recs.append(record)
        return record

    def counterparts(self, state: StateKey, action: Any) -> list[ExperienceRecord]:
        return sorted(self._records.get((state, action), ()), key=_order)

    def summary(self, state: StateKey, action: Any) -> OutcomeDistribution | None:
        return self._summaries.get((state, action))

    def is_newer_than_summary(self, record: ExperienceRecord) -> bool:
        summ = self._summaries.get(record.key)
        return summ is not None and record.meta.recorded_at >= summ.built_at

    def belief(self, state: StateKey, action: Any) -> OutcomeDistribution | None:
        """Current outcome belief for a key.

        A verified summary counts as ``sample_size`` observations and is pooled
        with any records inserted after it.
        """
        summ = self._summaries.get((state, action))
        recs = self._records.get((state, action), ())
        if summ is None and not recs:
            return None
        if summ is not None and not recs:
            return summ
        counts = dict(summ.counts) if summ is not None else {}
        for rec in recs:
            counts[rec.outcome] = counts.get(rec.outcome, 0) + rec.meta.exec_count
        built = summ.built_at if summ is not None else (0, 0)
        return OutcomeDistribution(counts, sum(counts.values()), built, HISTORICAL)

    def _touch(self, key: Key) -> None:
        self.version += 1
        self._changes.append(key)

    def changed_since(self, version: int) -> set[Key] | None:
        """Keys mutated after ``version``, or None if that history is not available."""
        if not 0 <= version <= self.version or len(self._changes) != self.version:
            return None
        return set(self._changes[version:])

    def latest_realignment(self) -> Stamp | None:
        if not self._summaries:
            return None
        return max(s.built_at for s in self._summaries.values())

    def realign(self, key: Key, truth: OutcomeDistribution) -> int:
        """Tombstone the key's records and any prior summary; install ``truth``.

        Returns the number of records removed.
        """
        if truth.origin != VERIFIED:
            raise ValueError("realignment needs a verified distribution")
        removed = self.counterparts(*key)
        for rec in removed:
            self.tombstones.append(Tombstone(rec, truth.built_at))
        self._records.pop(key, None)
        old = self._summaries.pop(key, None)
        if old is not None:
            self.tombstones.append(Tombstone((key, old), truth.built_at))
        self._summaries[key] = truth
        self._touch(key)
        return len(removed)

    # -- persistence -------------------------------------------------------

    def save(self, path: str | os.PathLike) -> None:
        lines = [FORMAT_HEADER]
        for recs in self._records.values():
            lines.extend(_dump(_record_obj(r)) for r in recs)
        for key, summ in self._summaries.items():
            lines.append(_dump(_summary_obj(key, summ)))
        for tomb in self.tombstones:
            lines.append(_dump(_tombstone_obj(tomb)))
        atomic_write(path, "\n".join(lines) + "\n")

    @classmethod
    def load(cls, path: str | os.PathLike) -> ExperienceBank:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
        return cls.loads(text)

    @classmethod
    def loads(cls, text: str) -> ExperienceBank:
        if not text.endswith("\n"):
            raise BankFormatError(text.count("\n") + 1, "truncated file (missing final newline)")
        lines = text.split("\n")[:-1]
        if not lines or lines[0] != FORMAT_HEADER:
            raise BankFormatError(1, f"expected header {FORMAT_HEADER!r}")
        parsed = []
        for lineno, line in enumerate(lines[1:], start=2):
            try:
                parsed.append(_parse_entry(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise BankFormatError(lineno, str(exc)) from None
        bank = cls()
        for kind, value in parsed:
            if kind == "record":
                bank._records.setdefault(value.key, []).append(value)
            elif kind == "summary":
                bank._summaries[value[0]] = value[1]
            else:
                bank.tombstones.append(value)
        return bank


def atomic_write(path: str | os.PathLike, text: str) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def _record_obj(r: ExperienceRecord) -> dict:
    return {
        "kind": "record",
        "state": r.state.encode(),
        "action": r.action,
        "outcome": r.outcome.encode(),
        "reward": r.reward,
        "episode": r.meta.recorded_at[0],
        "step": r.meta.recorded_at[1],
        "exec_count": r.meta.exec_count,
        "last_seen": list(r.meta.last_seen),
        "trajectory": [[k.encode(), a] for k, a in r.meta.trajectory],
    }


def _summary_obj(key: Key, s: OutcomeDistribution) -> dict:
    return {
        "kind": "summary",
        "state": key[0].encode(),
        "action": key[1],
        "support": [[k.encode(), c] for k, c in s.counts.items()],
        "n": s.sample_size,
        "built_at": list(s.built_at),
    }


def _tombstone_obj(t: Tombstone) -> dict:
    if isinstance(t.entry, ExperienceRecord):
        original = _record_obj(t.entry)
    else:
        original = _summary_obj(*t.entry)
    return {"kind": "tombstone", "original": _dump(original), "removed_at": list(t.removed_at)}


def _action(value):
    if isinstance(value, list):
        raise ValueError("action must be a scalar")
    return value


def _parse_entry(obj: dict):
    kind = obj["kind"]
    if kind == "record":
        reward = obj["reward"]
        meta = Metadata(
            recorded_at=(int(obj["episode"]), int(obj["step"])),
            trajectory=tuple((StateKey.decode(k), _action(a)) for k, a in obj["trajectory"]),
            exec_count=int(obj["exec_count"]),
            last_seen=tuple(obj["last_seen"]),
        )
        rec = ExperienceRecord(
            StateKey.decode(obj["state"]),
            _action(obj["action"]),
            StateKey.decode(obj["outcome"]),
            None if reward is None else float(reward),
            meta,
        )
        return kind, rec
    if kind == "summary":
        key = (StateKey.decode(obj["state"]), _action(obj["action"]))
        counts = {StateKey.decode(k): int(c) for k, c in obj["support"]}
        return kind, (key, OutcomeDistribution(counts, int(obj["n"]), tuple(obj["built_at"]), VERIFIED))
    if kind == "tombstone":
        inner_kind, inner = _parse_entry(json.loads(obj["original"]))
        if inner_kind == "tombstone":
            raise ValueError("nested tombstone")
        return kind, Tombstone(inner, tuple(obj["removed_at"]))
    raise ValueError(f"unknown entry kind {kind!r}")
