"""Data model and JSONL I/O for dialogue and single-turn classification datasets.

Two record shapes are supported:
  - dialogue: conversations of strictly alternating A/B turns, each turn
    optionally carrying an emotion and/or act label
  - utterance: single labeled utterances with an intent label and a language tag

Everything is immutable after load; loading and sampling are single-threaded.
"""
from __future__ import annotations

import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field

SPEAKERS = ("A", "B")

EMOTION_LABELS = ("neutral", "anger", "disgust", "fear", "happiness", "sadness", "surprise")
ACT_LABELS = ("inform", "question", "directive", "commissive")


class CorpusError(ValueError):
    """Malformed record, invariant violation, or unknown label."""


@dataclass(frozen=True)
class Turn:
    speaker: str
    text: str
    emotion: str | None = None
    act: str | None = None

    def __post_init__(self):
        if self.speaker not in SPEAKERS:
            raise CorpusError(f"speaker must be one of {SPEAKERS}, got {self.speaker!r}")
        if not self.text.strip():
            raise CorpusError("turn text is empty after trimming")

    def label(self, task: str) -> str | None:
        if task == "emotion":
            return self.emotion
        if task == "act":
            return self.act
        raise CorpusError(f"turns carry no {task!r} label")


@dataclass(frozen=True)
class Conversation:
    id: str
    turns: tuple[Turn, ...]
    provenance: str = "gold"
    source_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "turns", tuple(self.turns))
        if len(self.turns) < 2:
            raise CorpusError(f"conversation {self.id!r}: needs >= 2 turns")
        for prev, cur in zip(self.turns, self.turns[1:]):
            if prev.speaker == cur.speaker:
                raise CorpusError(f"conversation {self.id!r}: non-alternating speakers")
        if self.provenance == "silver" and self.source_id is None:
            raise CorpusError(f"conversation {self.id!r}: silver record requires source_id")

    @property
    def n(self) -> int:
        return len(self.turns)


@dataclass(frozen=True)
class LabeledUtterance:
    id: str
    text: str
    intent: str
    lang: str
    provenance: str = "gold"
    source_id: str | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise CorpusError(f"utterance {self.id!r}: empty text")
        if self.lang not in ("en", "es"):
            raise CorpusError(f"utterance {self.id!r}: lang must be en or es, got {self.lang!r}")
        if self.provenance == "silver" and self.source_id is None:
            raise CorpusError(f"utterance {self.id!r}: silver record requires source_id")


@dataclass(frozen=True)
class LabelSpace:
    task: str  # emotion | act | intent
    labels: tuple[str, ...]
    majority: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise CorpusError("duplicate label names")
        if self.majority is not None and not (0 <= self.majority < len(self.labels)):
            raise CorpusError("majority index out of range")

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, label: str) -> bool:
        return label in self.labels

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise CorpusError(f"unknown label {label!r}") from None

    def to_dict(self) -> dict:
        d = {"task": self.task, "labels": list(self.labels)}
        if self.majority is not None:
            d["majority"] = self.majority
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LabelSpace":
        return cls(task=d["task"], labels=tuple(d["labels"]), majority=d.get("majority"))


@dataclass
class Dataset:
    label_space: LabelSpace
    train: list = field(default_factory=list)
    validation: list = field(default_factory=list)
    test: list = field(default_factory=list)

    def __post_init__(self):
        seen = {}
        for name, part in (("train", self.train), ("validation", self.validation), ("test", self.test)):
            for rec in part:
                if rec.id in seen and seen[rec.id] != name:
                    raise CorpusError(f"id {rec.id!r} appears in both {seen[rec.id]} and {name}")
                seen[rec.id] = name
        for part in (self.train, self.validation, self.test):
            for rec in part:
                for label in record_labels(rec, self.label_space.task):
                    if label not in self.label_space:
                        raise CorpusError(f"unknown label {label!r} in dataset")


def record_labels(record, task: str) -> list[str]:
    """All task labels carried by a record (one per turn for conversations)."""
    if isinstance(record, Conversation):
        return [t.label(task) for t in record.turns if t.label(task) is not None]
    return [record.intent]


def _turn_from_dict(d: dict) -> Turn:
    return Turn(speaker=d["speaker"], text=d["text"], emotion=d.get("emotion"), act=d.get("act"))


def _turn_to_dict(t: Turn) -> dict:
    d = {"speaker": t.speaker, "text": t.text}
    if t.emotion is not None:
        d["emotion"] = t.emotion
    if t.act is not None:
        d["act"] = t.act
    return d


def record_to_dict(record) -> dict:
    if isinstance(record, Conversation):
        d = {"id": record.id, "turns": [_turn_to_dict(t) for t in record.turns]}
        if record.provenance != "gold":
            d["provenance"] = record.provenance
            d["source_id"] = record.source_id
        return d
    d = {"id": record.id, "text": record.text, "intent": record.intent, "lang": record.lang}
    if record.provenance != "gold":
        d["provenance"] = record.provenance
        d["source_id"] = record.source_id
    return d


def record_from_dict(d: dict, schema: str):
    if schema == "dialogue":
        return Conversation(
            id=d["id"],
            turns=tuple(_turn_from_dict(t) for t in d["turns"]),
            provenance=d.get("provenance", "gold"),
            source_id=d.get("source_id"),
        )
    if schema == "utterance":
        return LabeledUtterance(
            id=d["id"],
            text=d["text"],
            intent=d["intent"],
            lang=d["lang"],
            provenance=d.get("provenance", "gold"),
            source_id=d.get("source_id"),
        )
    raise CorpusError(f"unknown schema {schema!r}")


def load_jsonl(path, schema: str, label_space: LabelSpace | None = None) -> list:
    """Load one dataset partition from a JSONL file, in file order.

    Raises CorpusError with the 1-based line number for malformed lines,
    duplicate ids, and (when a label space is given) unknown labels.
    """
    records = []
    seen_ids = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                rec = record_from_dict(d, schema)
            except (json.JSONDecodeError, KeyError, TypeError, CorpusError) as e:
                raise CorpusError(f"{path}:{lineno}: malformed record: {e}") from e
            if rec.id in seen_ids:
                raise CorpusError(f"{path}:{lineno}: duplicate id {rec.id!r}")
            seen_ids.add(rec.id)
            if label_space is not None:
                for label in record_labels(rec, label_space.task):
                    if label not in label_space:
                        raise CorpusError(f"{path}:{lineno}: unknown label {label!r}")
            records.append(rec)
    return records


def write_jsonl(records, path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps(record_to_dict(rec), ensure_ascii=False) + "\n")


def load_label_space(path) -> LabelSpace:
    with open(path, encoding="utf-8") as f:
        return LabelSpace.from_dict(json.load(f))


def majority_label(partition, label_space: LabelSpace) -> str:
    """Most frequent task label in the partition; ties go to the lowest label index."""
    if not partition:
        raise CorpusError("empty partition")
    counts = Counter()
    for rec in partition:
        counts.update(record_labels(rec, label_space.task))
    return max(label_space.labels, key=lambda l: (counts[l], -label_space.index(l)))


def _round_half_away(x: float) -> int:
    return int(math.floor(x + 0.5)) if x >= 0 else -int(math.floor(-x + 0.5))


def _conversation_stratum(conv: Conversation, label_space: LabelSpace, majority: str) -> str:
    """Stratum of a whole conversation: most frequent non-majority turn label,
    falling back to the majority label when no other label occurs."""
    counts = Counter(l for l in record_labels(conv, label_space.task) if l != majority)
    if not counts:
        return majority
    return max(label_space.labels, key=lambda l: (counts[l], -label_space.index(l)))


def sample_few_shot(partition, fraction: float, seed: int, label_space: LabelSpace,
                    stratified: bool = True) -> list:
    """Seeded few-shot subsample keeping at least one record per occurring label.

    For each label with count c, picks max(1, round(fraction * c)) records
    uniformly without replacement (round = half away from zero). Dialogue
    partitions stratify on whole conversations by their dominant non-majority
    turn label. Output preserves partition order; identical (partition,
    fraction, seed) always yield identical output.
    """
    if not (0 < fraction <= 1):
        raise CorpusError(f"fraction must be in (0, 1], got {fraction}")
    if fraction == 1.0:
        return list(partition)
    rng = random.Random(seed)
    if not stratified:
        k = max(1, _round_half_away(fraction * len(partition)))
        chosen = set(rng.sample(range(len(partition)), k))
        return [rec for i, rec in enumerate(partition) if i in chosen]

    majority = label_space.labels[label_space.majority] if label_space.majority is not None \
        else majority_label(partition, label_space)
    groups: dict[str, list[int]] = {label: [] for label in label_space.labels}
    for i, rec in enumerate(partition):
        if isinstance(rec, Conversation):
            groups[_conversation_stratum(rec, label_space, majority)].append(i)
        else:
            groups[rec.intent].append(i)

    chosen = set()
    for label in label_space.labels:
        idxs = groups[label]
        if not idxs:
            continue
        k = min(len(idxs), max(1, _round_half_away(fraction * len(idxs))))
        chosen.update(rng.sample(idxs, k))
    return [rec for i, rec in enumerate(partition) if i in chosen]
