"""Turn multi-turn conversations into (prompt, chosen, rejected) triplets.

Alternating strategy: with agent replies ``a_1 .. a_A``, pair ``i`` takes
``a_i`` as chosen and the next reply ``a_{i+1}`` as rejected, with everything
before ``a_i`` as the prompt. A conversation yields ``max(A - 1, 0)``
triplets.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from .errors import InputError

log = logging.getLogger(__name__)

ROLES = ("user", "agent")


@dataclass(frozen=True)
class Turn:
    role: str
    content: str


@dataclass(frozen=True)
class Conversation:
    id: str
    turns: tuple
    system: str | None = None

    def __post_init__(self):
        turns = tuple(t if isinstance(t, Turn) else Turn(t["role"], t["content"]) for t in self.turns)
        object.__setattr__(self, "turns", turns)
        if len(turns) < 2:
            raise InputError(f"conversation {self.id!r} needs at least 2 turns, has {len(turns)}")
        for k, t in enumerate(turns):
            if t.role != ROLES[k % 2]:
                raise InputError(
                    f"conversation {self.id!r}: turn {k} has role {t.role!r}, expected {ROLES[k % 2]!r}"
                )
            if not isinstance(t.content, str):
                raise InputError(f"conversation {self.id!r}: turn {k} content is not text")

    @classmethod
    def from_dict(cls, doc: dict) -> "Conversation":
        if not isinstance(doc, dict) or "turns" not in doc:
            raise InputError("conversation record needs a 'turns' list")
        turns = doc["turns"]
        if not isinstance(turns, list) or not all(isinstance(t, dict) and {"role", "content"} <= t.keys() for t in turns):
            raise InputError("each turn needs 'role' and 'content'")
        return cls(str(doc.get("id", "")), tuple(turns), doc.get("system"))

    @property
    def agent_turns(self) -> int:
        return sum(t.role == "agent" for t in self.turns)


@dataclass(frozen=True)
class PreferenceTriplet:
    prompt: str
    chosen: str
    rejected: str
    source_id: str
    pair_index: int

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "PreferenceTriplet":
        return cls(doc["prompt"], doc["chosen"], doc["rejected"], str(doc["source_id"]), int(doc["pair_index"]))


def plain_template(system: str | None, turns) -> str:
    """``system:`` / ``user:`` / ``agent:`` tagged lines joined by newlines."""
    lines = [f"system: {system}"] if system else []
    lines += [f"{t.role}: {t.content}" for t in turns]
    return "\n".join(lines)


def chatml_template(system: str | None, turns) -> str:
    roles = {"user": "user", "agent": "assistant"}
    parts = [f"<|im_start|>system\n{system}<|im_end|>"] if system else []
    parts += [f"<|im_start|>{roles[t.role]}\n{t.content}<|im_end|>" for t in turns]
    return "\n".join(parts)


TEMPLATES: dict[str, Callable] = {"plain": plain_template, "chatml": chatml_template}


def _trim(conv: Conversation):
    system = conv.system.rstrip() if conv.system else conv.system
    return system, [Turn(t.role, t.content.rstrip()) for t in conv.turns]


def extract_alternating(conv: Conversation, template: Callable = plain_template) -> list[PreferenceTriplet]:
    """Pair each agent reply with the next one; skips pairs with identical text."""
    system, turns = _trim(conv)
    agent_pos = [k for k, t in enumerate(turns) if t.role == "agent"]
    out = []
    for i in range(len(agent_pos) - 1):
        pos = agent_pos[i]
        chosen, rejected = turns[pos].content, turns[agent_pos[i + 1]].content
        if chosen == rejected:
            log.warning("conversation %s pair %d: chosen equals rejected, skipped", conv.id, i + 1)
            continue
        out.append(PreferenceTriplet(template(system, turns[:pos]), chosen, rejected, conv.id, i + 1))
    return out


@dataclass
class CorpusStats:
    conversations: int = 0
    triplets: int = 0
    skipped_records: int = 0
    skipped_pairs: int = 0
    errors: list = field(default_factory=list)

    @property
    def triplets_per_conversation(self) -> float:
        return self.triplets / self.conversations if self.conversations else 0.0

    def to_dict(self) -> dict:
        return {
            "conversations": self.conversations,
            "triplets": self.triplets,
            "triplets_per_conversation": self.triplets_per_conversation,
            "skipped_records": self.skipped_records,
            "skipped_pairs": self.skipped_pairs,
            "errors": list(self.errors),
        }


def read_jsonl(lines: Iterable[str], stats: CorpusStats) -> Iterator[Conversation]:
    """Parse conversation records, logging and counting the ones that fail."""
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            yield Conversation.from_dict(json.loads(line))
        except (json.JSONDecodeError, InputError, TypeError, KeyError) as exc:
            stats.skipped_records += 1
            stats.errors.append(f"line {lineno}: {exc}")
            log.warning("skipping line %d: %s", lineno, exc)


def extract_corpus(
    convs: Iterable[Conversation],
    stats: CorpusStats | None = None,
    template: Callable = plain_template,
) -> Iterator[PreferenceTriplet]:
    """Stream triplets from ``convs`` in input order, updating ``stats`` as it goes."""
    stats = CorpusStats() if stats is None else stats
    for conv in convs:
        stats.conversations += 1
        got = extract_alternating(conv, template)
        stats.skipped_pairs += max(conv.agent_turns - 1, 0) - len(got)
        stats.triplets += len(got)
        yield from got


def split_train_eval(triplets, ratio: float = 0.9, seed: int = 0):
    """Shuffle with ``seed`` and cut at ``floor(ratio * N)``; returns ``(train, eval)``."""
    if not 0.0 < ratio < 1.0:
        raise InputError("ratio must lie strictly between 0 and 1")
    items = list(triplets)
    n_train = math.floor(ratio * len(items) + 1e-9)
    order = np.random.default_rng(seed).permutation(len(items))
    train = [items[i] for i in order[:n_train]]
    held = [items[i] for i in order[n_train:]]
    return train, held


def write_jsonl(records, path) -> int:
    count = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            doc = rec.to_dict() if hasattr(rec, "to_dict") else rec
            fh.write(json.dumps(doc, ensure_ascii=False, sort_keys=True) + "\n")
            count += 1
    return count


def read_triplets(path) -> list[PreferenceTriplet]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(PreferenceTriplet.from_dict(json.loads(line)))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise InputError(f"{path}:{lineno}: bad triplet record: {exc}") from exc
    return out
