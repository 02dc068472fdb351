"""Loading HyPoradise-style N-best corpora and drawing reproducible subsets."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from evogec.errors import DataError


class Split(str, Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"
    OTHER = "other"


@dataclass(frozen=True)
class Utterance:
    id: str
    hypotheses: tuple[str, ...]
    reference: Optional[str] = None

    def __post_init__(self):
        if not self.hypotheses:
            raise DataError(f"utterance {self.id!r} has no hypotheses")

    @property
    def labeled(self) -> bool:
        return self.reference is not None

    @property
    def has_empty_hypothesis(self) -> bool:
        # empty raw hypotheses are kept and flagged rather than dropped
        return any(not h.strip() for h in self.hypotheses)


@dataclass(frozen=True)
class Corpus:
    name: str
    split: Split
    utterances: tuple[Utterance, ...]

    def __post_init__(self):
        seen = set()
        for utt in self.utterances:
            if utt.id in seen:
                raise DataError(f"duplicate utterance id {utt.id!r} in corpus {self.name!r}")
            seen.add(utt.id)

    def __len__(self) -> int:
        return len(self.utterances)

    def __iter__(self):
        return iter(self.utterances)

    def __getitem__(self, i: int) -> Utterance:
        return self.utterances[i]

    @property
    def ids(self) -> list[str]:
        return [u.id for u in self.utterances]

    @property
    def labeled(self) -> bool:
        return all(u.labeled for u in self.utterances)

    def by_id(self) -> dict[str, Utterance]:
        return {u.id: u for u in self.utterances}

    def replace(self, utterances: Iterable[Utterance]) -> "Corpus":
        return Corpus(self.name, self.split, tuple(utterances))


@dataclass(frozen=True)
class FieldMapping:
    hypotheses_key: str = "input"
    reference_key: str = "output"
    id_key: Optional[str] = None

    def __post_init__(self):
        for key in (self.hypotheses_key, self.reference_key, self.id_key):
            if key is not None and not key:
                raise DataError("field mapping keys must be non-empty")


def _read_records(path: Path) -> list:
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    stripped = text.lstrip()
    if stripped.startswith("["):
        try:
            records = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON array: {exc}") from exc
        return records

    records = []
    for lineno, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise DataError(
                f"{path}: malformed record {len(records)} (line {lineno + 1}): {exc}"
            ) from exc
    return records


def _to_utterance(index: int, record, mapping: FieldMapping) -> Utterance:
    if not isinstance(record, dict):
        raise DataError(f"malformed record {index}: expected a JSON object")
    if mapping.hypotheses_key not in record:
        raise DataError(f"malformed record {index}: missing {mapping.hypotheses_key!r}")
    hyps = record[mapping.hypotheses_key]
    if not isinstance(hyps, list) or not hyps or not all(isinstance(h, str) for h in hyps):
        raise DataError(
            f"malformed record {index}: {mapping.hypotheses_key!r} must be a non-empty list of strings"
        )
    ref = record.get(mapping.reference_key)
    if ref is not None and not isinstance(ref, str):
        raise DataError(f"malformed record {index}: {mapping.reference_key!r} must be a string")

    if mapping.id_key is None:
        utt_id = f"utt-{index}"
    else:
        if mapping.id_key not in record:
            raise DataError(f"malformed record {index}: missing {mapping.id_key!r}")
        utt_id = str(record[mapping.id_key])
    return Utterance(utt_id, tuple(hyps), ref)


def load_corpus(
    path, mapping: FieldMapping = FieldMapping(), split: Split | str = Split.OTHER, name: str | None = None
) -> Corpus:
    """Load a JSON array or JSON-lines file of N-best records.

    The format is picked from the first non-whitespace character. Records
    keep file order; a record without a reference loads as unlabeled.
    """
    path = Path(path)
    records = _read_records(path)
    if not isinstance(records, list):
        raise DataError(f"{path}: top-level JSON must be an array of records")
    if not records:
        raise DataError(f"{path}: empty corpus")
    utterances = [_to_utterance(i, rec, mapping) for i, rec in enumerate(records)]
    return Corpus(name or path.stem, Split(split), tuple(utterances))


def dump_corpus(corpus: Corpus, path, mapping: FieldMapping = FieldMapping()) -> None:
    """Write a corpus as JSON lines readable by :func:`load_corpus` with the same mapping."""
    with open(path, "w", encoding="utf-8") as f:
        for utt in corpus:
            rec = {mapping.hypotheses_key: list(utt.hypotheses)}
            if utt.reference is not None:
                rec[mapping.reference_key] = utt.reference
            if mapping.id_key is not None:
                rec[mapping.id_key] = utt.id
            f.write(json.dumps(rec, ensure_ascii=False) + "\n")


def sample_subset(corpus: Corpus, n: int, seed: int) -> Corpus:
    """Seeded sample of ``n`` utterances without replacement, kept in corpus order."""
    if not 1 <= n <= len(corpus):
        raise DataError(f"subset size {n} out of range 1..{len(corpus)}")
    picked = sorted(random.Random(seed).sample(range(len(corpus)), n))
    return corpus.replace(corpus.utterances[i] for i in picked)


def exclude(corpus: Corpus, ids: Sequence[str]) -> Corpus:
    drop = set(ids)
    return corpus.replace(u for u in corpus if u.id not in drop)
