"""Word error rate: normalization, Levenshtein alignment and corpus scoring."""

from __future__ import annotations

import string
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

from evogec.corpus import Corpus, Utterance
from evogec.errors import DataError, MissingReferenceError

_PUNCT = string.punctuation


@dataclass(frozen=True)
class NormPolicy:
    lowercase: bool = True
    strip_punctuation: bool = True

    @classmethod
    def parse(cls, spec: str) -> "NormPolicy":
        """Build a policy from a comma list such as ``"lowercase,punct"`` (``"none"`` disables both)."""
        parts = {p.strip() for p in spec.split(",") if p.strip()}
        unknown = parts - {"lowercase", "punct", "none"}
        if unknown:
            raise ValueError(f"unknown normalization option(s): {', '.join(sorted(unknown))}")
        return cls(lowercase="lowercase" in parts, strip_punctuation="punct" in parts)

    def describe(self) -> str:
        parts = [n for n, on in (("lowercase", self.lowercase), ("punct", self.strip_punctuation)) if on]
        return ",".join(parts) or "none"


DEFAULT_POLICY = NormPolicy()


def normalize(text: str, policy: NormPolicy = DEFAULT_POLICY) -> list[str]:
    if policy.lowercase:
        text = text.lower()
    tokens = text.split()
    if policy.strip_punctuation:
        tokens = [t.strip(_PUNCT) for t in tokens]
        tokens = [t for t in tokens if t]
    return tokens


@dataclass(frozen=True)
class EditStats:
    substitutions: int = 0
    insertions: int = 0
    deletions: int = 0
    ref_len: int = 0

    @property
    def edits(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def wer(self) -> float:
        if self.ref_len == 0:
            return 0.0 if self.edits == 0 else float("inf")
        return self.edits / self.ref_len

    def __add__(self, other: "EditStats") -> "EditStats":
        return EditStats(
            self.substitutions + other.substitutions,
            self.insertions + other.insertions,
            self.deletions + other.deletions,
            self.ref_len + other.ref_len,
        )


class DiffOp(NamedTuple):
    kind: str  # "match" | "sub" | "ins" | "del"
    ref: Optional[str]
    hyp: Optional[str]


def _backtrace(ref: Sequence[str], hyp: Sequence[str]) -> list[DiffOp]:
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dist[i][0] = i
    for j in range(m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        row, prev = dist[i], dist[i - 1]
        r = ref[i - 1]
        for j in range(1, m + 1):
            row[j] = min(
                prev[j - 1] + (r != hyp[j - 1]),
                prev[j] + 1,
                row[j - 1] + 1,
            )

    # walk back from the end; on ties prefer diagonal, then deletion, then insertion
    ops = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            kind = "match" if ref[i - 1] == hyp[j - 1] else "sub"
            ops.append(DiffOp(kind, ref[i - 1], hyp[j - 1]))
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            ops.append(DiffOp("del", ref[i - 1], None))
            i -= 1
        else:
            ops.append(DiffOp("ins", None, hyp[j - 1]))
            j -= 1
    ops.reverse()
    return ops


def diff_markup(ref: Sequence[str], hyp: Sequence[str]) -> list[DiffOp]:
    """Minimal-edit alignment of two token lists as match/sub/ins/del operations."""
    return _backtrace(ref, hyp)


def align(ref: Sequence[str], hyp: Sequence[str]) -> EditStats:
    s = i = d = 0
    for op in _backtrace(ref, hyp):
        if op.kind == "sub":
            s += 1
        elif op.kind == "ins":
            i += 1
        elif op.kind == "del":
            d += 1
    return EditStats(s, i, d, len(ref))


def replay(ref: Sequence[str], ops: Iterable[DiffOp]) -> list[str]:
    """Apply a diff to ``ref``; yields the hypothesis the diff was computed against."""
    out = []
    pos = 0
    for op in ops:
        if op.kind in ("match", "sub", "del"):
            if pos >= len(ref) or ref[pos] != op.ref:
                raise ValueError(f"diff does not apply to reference at token {pos}")
            pos += 1
        if op.kind in ("match", "sub", "ins"):
            out.append(op.hyp)
    if pos != len(ref):
        raise ValueError("diff does not consume the whole reference")
    return out


def render_diff(ops: Iterable[DiffOp]) -> str:
    """Plain-text diff: ``^ref>hyp^`` substitutions, ``+ins+`` insertions, ``-del-`` deletions."""
    words = []
    for op in ops:
        if op.kind == "match":
            words.append(op.ref)
        elif op.kind == "sub":
            words.append(f"^{op.ref}>{op.hyp}^")
        elif op.kind == "ins":
            words.append(f"+{op.hyp}+")
        else:
            words.append(f"-{op.ref}-")
    return " ".join(words)


@dataclass(frozen=True)
class WerReport:
    per_utterance: tuple[tuple[str, EditStats], ...]
    total: EditStats

    @property
    def corpus_wer(self) -> float:
        return self.total.edits / self.total.ref_len

    @property
    def percent(self) -> float:
        return 100.0 * self.total.edits / self.total.ref_len


def corpus_wer(pairs: Iterable[tuple[Sequence[str], Sequence[str], str]]) -> WerReport:
    """Micro-averaged WER over ``(ref_tokens, hyp_tokens, id)`` triples.

    Edit counts are summed as integers and divided once.
    """
    per_utt = []
    total = EditStats()
    for ref, hyp, utt_id in pairs:
        stats = align(ref, hyp)
        per_utt.append((utt_id, stats))
        total = total + stats
    if not per_utt:
        raise DataError("cannot compute WER over an empty set of utterances")
    if total.ref_len == 0:
        raise DataError("total reference length is zero")
    return WerReport(tuple(per_utt), total)


def _require_reference(utt: Utterance) -> str:
    if utt.reference is None:
        raise MissingReferenceError(f"references required: utterance {utt.id!r} has none")
    return utt.reference


def onebest_baseline(corpus: Corpus, policy: NormPolicy = DEFAULT_POLICY) -> WerReport:
    return corpus_wer(
        (normalize(_require_reference(u), policy), normalize(u.hypotheses[0], policy), u.id)
        for u in corpus
    )


def best_hypothesis_index(utt: Utterance, policy: NormPolicy = DEFAULT_POLICY) -> int:
    """Index of the hypothesis with the fewest edits against the reference; ties go to the lowest index."""
    ref = normalize(_require_reference(utt), policy)
    best, best_edits = 0, None
    for k, hyp in enumerate(utt.hypotheses):
        edits = align(ref, normalize(hyp, policy)).edits
        if best_edits is None or edits < best_edits:
            best, best_edits = k, edits
    return best


def oracle_nbest_baseline(corpus: Corpus, policy: NormPolicy = DEFAULT_POLICY) -> WerReport:
    pairs = []
    for u in corpus:
        k = best_hypothesis_index(u, policy)
        pairs.append((normalize(u.reference, policy), normalize(u.hypotheses[k], policy), u.id))
    return corpus_wer(pairs)
