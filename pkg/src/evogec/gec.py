"""Generative error correction: render the in-context query, parse the answer, score a prompt."""

from __future__ import annotations

import logging
import random
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from evogec.corpus import Corpus, Utterance
from evogec.errors import DataError, MissingReferenceError, ProviderError
from evogec.llm import CompletionRequest, CostLedger, Provider, ResponseCache, complete_cached, utterance_marker
from evogec.metrics import DEFAULT_POLICY, EditStats, NormPolicy, WerReport, align, corpus_wer, normalize

logger = logging.getLogger(__name__)

SEED_PROMPT_NAMES = ("prompt-1", "prompt-2", "prompt-3", "prompt-4", "prompt-5")
BUILTIN_PROMPT_NAMES = ("baseline",) + SEED_PROMPT_NAMES

HYPOTHESES_HEADER = "Hypotheses:"
ANSWER_LABEL = "The true transcription is:"
REQUEST_LINE = "Report the true transcription of the hypotheses above. Reply with the transcription only."


@dataclass(frozen=True)
class InstructionPrompt:
    name: str
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"prompt {self.name!r} has empty text")


def builtin_prompt(name: str) -> InstructionPrompt:
    try:
        text = resources.files("evogec").joinpath("prompts", f"{name}.txt").read_text(encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"no built-in prompt named {name!r}") from None
    return InstructionPrompt(name, text)


def load_prompt(path) -> InstructionPrompt:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read prompt file {path}: {exc}") from exc
    if not text.strip():
        raise DataError(f"prompt file {path} is empty")
    return InstructionPrompt(path.stem, text)


def load_prompt_dir(directory) -> list[InstructionPrompt]:
    """All ``*.txt`` prompts in a directory, sorted by file name."""
    paths = sorted(Path(directory).glob("*.txt"))
    if not paths:
        raise DataError(f"no prompt files in {directory}")
    return [load_prompt(p) for p in paths]


@dataclass(frozen=True)
class Demonstration:
    hypotheses: tuple[str, ...]
    reference: str
    source_id: Optional[str] = None

    def __post_init__(self):
        if not self.hypotheses:
            raise ValueError("demonstration needs at least one hypothesis")
        if not self.reference:
            raise ValueError("demonstration reference must be non-empty")


def _hypothesis_block(hypotheses: Sequence[str]) -> str:
    lines = [HYPOTHESES_HEADER]
    lines.extend(f"{k}. {h}" for k, h in enumerate(hypotheses, start=1))
    return "\n".join(lines)


def render_query(
    instruction: InstructionPrompt,
    demos: Sequence[Demonstration],
    utterance: Utterance,
    marker: bool = True,
) -> str:
    """Lay out the instruction, each demonstration and the target N-best list.

    Paragraphs, separated by blank lines: instruction; optional utterance
    marker; per demonstration a hypothesis block then its answer line; the
    target hypothesis block; the request line.
    """
    paragraphs = [instruction.text.strip()]
    if marker:
        paragraphs.append(utterance_marker(utterance.id))
    for demo in demos:
        paragraphs.append(_hypothesis_block(demo.hypotheses))
        paragraphs.append(f"{ANSWER_LABEL} {demo.reference}")
    paragraphs.append(_hypothesis_block(utterance.hypotheses))
    paragraphs.append(REQUEST_LINE)
    return "\n\n".join(paragraphs) + "\n"


_QUOTES = "\"'`“”‘’"
_LABEL_RE = re.compile(r"^the true transcription is\s*:?", re.IGNORECASE)


def _clean_once(text: str) -> str:
    text = text.strip().strip(_QUOTES).strip()
    while True:
        stripped = _LABEL_RE.sub("", text, count=1)
        if stripped == text:
            break
        text = stripped.strip().strip(_QUOTES).strip()
    for line in text.splitlines():
        line = line.strip().strip(_QUOTES).strip()
        if line:
            return line
    return ""


def parse_correction(raw: str, utterance: Utterance) -> tuple[str, bool]:
    """Extract the transcription from a model answer.

    Strips whitespace and quotes, drops a leading "the true transcription is"
    label and keeps the first non-empty line. An empty result falls back to
    the top hypothesis.
    """
    text = raw
    for _ in range(8):
        cleaned = _clean_once(text)
        if cleaned == text:
            break
        text = cleaned
    if not text:
        return utterance.hypotheses[0], True
    return text, False


@dataclass(frozen=True)
class CorrectionResult:
    utterance_id: str
    raw_response: str
    parsed: str
    fallback_used: bool
    stats: Optional[EditStats] = None


@dataclass(frozen=True)
class GecSettings:
    max_output_tokens: int = 256
    temperature: float = 0.0
    concurrency: int = 4
    marker: bool = True
    retries: int = 3
    backoff: float = 1.0

    def to_dict(self) -> dict:
        return dict(vars(self))


def _correct_one(provider, cache, ledger, instruction, demos, utt, settings: GecSettings) -> tuple[str, str, bool]:
    request = CompletionRequest(
        prompt_text=render_query(instruction, demos, utt, marker=settings.marker),
        max_output_tokens=settings.max_output_tokens,
        temperature=settings.temperature,
        tag="gec",
    )
    try:
        response = complete_cached(
            provider, cache, request, ledger, retries=settings.retries, backoff=settings.backoff
        )
    except ProviderError as exc:
        logger.warning("utterance %s: %s; falling back to the top hypothesis", utt.id, exc)
        return "", utt.hypotheses[0], True
    parsed, fallback = parse_correction(response.text, utt)
    return response.text, parsed, fallback


def correct_corpus(
    provider: Provider,
    cache: Optional[ResponseCache],
    ledger: Optional[CostLedger],
    instruction: InstructionPrompt,
    demos: Sequence[Demonstration],
    corpus: Corpus,
    policy: NormPolicy = DEFAULT_POLICY,
    settings: GecSettings = GecSettings(),
    score: bool = True,
) -> tuple[list[CorrectionResult], Optional[WerReport]]:
    """Correct every utterance and, when ``score`` is set, compute the corpus WER.

    Results follow corpus order whatever order completions finish in. A hard
    provider failure on one utterance degrades to its top hypothesis.
    """
    if score and not corpus.labeled:
        missing = next(u.id for u in corpus if not u.labeled)
        raise MissingReferenceError(f"references required: utterance {missing!r} has none")

    def work(utt):
        return _correct_one(provider, cache, ledger, instruction, demos, utt, settings)

    if settings.concurrency > 1 and len(corpus) > 1:
        with ThreadPoolExecutor(max_workers=settings.concurrency) as pool:
            outputs = list(pool.map(work, corpus.utterances))
    else:
        outputs = [work(u) for u in corpus]

    results = []
    for utt, (raw, parsed, fallback) in zip(corpus, outputs):
        stats = None
        if utt.reference is not None:
            stats = align(normalize(utt.reference, policy), normalize(parsed, policy))
        results.append(CorrectionResult(utt.id, raw, parsed, fallback, stats))

    report = None
    if score:
        report = corpus_wer(
            (normalize(u.reference, policy), normalize(r.parsed, policy), u.id)
            for u, r in zip(corpus, results)
        )
    return results, report


def pick_demonstrations(corpus: Corpus, d: int, seed: int) -> list[Demonstration]:
    """Seeded choice of ``d`` labeled utterances to use as in-context demonstrations."""
    if not 0 <= d <= len(corpus):
        raise DataError(f"demonstration count {d} out of range 0..{len(corpus)}")
    if d == 0:
        return []
    labeled = [u for u in corpus if u.labeled and u.reference.strip()]
    if len(labeled) < d:
        raise DataError(f"only {len(labeled)} labeled utterances available for {d} demonstrations")
    picked = random.Random(seed).sample(labeled, d)
    return [Demonstration(u.hypotheses, u.reference, u.id) for u in picked]
