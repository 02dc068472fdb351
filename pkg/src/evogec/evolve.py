"""Genetic-algorithm prompt evolution with LLM-performed crossover and mutation.

The population starts from N scored seed prompts. Each iteration takes the N
lowest-WER candidates, draws N parent pairs from them, asks the LLM to cross
over and mutate each pair into a child prompt, scores every child on the same
evaluation subset and appends it. Nothing is ever removed or re-scored.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import re
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

from evogec.corpus import Corpus, exclude, sample_subset
from evogec.errors import CheckpointError, ConfigError, ConfigMismatchError, DataError, RefusalError
from evogec.gec import GecSettings, InstructionPrompt, correct_corpus, pick_demonstrations
from evogec.llm import CompletionRequest, CostLedger, Provider, ResponseCache, complete_cached
from evogec.metrics import NormPolicy

logger = logging.getLogger(__name__)

Scorer = Callable[[InstructionPrompt], float]

SEED_OPERATOR = "seed"
GA_OPERATOR = "ga-crossover-mutate"

_PLACEHOLDER_RE = re.compile(r"\{parent_(a|b)\}")
_CHILD_RE = re.compile(r"<prompt>(.*?)</prompt>", re.DOTALL)


@dataclass(frozen=True)
class MetaPrompt:
    template: str

    def __post_init__(self):
        for needle in ("{parent_a}", "{parent_b}", "<prompt>", "</prompt>"):
            if needle not in self.template:
                raise ConfigError(f"meta-prompt template must contain {needle!r}")

    def render(self, parent_a: str, parent_b: str) -> str:
        # single pass so placeholder-like text inside a parent stays literal
        values = {"a": parent_a, "b": parent_b}
        return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], self.template)


def default_meta_prompt() -> MetaPrompt:
    text = resources.files("evogec").joinpath("prompts", "evolve_ga.txt").read_text(encoding="utf-8")
    return MetaPrompt(text)


@dataclass
class Candidate:
    prompt: InstructionPrompt
    score: float
    iteration: int = 0
    parents: tuple[int, ...] = ()
    operator: str = SEED_OPERATOR

    def to_dict(self) -> dict:
        return {
            "name": self.prompt.name,
            "text": self.prompt.text,
            "score": self.score,
            "iteration": self.iteration,
            "parents": list(self.parents),
            "operator": self.operator,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Candidate":
        return cls(
            InstructionPrompt(d["name"], d["text"]),
            d["score"],
            d["iteration"],
            tuple(d["parents"]),
            d["operator"],
        )


@dataclass(frozen=True)
class EvoConfig:
    pop_size: int = 5
    iterations: int = 3
    seed: int = 0
    eval_subset: int = 200
    eval_seed: int = 0
    demos: int = 1
    demo_seed: int = 0
    norm: str = "lowercase,punct"
    meta_template: str = field(default_factory=lambda: default_meta_prompt().template)
    operator_max_tokens: int = 1024
    operator_temperature: float = 0.0
    gec_max_tokens: int = 256
    gec_temperature: float = 0.0
    marker: bool = True

    def __post_init__(self):
        if self.pop_size < 2:
            raise ConfigError("population step size must be at least 2")
        if self.iterations < 1:
            raise ConfigError("need at least one iteration")
        MetaPrompt(self.meta_template)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "EvoConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise CheckpointError(f"unknown config keys in checkpoint: {sorted(unknown)}")
        return cls(**d)

    @property
    def policy(self) -> NormPolicy:
        return NormPolicy.parse(self.norm)

    def gec_settings(self, concurrency: int = 4, retries: int = 3, backoff: float = 1.0) -> GecSettings:
        return GecSettings(
            max_output_tokens=self.gec_max_tokens,
            temperature=self.gec_temperature,
            concurrency=concurrency,
            marker=self.marker,
            retries=retries,
            backoff=backoff,
        )


@dataclass
class EvolutionLog:
    config: dict
    eval_meta: dict = field(default_factory=dict)
    population: list[Candidate] = field(default_factory=list)
    iterations: list[dict] = field(default_factory=list)
    best_so_far: list[dict] = field(default_factory=list)
    status: str = "running"

    @property
    def best_index(self) -> int:
        return min(range(len(self.population)), key=lambda i: (self.population[i].score, i))

    @property
    def best(self) -> Candidate:
        return self.population[self.best_index]

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "eval_meta": self.eval_meta,
            "population": [c.to_dict() for c in self.population],
            "iterations": self.iterations,
            "best_so_far": self.best_so_far,
            "status": self.status,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EvolutionLog":
        try:
            return cls(
                config=d["config"],
                eval_meta=d.get("eval_meta", {}),
                population=[Candidate.from_dict(c) for c in d["population"]],
                iterations=d["iterations"],
                best_so_far=d["best_so_far"],
                status=d["status"],
            )
        except (KeyError, TypeError) as exc:
            raise CheckpointError(f"corrupt evolution log: {exc!r}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def select_best_subset(population: Sequence[Candidate], n: int) -> list[int]:
    """Indices of the ``n`` lowest-score candidates, best first; ties go to the earlier index."""
    if n > len(population):
        raise ValueError(f"cannot select {n} candidates from a population of {len(population)}")
    ranked = sorted(range(len(population)), key=lambda i: (population[i].score, i))
    return ranked[:n]


def pick_parents(subset: Sequence[int], rng: random.Random) -> tuple[int, int]:
    if len(subset) < 2:
        raise ValueError("need at least two candidates to pick parents from")
    a, b = rng.sample(list(subset), 2)
    return a, b


@dataclass(frozen=True)
class OperatorResult:
    child: str
    raw_response: str
    extraction: str  # "delimited" | "last-line" | "parent"


def extract_child(raw: str) -> tuple[str, str]:
    regions = [r.strip() for r in _CHILD_RE.findall(raw)]
    if regions and regions[-1]:
        return regions[-1], "delimited"
    for line in reversed(raw.splitlines()):
        line = line.replace("<prompt>", "").replace("</prompt>", "").strip()
        if line:
            return line, "last-line"
    return "", "parent"


def crossover_mutate(
    provider: Provider,
    cache: Optional[ResponseCache],
    ledger: Optional[CostLedger],
    meta: MetaPrompt,
    a: Candidate,
    b: Candidate,
    max_output_tokens: int = 1024,
    temperature: float = 0.0,
    retries: int = 3,
    backoff: float = 1.0,
) -> OperatorResult:
    """One LLM call that crosses over two parent prompts and mutates the result.

    The child is the text inside the last ``<prompt>...</prompt>`` pair, else
    the last non-empty line of the answer, else parent ``a`` unchanged.
    """
    request = CompletionRequest(
        prompt_text=meta.render(a.prompt.text, b.prompt.text),
        max_output_tokens=max_output_tokens,
        temperature=temperature,
        tag="evolve",
    )
    try:
        raw = complete_cached(provider, cache, request, ledger, retries=retries, backoff=backoff).text
    except RefusalError as exc:
        logger.warning("operator refused (%s); keeping parent %r", exc, a.prompt.name)
        return OperatorResult(a.prompt.text, "", "parent")
    child, how = extract_child(raw)
    if not child:
        logger.warning("no child prompt in operator output; keeping parent %r", a.prompt.name)
        return OperatorResult(a.prompt.text, raw, "parent")
    return OperatorResult(child, raw, how)


def _ids_digest(ids: Sequence[str]) -> str:
    return hashlib.sha256("\n".join(ids).encode("utf-8")).hexdigest()[:16]


def make_gec_scorer(
    provider: Provider,
    cache: Optional[ResponseCache],
    ledger: Optional[CostLedger],
    corpus: Corpus,
    config: EvoConfig,
    concurrency: int = 4,
    retries: int = 3,
    backoff: float = 1.0,
) -> tuple[Scorer, dict]:
    """Scorer that runs error correction on a fixed evaluation subset.

    Demonstrations are drawn first and removed from the pool the evaluation
    subset is sampled from, so the two never overlap.
    """
    if not corpus.labeled:
        raise DataError("evolution needs a labeled corpus")
    demos = pick_demonstrations(corpus, config.demos, config.demo_seed)
    pool = exclude(corpus, [d.source_id for d in demos])
    size = min(config.eval_subset, len(pool))
    eval_corpus = sample_subset(pool, size, config.eval_seed)
    policy = config.policy
    settings = config.gec_settings(concurrency, retries, backoff)

    def score(prompt: InstructionPrompt) -> float:
        _, report = correct_corpus(provider, cache, ledger, prompt, demos, eval_corpus, policy, settings)
        return report.corpus_wer

    meta = {
        "corpus": corpus.name,
        "subset_size": size,
        "eval_seed": config.eval_seed,
        "demos": config.demos,
        "demo_ids": [d.source_id for d in demos],
        "eval_ids_sha256": _ids_digest(eval_corpus.ids),
    }
    return score, meta


class _Run:
    """Mutable state of one evolution run plus its checkpoint files."""

    def __init__(self, config, log, rng, provider, cache, ledger, scorer, run_dir, retries, backoff):
        self.config = config
        self.log = log
        self.rng = rng
        self.provider = provider
        self.cache = cache
        self.ledger = ledger
        self.scorer = scorer
        self.run_dir = Path(run_dir) if run_dir is not None else None
        self.meta = MetaPrompt(config.meta_template)
        self.retries = retries
        self.backoff = backoff

    def _write(self, name: str, text: str) -> None:
        path = self.run_dir / name
        tmp = path.with_suffix(path.suffix + ".tmp")
        tmp.write_text(text, encoding="utf-8")
        os.replace(tmp, path)

    def checkpoint(self) -> None:
        if self.run_dir is None:
            return
        version, internal, gauss = self.rng.getstate()
        state = {
            "log": self.log.to_dict(),
            "rng_state": [version, list(internal), gauss],
        }
        self._write("checkpoint.json", json.dumps(state, sort_keys=True, ensure_ascii=False))
        self._write("run.json", self.log.to_json())
        if self.ledger is not None:
            self._write("ledger.json", json.dumps(self.ledger.to_dict(), indent=2, sort_keys=True) + "\n")

    def _record_best(self, t: int) -> None:
        i = self.log.best_index
        self.log.best_so_far.append({"iteration": t, "index": i, "score": self.log.population[i].score})

    def run(self, seeds: Sequence[InstructionPrompt]) -> EvolutionLog:
        log, n = self.log, self.config.pop_size
        if log.status == "finished":
            return log

        for prompt in seeds[len(log.population):]:
            log.population.append(Candidate(prompt, self.scorer(prompt)))
            logger.info("seed %s: WER %.4f", prompt.name, log.population[-1].score)
            self.checkpoint()
        if not log.best_so_far:
            self._record_best(0)
            self.checkpoint()

        for t in range(len(log.best_so_far), self.config.iterations + 1):
            if len(log.iterations) < t:
                subset = select_best_subset(log.population, n)
                pairs = [list(pick_parents(subset, self.rng)) for _ in range(n)]
                log.iterations.append({"iteration": t, "best_subset": subset, "parent_pairs": pairs, "children": []})
                self.checkpoint()
            record = log.iterations[t - 1]
            for k in range(len(record["children"]), n):
                a, b = record["parent_pairs"][k]
                op = crossover_mutate(
                    self.provider, self.cache, self.ledger, self.meta,
                    log.population[a], log.population[b],
                    self.config.operator_max_tokens, self.config.operator_temperature,
                    self.retries, self.backoff,
                )
                prompt = InstructionPrompt(f"mutated-{k + 1}-iter{t}", op.child)
                score = self.scorer(prompt)
                log.population.append(Candidate(prompt, score, t, (a, b), GA_OPERATOR))
                record["children"].append({
                    "index": len(log.population) - 1,
                    "name": prompt.name,
                    "raw_response": op.raw_response,
                    "extraction": op.extraction,
                    "score": score,
                })
                logger.info("iteration %d child %s: WER %.4f", t, prompt.name, score)
                self.checkpoint()
            self._record_best(t)
            if self.run_dir is not None:
                body = dict(record, best_so_far=log.best_so_far[-1], population_size=len(log.population))
                self._write(f"iteration-{t}.json", json.dumps(body, indent=2, sort_keys=True, ensure_ascii=False) + "\n")
            self.checkpoint()

        log.status = "finished"
        self.checkpoint()
        return log


def run_evolution(
    config: EvoConfig,
    seeds: Sequence[InstructionPrompt],
    corpus: Optional[Corpus],
    provider: Provider,
    cache: Optional[ResponseCache] = None,
    ledger: Optional[CostLedger] = None,
    scorer: Optional[Scorer] = None,
    run_dir=None,
    eval_meta: Optional[dict] = None,
    concurrency: int = 4,
    retries: int = 3,
    backoff: float = 1.0,
) -> EvolutionLog:
    """Evolve ``seeds`` for ``config.iterations`` rounds.

    ``provider`` performs the crossover/mutation calls. Without an explicit
    ``scorer`` each prompt is scored by error correction on a seeded subset
    of ``corpus`` through the same provider. With ``run_dir`` every scoring
    step is checkpointed so :func:`resume_evolution` can pick up the run.
    """
    if len(seeds) != config.pop_size:
        raise ConfigError(f"expected {config.pop_size} seed prompts, got {len(seeds)}")
    if scorer is None:
        if corpus is None:
            raise ConfigError("a corpus is required when no scorer is given")
        scorer, eval_meta = make_gec_scorer(provider, cache, ledger, corpus, config, concurrency, retries, backoff)
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "seeds.json").write_text(
            json.dumps([{"name": p.name, "text": p.text} for p in seeds], indent=2, ensure_ascii=False) + "\n",
            encoding="utf-8",
        )
    log = EvolutionLog(config=config.to_dict(), eval_meta=eval_meta or {})
    run = _Run(config, log, random.Random(config.seed), provider, cache, ledger, scorer, run_dir, retries, backoff)
    return run.run(seeds)


def load_checkpoint(path) -> tuple[EvolutionLog, random.Random, list[InstructionPrompt]]:
    path = Path(path)
    if path.is_dir():
        path = path / "checkpoint.json"
    try:
        state = json.loads(path.read_text(encoding="utf-8"))
        seeds = json.loads((path.parent / "seeds.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    log = EvolutionLog.from_dict(state.get("log", {}))
    rng = random.Random()
    try:
        version, internal, gauss = state["rng_state"]
        rng.setstate((version, tuple(internal), gauss))
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointError(f"corrupt rng state in {path}") from exc
    return log, rng, [InstructionPrompt(s["name"], s["text"]) for s in seeds]


def resume_evolution(
    checkpoint,
    provider: Provider,
    corpus: Optional[Corpus] = None,
    cache: Optional[ResponseCache] = None,
    ledger: Optional[CostLedger] = None,
    scorer: Optional[Scorer] = None,
    config: Optional[EvoConfig] = None,
    concurrency: int = 4,
    retries: int = 3,
    backoff: float = 1.0,
) -> EvolutionLog:
    """Continue a checkpointed run from its last completed scoring step.

    ``config``, when given, must equal the checkpointed configuration.
    """
    log, rng, seeds = load_checkpoint(checkpoint)
    stored = EvoConfig.from_dict(log.config)
    if config is not None and config.to_dict() != log.config:
        diff = sorted(k for k, v in config.to_dict().items() if log.config.get(k) != v)
        raise ConfigMismatchError(f"configuration differs from checkpoint in: {', '.join(diff)}")
    if log.status == "finished":
        return log
    if scorer is None:
        if corpus is None:
            raise ConfigError("a corpus is required when no scorer is given")
        scorer, meta = make_gec_scorer(provider, cache, ledger, corpus, stored, concurrency, retries, backoff)
        if log.eval_meta and meta != log.eval_meta:
            raise ConfigMismatchError("evaluation subset differs from the checkpointed run")
    run_dir = Path(checkpoint)
    if not run_dir.is_dir():
        run_dir = run_dir.parent
    run = _Run(stored, log, rng, provider, cache, ledger, scorer, run_dir, retries, backoff)
    return run.run(seeds)
