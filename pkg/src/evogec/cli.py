"""Command-line entry point: baseline | evaluate | optimize | report | cost."""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import re
import sys
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Optional

from evogec import __version__
from evogec.corpus import Corpus, FieldMapping, exclude, load_corpus, sample_subset
from evogec.errors import ConfigError, DataError, EvogecError
from evogec.evolve import EvoConfig, EvolutionLog, MetaPrompt, load_checkpoint, resume_evolution, run_evolution
from evogec.gec import (
    SEED_PROMPT_NAMES,
    builtin_prompt,
    correct_corpus,
    load_prompt,
    load_prompt_dir,
    pick_demonstrations,
)
from evogec.llm import (
    DEFAULT_BASE_URL,
    DEFAULT_MODEL,
    DEFAULT_PRICES,
    AnthropicProvider,
    CostLedger,
    ResponseCache,
    ScriptedProvider,
    UnpricedProviderError,
    estimate_cost,
    onebest_provider,
    oracle_provider,
    token_cost,
)
from evogec.metrics import NormPolicy, diff_markup, normalize, onebest_baseline, oracle_nbest_baseline, render_diff

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

logger = logging.getLogger("evogec")

DEFAULTS = {
    "data": None,
    "hyp_key": "input",
    "ref_key": "output",
    "id_key": None,
    "split": "other",
    "subset": None,
    "seed": 0,
    "norm": "lowercase,punct",
    "out": None,
    "provider": "anthropic",
    "script": None,
    "model": DEFAULT_MODEL,
    "base_url": DEFAULT_BASE_URL,
    "cache_dir": ".evogec-cache",
    "concurrency": 4,
    "temperature": 0.0,
    "max_tokens": 256,
    "retries": 3,
    "backoff": 1.0,
    "marker": True,
    "prices": None,
    "oracle": True,
    "prompt_file": None,
    "prompt": None,
    "demos": 1,
    "demo_data": None,
    "worst": 10,
    "seeds": None,
    "iters": 3,
    "pop": 5,
    "eval_subset": 200,
    "eval_seed": None,
    "demo_seed": None,
    "meta_template": None,
    "resume": False,
    "test_data": None,
    "rescore_top": 0,
}


class ReportError(DataError):
    pass


@dataclass(frozen=True)
class Row:
    label: str
    prompt: str
    demos: Optional[int]
    iteration: Optional[int]
    wer: float  # ratio, full precision

    @property
    def wer_percent(self) -> float:
        return 100.0 * self.wer


def sort_rows(rows):
    return sorted(rows, key=lambda r: (-1 if r.iteration is None else r.iteration, r.prompt))


def rows_markdown(rows) -> str:
    lines = ["| Row | Prompt | #Demonstrations | #Iterations | WER (%) |", "|---|---|---|---|---|"]
    for r in rows:
        demos = "-" if r.demos is None else str(r.demos)
        it = "-" if r.iteration is None else str(r.iteration)
        lines.append(f"| {r.label} | {r.prompt} | {demos} | {it} | {r.wer_percent:.2f} |")
    return "\n".join(lines) + "\n"


def rows_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "prompt", "demos", "iteration", "wer"])
    for r in rows:
        w.writerow([r.label, r.prompt, "" if r.demos is None else r.demos, "" if r.iteration is None else r.iteration, repr(r.wer)])
    return buf.getvalue()


def format_money(amount: Decimal) -> str:
    return f"${amount.quantize(Decimal('0.01'))}"


def ledger_csv(ledger: CostLedger) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["provider_id", "tag", "input_tokens", "output_tokens", "calls", "cache_hits", "cost"])
    for (provider_id, tag), u in sorted(ledger.usage.items()):
        price = ledger.prices.get(provider_id)
        cost = "" if price is None else str(token_cost(u.input_tokens, u.output_tokens, *price))
        w.writerow([provider_id, tag, u.input_tokens, u.output_tokens, u.calls, u.cache_hits, cost])
    return buf.getvalue()


def cost_summary(ledger: CostLedger) -> str:
    t = ledger.totals()
    lines = [f"tokens: {t.input_tokens} in / {t.output_tokens} out, {t.calls} calls, {t.cache_hits} cache hits"]
    try:
        est = estimate_cost(ledger)
        lines.append(f"cost: {format_money(est.total)}")
    except UnpricedProviderError as exc:
        lines.append(f"cost: n/a ({exc})")
    return "\n".join(lines)


# --------------------------------------------------------------------------- config


def _read_config_file(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        if path.suffix == ".toml":
            data = tomllib.loads(raw.decode("utf-8"))
        else:
            data = json.loads(raw)
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"invalid config {path}: {exc}") from exc
    data = {k.replace("-", "_"): v for k, v in data.items()}
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def resolve_settings(args: argparse.Namespace) -> dict:
    """Flags override the config file, which overrides built-in defaults."""
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        settings.update(_read_config_file(args.config))
    settings.update({k: v for k, v in vars(args).items() if k in DEFAULTS})
    return settings


def _policy(settings) -> NormPolicy:
    try:
        return NormPolicy.parse(settings["norm"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _mapping(settings) -> FieldMapping:
    return FieldMapping(settings["hyp_key"], settings["ref_key"], settings["id_key"])


def _load(settings, key="data", split=None) -> Corpus:
    path = settings[key]
    if not path:
        raise ConfigError(f"--{key.replace('_', '-')} is required")
    return load_corpus(path, _mapping(settings), split or settings["split"])


def _prices(settings) -> dict:
    prices = dict(DEFAULT_PRICES)
    for provider_id, pair in (settings["prices"] or {}).items():
        prices[provider_id] = (Decimal(str(pair[0])), Decimal(str(pair[1])))
    return prices


def _cache(settings) -> Optional[ResponseCache]:
    d = settings["cache_dir"]
    return ResponseCache(None if d in (None, "", "none") else d)


_PARENT_A_RE = re.compile(r"^Prompt 1: (.*)$", re.MULTILINE)


def _operator_echo(prompt: str) -> str:
    m = _PARENT_A_RE.search(prompt)
    return f"<prompt>{m.group(1) if m else prompt.strip().splitlines()[0]}</prompt>"


def _script_rules(path) -> list:
    try:
        spec = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read script {path}: {exc}") from exc
    rules = []
    for rule in spec:
        if "regex" in rule:
            matcher = re.compile(rule["regex"])
        elif "match" in rule:
            matcher = rule["match"]
        else:
            matcher = ""
        rules.append((matcher, rule["response"]))
    return rules


def build_provider(settings, corpus: Optional[Corpus] = None):
    kind = settings["provider"]
    if kind == "anthropic":
        return AnthropicProvider(model=settings["model"], base_url=settings["base_url"])
    if kind in ("echo", "oracle"):
        if corpus is None:
            raise ConfigError(f"provider {kind!r} needs the evaluation corpus")
        inner = onebest_provider(corpus) if kind == "echo" else oracle_provider(corpus, _policy(settings))
        # marked queries go to the GEC mock, everything else is treated as an operator call
        return ScriptedProvider(
            [(lambda p: "[utt:" in p, inner.respond), (lambda _: True, _operator_echo)],
            provider_id=kind,
        )
    if kind == "script":
        if not settings["script"]:
            raise ConfigError("--provider script needs --script FILE")
        return ScriptedProvider(_script_rules(settings["script"]), provider_id="script")
    raise ConfigError(f"unknown provider {kind!r}")


def _out_dir(settings, default: str) -> Path:
    out = Path(settings["out"] or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False, default=str) + "\n"


# --------------------------------------------------------------------------- commands


def cmd_baseline(settings) -> list[Row]:
    corpus = _load(settings)
    if settings["subset"]:
        corpus = sample_subset(corpus, settings["subset"], settings["seed"])
    if not corpus.labeled:
        raise DataError("references required for baseline scoring")
    policy = _policy(settings)
    rows = [Row("1best", "1-best hypothesis", None, None, onebest_baseline(corpus, policy).corpus_wer)]
    if settings["oracle"]:
        rows.append(Row("oracle", "oracle N-best", None, None, oracle_nbest_baseline(corpus, policy).corpus_wer))
    rows = sort_rows(rows)

    out = _out_dir(settings, "runs/baseline")
    _write(out / "results.csv", rows_csv(rows))
    _write(out / "table.md", rows_markdown(rows))
    _write(out / "run.json", _dump_json({"command": "baseline", "config": settings, "rows": [vars(r) for r in rows]}))
    print(rows_markdown(rows), end="")
    return rows


def cmd_evaluate(settings) -> Row:
    from evogec.plotting import plot_utterance_wer

    if settings["prompt_file"]:
        instruction = load_prompt(settings["prompt_file"])
    else:
        instruction = builtin_prompt(settings["prompt"] or "baseline")
    policy = _policy(settings)
    corpus = _load(settings)

    demo_pool = _load(settings, "demo_data", "train") if settings["demo_data"] else corpus
    demos = pick_demonstrations(demo_pool, settings["demos"], settings["seed"])
    if demo_pool is corpus:
        corpus = exclude(corpus, [d.source_id for d in demos])
    if settings["subset"]:
        corpus = sample_subset(corpus, min(settings["subset"], len(corpus)), settings["seed"])

    provider = build_provider(settings, corpus)
    cache = _cache(settings)
    ledger = CostLedger(prices=_prices(settings))
    gec_settings = EvoConfig(
        gec_max_tokens=settings["max_tokens"], gec_temperature=settings["temperature"], marker=settings["marker"]
    ).gec_settings(settings["concurrency"], settings["retries"], settings["backoff"])
    results, report = correct_corpus(provider, cache, ledger, instruction, demos, corpus, policy, gec_settings)

    row = Row("eval", instruction.name, len(demos), None, report.corpus_wer)
    out = _out_dir(settings, "runs/evaluate")
    _write(out / "table.md", rows_markdown([row]))
    _write(out / "results.csv", rows_csv([row]))

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["id", "reference", "top_hypothesis", "raw_response", "parsed", "fallback", "sub", "ins", "del", "ref_len", "wer"])
    by_id = corpus.by_id()
    for r in results:
        u = by_id[r.utterance_id]
        s = r.stats
        w.writerow([r.utterance_id, u.reference, u.hypotheses[0], r.raw_response, r.parsed, int(r.fallback_used),
                    s.substitutions, s.insertions, s.deletions, s.ref_len, repr(s.wer)])
    _write(out / "utterances.csv", buf.getvalue())

    diffs = out / "diffs"
    diffs.mkdir(exist_ok=True)
    order = sorted(range(len(results)), key=lambda i: (-results[i].stats.edits, i))
    for rank, i in enumerate(order[: settings["worst"]], start=1):
        r = results[i]
        ref = normalize(by_id[r.utterance_id].reference, policy)
        hyp = normalize(r.parsed, policy)
        safe = re.sub(r"[^\w.-]", "_", r.utterance_id)
        _write(
            diffs / f"{rank:03d}-{safe}.txt",
            f"id: {r.utterance_id}\nref: {' '.join(ref)}\nhyp: {' '.join(hyp)}\ndiff: {render_diff(diff_markup(ref, hyp))}\n"
            f"edits: {r.stats.edits}/{r.stats.ref_len}\n",
        )

    _write(out / "ledger.csv", ledger_csv(ledger))
    _write(out / "ledger.json", _dump_json(ledger.to_dict()))
    _write(out / "run.json", _dump_json({
        "command": "evaluate",
        "config": settings,
        "prompt": {"name": instruction.name, "text": instruction.text},
        "demo_ids": [d.source_id for d in demos],
        "rows": [vars(row)],
        "fallbacks": sum(r.fallback_used for r in results),
    }))
    plot_utterance_wer(results, out / "utterance_wer.png")
    print(rows_markdown([row]), end="")
    print(cost_summary(ledger))
    return row


def evolution_rows(log: EvolutionLog) -> list[Row]:
    demos = log.config.get("demos")
    counters: dict[int, int] = {}
    rows = []
    for cand in log.population:
        k = counters.get(cand.iteration, 0)
        counters[cand.iteration] = k + 1
        label = f"{cand.iteration}{chr(ord('a') + k) if k < 26 else k}"
        rows.append(Row(label, cand.prompt.name, demos, cand.iteration, cand.score))
    return sort_rows(rows)


def _write_evolution_outputs(out: Path, log: EvolutionLog, ledger: Optional[CostLedger]) -> None:
    from evogec.plotting import plot_trajectory

    rows = evolution_rows(log)
    _write(out / "table.md", rows_markdown(rows))
    _write(out / "results.csv", rows_csv(rows))
    _write(out / "best_prompt.txt", log.best.prompt.text)
    if ledger is not None:
        _write(out / "ledger.csv", ledger_csv(ledger))
    plot_trajectory(log, out / "trajectory.png")


def cmd_optimize(settings) -> EvolutionLog:
    out = _out_dir(settings, "runs/optimize")
    corpus = _load(settings, split="train")
    cache = _cache(settings)

    if settings["seeds"]:
        seeds = load_prompt_dir(settings["seeds"])
    else:
        seeds = [builtin_prompt(n) for n in SEED_PROMPT_NAMES]
    meta_template = EvoConfig().meta_template
    if settings["meta_template"]:
        meta_template = Path(settings["meta_template"]).read_text(encoding="utf-8")
        MetaPrompt(meta_template)
    config = EvoConfig(
        pop_size=settings["pop"],
        iterations=settings["iters"],
        seed=settings["seed"],
        eval_subset=settings["eval_subset"],
        eval_seed=settings["seed"] if settings["eval_seed"] is None else settings["eval_seed"],
        demos=settings["demos"],
        demo_seed=settings["seed"] if settings["demo_seed"] is None else settings["demo_seed"],
        norm=_policy(settings).describe(),
        meta_template=meta_template,
        gec_max_tokens=settings["max_tokens"],
        gec_temperature=settings["temperature"],
        marker=settings["marker"],
    )
    provider = build_provider(settings, corpus)
    runtime = dict(concurrency=settings["concurrency"], retries=settings["retries"], backoff=settings["backoff"])

    if settings["resume"]:
        ledger_path = out / "ledger.json"
        ledger = CostLedger.from_dict(json.loads(ledger_path.read_text())) if ledger_path.exists() else CostLedger()
        ledger.prices.update(_prices(settings))
        log = resume_evolution(out, provider, corpus, cache, ledger, config=config, **runtime)
    else:
        if (out / "checkpoint.json").exists():
            raise ConfigError(f"{out} already holds a run; pass --resume or choose another --out")
        ledger = CostLedger(prices=_prices(settings))
        _write(out / "config.json", _dump_json(settings))
        log = run_evolution(config, seeds, corpus, provider, cache, ledger, run_dir=out, **runtime)

    if settings["test_data"] and settings["rescore_top"]:
        _rescore_finalists(settings, out, log, provider, cache, ledger, corpus, config, runtime)
        _write(out / "ledger.json", _dump_json(ledger.to_dict()))
    _write_evolution_outputs(out, log, ledger)
    print(rows_markdown(evolution_rows(log)), end="")
    print(f"best: {log.best.prompt.name} ({100 * log.best.score:.2f}%)")
    print(cost_summary(ledger))
    return log


def _rescore_finalists(settings, out, log, provider, cache, ledger, train, config, runtime) -> None:
    test = _load(settings, "test_data", "test")
    if settings["provider"] in ("echo", "oracle"):
        provider = build_provider(settings, test)
    demos = pick_demonstrations(train, config.demos, config.demo_seed)
    ranked = sorted(range(len(log.population)), key=lambda i: (log.population[i].score, i))
    rows = []
    for i in ranked[: settings["rescore_top"]]:
        cand = log.population[i]
        _, report = correct_corpus(
            provider, cache, ledger, cand.prompt, demos, test, config.policy, config.gec_settings(**runtime)
        )
        rows.append(Row(f"test-{i}", cand.prompt.name, config.demos, cand.iteration, report.corpus_wer))
    _write(out / "finalists.csv", rows_csv(rows))
    _write(out / "finalists.md", rows_markdown(rows))


def _within(path: Path, parent: Path) -> bool:
    try:
        path.resolve().relative_to(parent.resolve())
        return True
    except ValueError:
        return False


def cmd_report(settings, run_dir) -> str:
    """Render tables, best prompt and cost for a run directory without modifying it."""
    run_dir = Path(run_dir)
    run_json = run_dir / "run.json"
    if not run_json.exists():
        raise ReportError(f"no run.json in {run_dir}")
    try:
        data = json.loads(run_json.read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise ReportError(f"corrupt run log {run_json}: {exc}") from exc

    ledger = None
    if (run_dir / "ledger.json").exists():
        ledger = CostLedger.from_dict(json.loads((run_dir / "ledger.json").read_text(encoding="utf-8")))

    log = None
    if "population" in data:
        try:
            log = EvolutionLog.from_dict(data)
        except EvogecError as exc:
            raise ReportError(str(exc)) from exc
        rows = evolution_rows(log)
    elif "rows" in data:
        rows = [Row(**r) for r in data["rows"]]
    else:
        raise ReportError(f"unrecognized run log {run_json}")

    parts = [rows_markdown(rows)]
    if log is not None:
        best = log.best
        parts.append(f"Best prompt: {best.prompt.name} (iteration {best.iteration}, WER {100 * best.score:.2f}%)\n\n{best.prompt.text}\n")
        traj = " -> ".join(f"{100 * b['score']:.2f}" for b in log.best_so_far)
        parts.append(f"Best-so-far WER (%): {traj}\n")
    if ledger is not None:
        parts.append(cost_summary(ledger) + "\n")
    text = "\n".join(parts)

    if settings["out"]:
        out = Path(settings["out"])
        if _within(out, run_dir):
            raise ConfigError("report output must not be inside the run directory")
        out.mkdir(parents=True, exist_ok=True)
        _write(out / "report.md", text)
        _write(out / "results.csv", rows_csv(rows))
        if ledger is not None:
            _write(out / "ledger.csv", ledger_csv(ledger))
        from evogec.plotting import plot_table, plot_trajectory

        if log is not None:
            plot_trajectory(log, out / "trajectory.png")
        plot_table(rows, out / "table.png")
    print(text, end="")
    return text


def cmd_cost(settings, source=None, input_tokens=None, output_tokens=None) -> Decimal:
    if source:
        path = Path(source)
        if path.is_dir():
            path = path / "ledger.json"
        try:
            ledger = CostLedger.from_dict(json.loads(path.read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError) as exc:
            raise DataError(f"cannot read ledger {path}: {exc}") from exc
        ledger.prices.update(_prices(settings))
        est = estimate_cost(ledger)
        for (provider_id, tag), amount in est.per_key.items():
            print(f"{provider_id}\t{tag}\t{format_money(amount)}")
        total = est.total
    else:
        if input_tokens is None or output_tokens is None:
            raise ConfigError("give a run directory / ledger file, or --input-tokens and --output-tokens")
        provider_id = f"anthropic:{settings['model']}"
        prices = _prices(settings)
        if provider_id not in prices:
            raise UnpricedProviderError(f"no price entry for provider {provider_id!r}")
        total = token_cost(input_tokens, output_tokens, *prices[provider_id])
    print(f"total\t{format_money(total)}")
    return total


# --------------------------------------------------------------------------- argparse


def _add_data_args(p):
    S = argparse.SUPPRESS
    p.add_argument("--data", default=S, help="JSON or JSON-lines N-best file")
    p.add_argument("--hyp-key", default=S, help="record key of the hypothesis list (default: input)")
    p.add_argument("--ref-key", default=S, help="record key of the reference (default: output)")
    p.add_argument("--id-key", default=S, help="record key of the utterance id (default: synthesized)")
    p.add_argument("--subset", type=int, default=S, help="score a seeded subset of N utterances")
    p.add_argument("--seed", type=int, default=S)
    p.add_argument("--norm", default=S, help='normalization: comma list of "lowercase", "punct", or "none"')
    p.add_argument("--out", default=S, help="output directory")


def _add_provider_args(p):
    S = argparse.SUPPRESS
    p.add_argument("--provider", choices=["anthropic", "echo", "oracle", "script"], default=S)
    p.add_argument("--script", default=S, help="JSON rules file for --provider script")
    p.add_argument("--model", default=S)
    p.add_argument("--base-url", default=S)
    p.add_argument("--cache-dir", default=S, help='response cache directory ("none" for memory only)')
    p.add_argument("--concurrency", type=int, default=S)
    p.add_argument("--temperature", type=float, default=S)
    p.add_argument("--max-tokens", type=int, default=S)
    p.add_argument("--retries", type=int, default=S)
    p.add_argument("--no-marker", dest="marker", action="store_false", default=S,
                   help="omit the utterance marker line from rendered queries")


def build_parser() -> argparse.ArgumentParser:
    S = argparse.SUPPRESS
    parser = argparse.ArgumentParser(prog="evogec", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="TOML or JSON config file")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("baseline", help="1-best and oracle N-best WER")
    _add_data_args(p)
    p.add_argument("--oracle", action=argparse.BooleanOptionalAction, default=S)

    p = sub.add_parser("evaluate", help="score one instruction prompt with the LLM")
    _add_data_args(p)
    _add_provider_args(p)
    p.add_argument("--prompt-file", default=S)
    p.add_argument("--prompt", default=S, help="built-in prompt name (baseline, prompt-1 .. prompt-5)")
    p.add_argument("--demos", type=int, default=S)
    p.add_argument("--demo-data", default=S, help="draw demonstrations from this labeled file")
    p.add_argument("--worst", type=int, default=S, help="number of worst utterances to write diffs for")

    p = sub.add_parser("optimize", help="evolve instruction prompts")
    _add_data_args(p)
    _add_provider_args(p)
    p.add_argument("--seeds", default=S, help="directory of seed prompt files (default: built-in prompts 1-5)")
    p.add_argument("--iters", type=int, default=S)
    p.add_argument("--pop", type=int, default=S)
    p.add_argument("--eval-subset", type=int, default=S)
    p.add_argument("--eval-seed", type=int, default=S)
    p.add_argument("--demo-seed", type=int, default=S)
    p.add_argument("--demos", type=int, default=S)
    p.add_argument("--meta-template", default=S)
    p.add_argument("--resume", action="store_true", default=S)
    p.add_argument("--test-data", default=S, help="re-score the best candidates on this file")
    p.add_argument("--rescore-top", type=int, default=S)

    p = sub.add_parser("report", help="render tables, figures and cost for a run directory")
    p.add_argument("run_dir")
    p.add_argument("--out", default=S, help="write report files here (must be outside the run directory)")

    p = sub.add_parser("cost", help="price a ledger or a token count")
    p.add_argument("source", nargs="?", help="run directory or ledger.json")
    p.add_argument("--input-tokens", type=int)
    p.add_argument("--output-tokens", type=int)
    p.add_argument("--model", default=S)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        settings = resolve_settings(args)
        if args.command == "baseline":
            cmd_baseline(settings)
        elif args.command == "evaluate":
            cmd_evaluate(settings)
        elif args.command == "optimize":
            cmd_optimize(settings)
        elif args.command == "report":
            cmd_report(settings, args.run_dir)
        elif args.command == "cost":
            cmd_cost(settings, args.source, args.input_tokens, args.output_tokens)
    except EvogecError as exc:
        print(f"evogec: error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
