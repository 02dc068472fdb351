import pytest
from hypothesis import given
from hypothesis import strategies as st

from evogec.corpus import Corpus, Split, Utterance, exclude, sample_subset
from evogec.errors import DataError, MissingReferenceError, ProviderError
from evogec.gec import (
    BUILTIN_PROMPT_NAMES,
    Demonstration,
    GecSettings,
    InstructionPrompt,
    builtin_prompt,
    correct_corpus,
    load_prompt,
    parse_correction,
    pick_demonstrations,
    render_query,
)
from evogec.llm import CostLedger, Provider, ResponseCache, find_marker, onebest_provider, oracle_provider, scripted_provider
from evogec.metrics import onebest_baseline, oracle_nbest_baseline

from helpers import synthetic_corpus

UTT = Utterance("u7", ("h one", "h two", "h three", "h four", "h five"), "h one")
DEMO = Demonstration(("d a", "d b", "d c", "d d", "d e"), "d a", "u0")


def test_render_zero_demos():
    text = render_query(builtin_prompt("baseline"), [], UTT)
    paras = text.rstrip("\n").split("\n\n")
    assert paras[0] == builtin_prompt("baseline").text
    assert paras[1] == "[utt:u7]"
    assert paras[2].splitlines() == ["Hypotheses:", "1. h one", "2. h two", "3. h three", "4. h four", "5. h five"]
    assert "true transcription" in paras[3]
    assert len(paras) == 4
    assert text.count("Hypotheses:") == 1
    assert "The true transcription is:" not in text


def test_render_one_demo_layout():
    text = render_query(builtin_prompt("prompt-1"), [DEMO], UTT)
    paras = text.rstrip("\n").split("\n\n")
    assert text.count("Hypotheses:") == 2
    assert text.count("The true transcription is:") == 1
    assert paras[2].startswith("Hypotheses:\n1. d a")
    assert paras[3] == "The true transcription is: d a"
    assert paras[4].startswith("Hypotheses:\n1. h one")
    assert find_marker(text) == "u7"


def test_render_deterministic_and_marker_flag():
    p = builtin_prompt("prompt-3")
    assert render_query(p, [DEMO], UTT) == render_query(p, [DEMO], UTT)
    assert find_marker(render_query(p, [DEMO], UTT, marker=False)) is None


@pytest.mark.parametrize(
    "raw, expected",
    [
        ("The true transcription is: hello world", ("hello world", False)),
        ("", ("h one", True)),
        ('"foo bar"\nExplanation: ...', ("foo bar", False)),
        ("  the TRUE transcription is\n\n  'quoted'  ", ("quoted", False)),
        ("\n\nfirst line\nsecond line", ("first line", False)),
        ('""', ("h one", True)),
    ],
)
def test_parse_correction(raw, expected):
    assert parse_correction(raw, UTT) == expected


@given(st.text(max_size=80))
def test_parse_correction_total_and_idempotent(raw):
    parsed, fallback = parse_correction(raw, UTT)
    assert parsed
    if not fallback:
        assert parse_correction(parsed, UTT) == (parsed, False)


def test_builtin_prompts_load():
    for name in BUILTIN_PROMPT_NAMES:
        assert builtin_prompt(name).text
    with pytest.raises(DataError):
        builtin_prompt("prompt-9")


def test_load_prompt(tmp_path):
    f = tmp_path / "mine.txt"
    f.write_text("Fix the transcript.")
    assert load_prompt(f) == InstructionPrompt("mine", "Fix the transcript.")
    (tmp_path / "blank.txt").write_text("  \n")
    with pytest.raises(DataError):
        load_prompt(tmp_path / "blank.txt")


def test_demonstration_validation():
    with pytest.raises(ValueError):
        Demonstration((), "x")
    with pytest.raises(ValueError):
        Demonstration(("a",), "")


@pytest.mark.parametrize("concurrency", [1, 4])
def test_identity_provider_equals_onebest(concurrency):
    c = synthetic_corpus(50, seed=21)
    results, report = correct_corpus(
        onebest_provider(c), ResponseCache(), CostLedger(), builtin_prompt("baseline"), [DEMO], c,
        settings=GecSettings(concurrency=concurrency),
    )
    assert report == onebest_baseline(c)
    assert [r.utterance_id for r in results] == c.ids
    assert not any(r.fallback_used for r in results)


def test_oracle_provider_equals_oracle_baseline():
    c = synthetic_corpus(50, seed=22)
    _, report = correct_corpus(oracle_provider(c), None, None, builtin_prompt("prompt-2"), [], c)
    assert report == oracle_nbest_baseline(c)


def test_reference_echo_gives_zero():
    c = synthetic_corpus(20, seed=23)
    refs = c.by_id()
    p = scripted_provider([(lambda t: True, lambda t: refs[find_marker(t)].reference)])
    _, report = correct_corpus(p, None, None, builtin_prompt("prompt-5"), [DEMO], c)
    assert report.corpus_wer == 0.0


class Broken(Provider):
    provider_id = "broken"

    def complete(self, request):
        if "[utt:s24-3]" in request.prompt_text:
            raise ProviderError("hard failure")
        return onebest_provider(self.corpus).complete(request)


def test_provider_failure_falls_back(caplog):
    c = synthetic_corpus(6, seed=24)
    p = Broken()
    p.corpus = c
    results, report = correct_corpus(p, None, None, builtin_prompt("baseline"), [], c)
    assert [r.fallback_used for r in results] == [False, False, False, True, False, False]
    assert results[3].parsed == c[3].hypotheses[0]
    assert report == onebest_baseline(c)
    assert "falling back" in caplog.text


def test_unlabeled_corpus():
    c = Corpus("u", Split.TEST, (Utterance("a", ("x y",), None),))
    p = onebest_provider(c)
    with pytest.raises(MissingReferenceError):
        correct_corpus(p, None, None, builtin_prompt("baseline"), [], c)
    results, report = correct_corpus(p, None, None, builtin_prompt("baseline"), [], c, score=False)
    assert report is None and results[0].parsed == "x y"


def test_pick_demonstrations():
    c = synthetic_corpus(30, seed=25)
    assert pick_demonstrations(c, 1, 7) == pick_demonstrations(c, 1, 7)
    assert pick_demonstrations(c, 0, 7) == []
    with pytest.raises(DataError):
        pick_demonstrations(c, 31, 7)
    (demo,) = pick_demonstrations(c, 1, 7)
    assert demo.source_id in c.ids


@pytest.mark.parametrize("seed", range(20))
def test_demo_disjoint_from_eval_subset(seed):
    c = synthetic_corpus(15, seed=26)
    demos = pick_demonstrations(c, 2, seed)
    pool = exclude(c, [d.source_id for d in demos])
    subset = sample_subset(pool, len(pool), seed)
    assert not {d.source_id for d in demos} & set(subset.ids)


def test_warm_cache_byte_identical(tmp_path):
    c = synthetic_corpus(10, seed=27)
    demos = pick_demonstrations(c, 1, 0)
    first = correct_corpus(onebest_provider(c), ResponseCache(tmp_path), None, builtin_prompt("prompt-4"), demos, c)
    p = onebest_provider(c)
    second = correct_corpus(p, ResponseCache(tmp_path), None, builtin_prompt("prompt-4"), demos, c)
    assert p.calls == 0
    assert first == second
