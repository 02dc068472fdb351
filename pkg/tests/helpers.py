"""Independent oracles and synthetic data shared by the test modules."""

from __future__ import annotations

import hashlib
import random
import re
from functools import lru_cache

from evogec.corpus import Corpus, Split, Utterance
from evogec.llm import ScriptedProvider, find_marker

FIDELITY_REFERENCE = (
    "fidelity had contended that gencorp is not a qualified broadcaster because it failed to "
    "disclose allegedly improper political campaign contributions and foreign payments"
)
FIDELITY_HYP1 = (
    "fatelli had contended that genecorp is not a qualified broadcaster because it failed to "
    "disclose allegedly improper political campaign contributions and foreign payments"
)
FIDELITY_HYP2 = (
    "fidelity had contended that jeane corp is not a qualified broadcaster because it failed to "
    "disclose allegedly improper political campaign contributions and foreign payments"
)

# Published CHiME-4 test WERs (%): one-demonstration seeds, then
# the five mutated prompts of iterations 1, 2 and 3.
CHIME4_SEED_WERS = [5.99245126932423, 6.209606535339434, 6.359547076159454, 6.147443255260844, 6.2251176257690916]
CHIME4_CHILD_WERS = [
    [6.3078434, 9.1356994, 8.0554263, 9.2703771, 8.4173517],
    [7.238509, 5.377178, 6.169429, 8.242739, 5.785637],
    [6.297503, 4.875652, 6.219947, 5.340011, 6.406081],
]

VOCAB = "the stock market rose fell sharply today shares bank rates were said analysts percent".split()


def brute_edit_distance(a, b) -> int:
    """Plain recursive Levenshtein distance (memoized recursion, no table)."""
    a, b = tuple(a), tuple(b)

    @lru_cache(maxsize=None)
    def d(i, j):
        if i == len(a):
            return len(b) - j
        if j == len(b):
            return len(a) - i
        return min(d(i + 1, j) + 1, d(i, j + 1) + 1, d(i + 1, j + 1) + (a[i] != b[j]))

    return d(0, 0)


def _perturb(words, rng):
    words = list(words)
    for _ in range(rng.randint(0, 3)):
        op = rng.choice("sid")
        if op == "s" and words:
            words[rng.randrange(len(words))] = rng.choice(VOCAB)
        elif op == "i":
            words.insert(rng.randint(0, len(words)), rng.choice(VOCAB))
        elif op == "d" and len(words) > 1:
            del words[rng.randrange(len(words))]
    return words


def synthetic_corpus(n=50, seed=0, k=5, name="synthetic", split=Split.TRAIN) -> Corpus:
    rng = random.Random(seed)
    utts = []
    for i in range(n):
        ref = [rng.choice(VOCAB) for _ in range(rng.randint(3, 12))]
        hyps = [" ".join(_perturb(ref, rng)) for _ in range(k)]
        utts.append(Utterance(f"s{seed}-{i}", tuple(hyps), " ".join(ref)))
    return Corpus(name, split, tuple(utts))


def _digest(*parts) -> int:
    return int(hashlib.sha256("\x1f".join(parts).encode("utf-8")).hexdigest(), 16)


_PARENT_RE = re.compile(r"^Prompt ([12]): (.*)$", re.MULTILINE)


def toy_provider(corpus: Corpus, provider_id: str = "toy") -> ScriptedProvider:
    """Deterministic stand-in for the LLM on both sides of the loop.

    Correction queries get a hypothesis picked by hashing the instruction
    with the utterance id, so different prompts get different WERs.
    Operator queries get a child spliced from both parents.
    """
    index = corpus.by_id()

    def correct(prompt):
        utt = index[find_marker(prompt)]
        instruction = prompt.split("\n\n", 1)[0]
        return utt.hypotheses[_digest(instruction, utt.id) % len(utt.hypotheses)]

    def operate(prompt):
        parents = dict(_PARENT_RE.findall(prompt))
        a, b = parents["1"].split(), parents["2"].split()
        child = a[: len(a) // 2] + b[len(b) // 2:] + [f"v{_digest(prompt) % 997}"]
        return f"Step 1 done.\n<prompt>{' '.join(child)}</prompt>"

    return ScriptedProvider(
        [(lambda p: find_marker(p) is not None, correct), ("<prompt>", operate)],
        provider_id=provider_id,
    )


class SequenceScorer:
    """Scorer handing out a fixed list of WERs in call order."""

    def __init__(self, values):
        self.values = list(values)
        self.calls = []

    def __call__(self, prompt):
        self.calls.append(prompt)
        return self.values[len(self.calls) - 1]
