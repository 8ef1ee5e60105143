"""Shared fixtures: hand-built toy corpora and reference implementations.

The reference searcher here mirrors the documented branching semantics
using only backend primitives, so the engine can be checked against an
independently coded repair search.
"""

from decimal import Decimal
from fractions import Fraction

import pytest

from hndecode import (
    EOT,
    BranchConfig,
    DecodeParams,
    Problem,
    ToyBackend,
    detokenize,
    extract_answer,
    parse_toy_spec,
    think_region_end,
    verify_answer,
)
from hndecode.errors import NoAnswerFound

# Three problems: A solves at the root, B needs one branch, C cannot be
# repaired because both inner paths give wrong answers.
DEMO_SPEC = """\
alpha | <think> 1
alpha <think> | x 1
x | </think> 1
x </think> | 42 1
42 | <eot> 1

beta | <think> 1
beta <think> | b 3
beta <think> | g 1
b | </think> 1
b </think> | 92 1
92 | <eot> 1
g | </think> 1
g </think> | 13 1
13 | <eot> 1

gamma | <think> 1
gamma <think> | c 9
gamma <think> | d 1
c | </think> 1
c </think> | 50 1
50 | <eot> 1
d | </think> 1
d </think> | 60 1
60 | <eot> 1
"""

DEMO_PROBLEMS = [
    Problem(id="A", question="alpha", gold_answer=Decimal("42"), source="toy"),
    Problem(id="B", question="beta", gold_answer=Decimal("13"), source="toy"),
    Problem(id="C", question="gamma", gold_answer=Decimal("7"), source="toy"),
]


@pytest.fixture()
def demo_backend() -> ToyBackend:
    return ToyBackend(parse_toy_spec(DEMO_SPEC))


@pytest.fixture()
def demo_problems() -> list[Problem]:
    return list(DEMO_PROBLEMS)


def fifo_cfg(**overrides) -> BranchConfig:
    kw = {"pool_policy": "fifo", "seed": 7}
    kw.update(overrides)
    return BranchConfig(**kw)


def greedy_params(**overrides) -> DecodeParams:
    kw = {"temperature": 0.0, "max_tokens": 64}
    kw.update(overrides)
    return DecodeParams(**kw)


def repair_spec(n_filler: int = 20) -> str:
    """Corpus where exactly the highest-entropy position repairs the answer.

    The think region is a forced filler chain ending in one two-way choice
    between a wrong (p=0.6) and a right (p=0.4) continuation.  Every other
    position is forced, so its entropy is zero and greedy replacement has
    no alternative there.
    """
    lines = ["q | <think> 1", "<think> | f1 1"]
    for i in range(1, n_filler):
        lines.append(f"f{i} | f{i + 1} 1")
    lines.append(f"f{n_filler} | w 3")
    lines.append(f"f{n_filler} | r 2")
    lines.append("w | </think> 1")
    lines.append("w </think> | 9 1")
    lines.append("9 | <eot> 1")
    lines.append("r | </think> 1")
    lines.append("r </think> | 7 1")
    lines.append("7 | <eot> 1")
    return "\n".join(lines) + "\n"


def repair_problems(n: int) -> list[Problem]:
    return [
        Problem(id=f"p{i}", question="q", gold_answer=Decimal(7), source="toy")
        for i in range(n)
    ]


def random_fuzz_spec(rng, n_questions: int, answer_start: int) -> tuple[str, list[Problem]]:
    """Random per-question reasoning trees for the cap fuzz.

    Inner tokens are namespaced by question and answers are globally
    unique numbers, so transitions never collide across questions.
    Roughly half the problems get an unreachable gold answer to force
    the search to exhaust its branching caps.
    """
    lines: list[str] = []
    problems: list[Problem] = []
    next_answer = answer_start
    for qi in range(n_questions):
        q = f"q{qi}"
        lines.append(f"{q} | <think> 1")
        reachable: list[int] = []
        node_id = 0

        def chain(ctx_lhs: str, depth: int) -> None:
            nonlocal node_id, next_answer
            n_branch = rng.choice([1, 1, 2, 2, 3])
            names = []
            for _ in range(n_branch):
                names.append(f"{q}n{node_id}")
                node_id += 1
            for name in names:
                w = rng.randint(1, 5)
                lines.append(f"{ctx_lhs} | {name} {w}")
            for name in names:
                if depth >= rng.randint(1, 3):
                    ans = next_answer
                    next_answer += 1
                    reachable.append(ans)
                    lines.append(f"{name} | </think> 1")
                    lines.append(f"{name} </think> | {ans} 1")
                    lines.append(f"{ans} | <eot> 1")
                else:
                    chain(name, depth + 1)

        chain(f"{q} <think>", 1)
        if rng.random() < 0.5:
            gold = Decimal(rng.choice(reachable))
        else:
            gold = Decimal(-1 - qi - answer_start)
        problems.append(Problem(id=q, question=q, gold_answer=gold, source="fuzz"))
    return "\n".join(lines) + "\n", problems


def _greedy_continue(backend: ToyBackend, base, tokens, max_new: int):
    cur = list(tokens)
    while len(cur) < max_new:
        outs = backend.outcomes_at(list(base) + cur)
        if outs is None:
            break
        nxt = outs[0][0]
        if nxt == EOT:
            break
        cur.append(nxt)
    return tuple(cur)


def _answer_ok(tokens, gold: Decimal) -> bool:
    try:
        ans = extract_answer(detokenize(tokens))
    except NoAnswerFound:
        return False
    return verify_answer(ans, gold)


def reference_solvable(
    backend: ToyBackend,
    prompt: str,
    gold: Decimal,
    depth_cap: int = 3,
    max_new: int = 64,
    region: str = "think-only",
) -> bool:
    """Breadth-first repair search coded only against backend primitives.

    A node is a greedy rollout plus the set of positions its lineage has
    already branched.  Expanding a node replaces each unbranched region
    position with the most likely different token and continues greedily;
    children forbid every position the parent's region exposed.  Assumes
    branch degree and pool caps are configured loose enough not to bind.
    """
    base = tuple(backend.tokenize(prompt))
    root = _greedy_continue(backend, base, (), max_new)
    frontier: list[tuple[tuple[str, ...], frozenset[int], int]] = [
        (root, frozenset(), 0)
    ]
    while frontier:
        toks, forbidden, depth = frontier.pop(0)
        if _answer_ok(toks, gold):
            return True
        if depth >= depth_cap:
            continue
        if region == "anywhere":
            end = len(toks)
        else:
            end = think_region_end(toks)
        positions = [p for p in range(end) if p not in forbidden]
        inherited = forbidden | set(positions)
        for p in positions:
            outs = backend.outcomes_at(list(base) + list(toks[:p]))
            if outs is None:
                continue
            alts = [t for t, _ in outs if t != toks[p] and t != EOT]
            if not alts:
                continue
            child = _greedy_continue(
                backend, base, tuple(toks[:p]) + (alts[0],), max_new
            )
            frontier.append((child, frozenset(inherited), depth + 1))
    return False


def handbuilt_cases() -> list[dict]:
    """Small specs with known repair structure for oracle equivalence.

    Each entry carries the spec text, the question, the gold answer, the
    region mode, and whether the repair search should succeed.  Degree
    caps are set loose by the caller so every region position branches.
    """
    cases: list[dict] = []

    def add(name, spec, gold, solvable, region="think-only", question="q"):
        cases.append(
            {
                "name": name,
                "spec": spec,
                "question": question,
                "gold": Decimal(gold),
                "solvable": solvable,
                "region": region,
            }
        )

    add(
        "root-correct",
        "q | <think> 1\n<think> | a 1\na | </think> 1\na </think> | 5 1\n5 | <eot> 1\n",
        5,
        True,
    )
    add(
        "forced-wrong",
        "q | <think> 1\n<think> | a 1\na | </think> 1\na </think> | 5 1\n5 | <eot> 1\n",
        6,
        False,
    )
    add(
        "one-flip",
        "q | <think> 1\n<think> | a 3\n<think> | b 2\n"
        "a | </think> 1\na </think> | 5 1\n5 | <eot> 1\n"
        "b | </think> 1\nb </think> | 6 1\n6 | <eot> 1\n",
        6,
        True,
    )
    add(
        "one-flip-dead",
        "q | <think> 1\n<think> | a 3\n<think> | b 2\n"
        "a | </think> 1\na </think> | 5 1\n5 | <eot> 1\n"
        "b | </think> 1\nb </think> | 6 1\n6 | <eot> 1\n",
        7,
        False,
    )
    add(
        "second-choice-right",
        "q | <think> 1\n<think> | a 5\n<think> | b 3\n<think> | c 2\n"
        "a | </think> 1\na </think> | 1 1\n1 | <eot> 1\n"
        "b | </think> 1\nb </think> | 2 1\n2 | <eot> 1\n"
        "c | </think> 1\nc </think> | 3 1\n3 | <eot> 1\n",
        2,
        True,
    )
    add(
        "third-choice-unreachable",
        "q | <think> 1\n<think> | a 5\n<think> | b 3\n<think> | c 2\n"
        "a | </think> 1\na </think> | 1 1\n1 | <eot> 1\n"
        "b | </think> 1\nb </think> | 2 1\n2 | <eot> 1\n"
        "c | </think> 1\nc </think> | 3 1\n3 | <eot> 1\n",
        3,
        False,
    )
    # Wrong turn ends the think block early; the fix pads the block so
    # the next decision lands past every inherited position index.
    add(
        "depth-two-growth",
        "q | <think> 1\n<think> | a 3\n<think> | b 2\n"
        "a | </think> 1\na </think> | 1 1\n1 | <eot> 1\n"
        "b | x1 1\nx1 | x2 1\n"
        "x2 | c 3\nx2 | d 2\n"
        "c | </think> 1\nc </think> | 2 1\n2 | <eot> 1\n"
        "d | </think> 1\nd </think> | 3 1\n3 | <eot> 1\n",
        3,
        True,
    )
    add(
        "fix-at-position-zero",
        "q | <think> 5\nq | <note> 2\n"
        "<think> | a 1\na | </think> 1\na </think> | 1 1\n1 | <eot> 1\n"
        "<note> | 2 1\n2 | <eot> 1\n",
        2,
        True,
    )
    add(
        "fix-at-last-think-slot",
        "q | <think> 1\n<think> | f 1\nf | a 3\nf | b 2\n"
        "a | </think> 1\na </think> | 1 1\n1 | <eot> 1\n"
        "b | </think> 1\nb </think> | 2 1\n2 | <eot> 1\n",
        2,
        True,
    )
    add(
        "no-think-tags",
        "q | a 3\nq | b 2\na | 8 1\n8 | <eot> 1\nb | 7 1\n7 | <eot> 1\n",
        7,
        True,
    )
    add(
        "two-tags-first-bounds",
        "q | <think> 1\n<think> | a 3\n<think> | b 2\n"
        "a | </think> 1\na </think> | m 1\nm | </think> 1\nm </think> | 1 1\n1 | <eot> 1\n"
        "b | </think> 1\nb </think> | n 1\nn | </think> 1\nn </think> | 2 1\n2 | <eot> 1\n",
        2,
        True,
    )
    add(
        "currency-answer",
        "q | <think> 1\n<think> | a 1\na | </think> 1\n"
        "a </think> | $1,234 1\n$1,234 | <eot> 1\n",
        1234,
        True,
    )
    add(
        "wrong-after-think",
        "q | <think> 1\n<think> | a 1\na | </think> 1\n"
        "a </think> | 8 3\na </think> | 7 2\n8 | <eot> 1\n7 | <eot> 1\n",
        7,
        False,
    )
    add(
        "wrong-after-think-anywhere",
        "q | <think> 1\n<think> | a 1\na | </think> 1\n"
        "a </think> | 8 3\na </think> | 7 2\n8 | <eot> 1\n7 | <eot> 1\n",
        7,
        True,
        region="anywhere",
    )
    add(
        "instant-eot",
        "q | <eot> 3\nq | a 2\na | 7 1\n7 | <eot> 1\n",
        7,
        False,
    )
    add(
        "zero-answer",
        "q | <think> 1\n<think> | a 1\na | </think> 1\na </think> | 0 1\n0 | <eot> 1\n",
        0,
        True,
    )
    add(
        "negative-answer",
        "q | <think> 1\n<think> | a 3\n<think> | b 2\n"
        "a | </think> 1\na </think> | 3 1\n3 | <eot> 1\n"
        "b | </think> 1\nb </think> | -3 1\n-3 | <eot> 1\n",
        -3,
        True,
    )
    add(
        "decimal-answer",
        "q | <think> 1\n<think> | a 3\n<think> | b 2\n"
        "a | </think> 1\na </think> | 2.4 1\n2.4 | <eot> 1\n"
        "b | </think> 1\nb </think> | 2.5 1\n2.5 | <eot> 1\n",
        "2.5",
        True,
    )
    add(
        "depth-three-growth",
        "q | <think> 1\n<think> | a 3\n<think> | b 2\n"
        "a | </think> 1\na </think> | 1 1\n1 | <eot> 1\n"
        "b | x1 1\nx1 | x2 1\n"
        "x2 | c 3\nx2 | d 2\n"
        "c | </think> 1\nc </think> | 2 1\n2 | <eot> 1\n"
        "d | y1 1\ny1 | y2 1\n"
        "y2 | e 3\ny2 | f 2\n"
        "e | </think> 1\ne </think> | 3 1\n3 | <eot> 1\n"
        "f | </think> 1\nf </think> | 4 1\n4 | <eot> 1\n",
        4,
        True,
    )
    add(
        "depth-four-capped",
        "q | <think> 1\n<think> | a 3\n<think> | b 2\n"
        "a | </think> 1\na </think> | 1 1\n1 | <eot> 1\n"
        "b | x1 1\nx1 | x2 1\n"
        "x2 | c 3\nx2 | d 2\n"
        "c | </think> 1\nc </think> | 2 1\n2 | <eot> 1\n"
        "d | y1 1\ny1 | y2 1\n"
        "y2 | e 3\ny2 | f 2\n"
        "e | </think> 1\ne </think> | 3 1\n3 | <eot> 1\n"
        "f | z1 1\nz1 | z2 1\n"
        "z2 | g 3\nz2 | h 2\n"
        "g | </think> 1\ng </think> | 4 1\n4 | <eot> 1\n"
        "h | </think> 1\nh </think> | 5 1\n5 | <eot> 1\n",
        5,
        False,
    )
    add(
        "three-way-alt-fixes",
        "q | <think> 1\n<think> | a 5\n<think> | b 4\n<think> | c 1\n"
        "a | </think> 1\na </think> | 1 1\n1 | <eot> 1\n"
        "b | </think> 1\nb </think> | 7 1\n7 | <eot> 1\n"
        "c | </think> 1\nc </think> | 7 2\nc </think> | 6 1\n6 | <eot> 1\n",
        7,
        True,
    )
    add(
        "answer-inside-word",
        "q | <think> 1\n<think> | a 1\na | </think> 1\n"
        "a </think> | x7y 1\nx7y | <eot> 1\n",
        7,
        True,
    )
    return cases
