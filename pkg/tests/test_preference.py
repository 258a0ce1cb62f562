"""Preference-pair synthesis and DPO kernel tests.

Oracles: a textbook full-matrix Levenshtein, and high-precision softplus
values computed with the decimal module at 50 digits.
"""

from __future__ import annotations

import math
import random
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prosemill.backtranslate import InstructionPair
from prosemill.errors import (
    NoCandidatePrinciples,
    NonFiniteInput,
    ParseFailure,
    PerturbationRejected,
)
from prosemill.gateway import MockBackend
from prosemill.preference import (
    DEFAULT_MAX_EDIT,
    DpoBatch,
    PreferencePair,
    Principle,
    attribute_principle,
    build_preference_pairs,
    candidates_for,
    dpo_loss,
    levenshtein,
    load_principles,
    normalized_edit_distance,
    perturbation_violations,
    synthesize_negative,
)
from prosemill.synthcorpus import make_principles, write_principles
from prosemill.taxonomy import DomainKind, TaskKind

getcontext().prec = 50


# --- independent oracles ------------------------------------------------------

def oracle_levenshtein(a: str, b: str) -> int:
    """Textbook full-matrix dynamic program."""
    m, n = len(a), len(b)
    d = [[0] * (n + 1) for _ in range(m + 1)]
    for i in range(m + 1):
        d[i][0] = i
    for j in range(n + 1):
        d[0][j] = j
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            cost = 0 if a[i - 1] == b[j - 1] else 1
            d[i][j] = min(d[i - 1][j] + 1, d[i][j - 1] + 1,
                          d[i - 1][j - 1] + cost)
    return d[m][n]


def oracle_softplus(x: str) -> float:
    """ln(1 + e^x) via 50-digit decimal arithmetic."""
    return float((1 + Decimal(x).exp()).ln())


def pair(idx: int, response: str = None,
         task: TaskKind = TaskKind.ContentWriting,
         subdomain: str = "short_story") -> InstructionPair:
    return InstructionPair(
        id=f"pair-{idx:04d}", task=task, domain=DomainKind.FictionWriting,
        subdomain=subdomain, instruction=f"write piece {idx}",
        response=response or f"a carefully written passage number {idx} "
                             f"with enough words to perturb meaningfully",
        rationale="because", source_doc_id=f"doc-{idx}",
        source_span=f"span {idx}")


def principle(pid: str = "P-001", task: TaskKind = TaskKind.ContentWriting,
              domain: DomainKind = DomainKind.FictionWriting) -> Principle:
    return Principle(
        id=pid, domain=domain, task=task,
        description="keep narrative point of view steady",
        adhering_case="a steady passage", violating_case="a wobbling passage",
        rationale_adhere="stays in one head", rationale_violate="hops heads")


# --- levenshtein -----------------------------------------------------------------

@pytest.mark.parametrize("a,b,want", [
    ("kitten", "sitting", 3),
    ("", "abc", 3),
    ("abc", "", 3),
    ("same", "same", 0),
    ("flaw", "lawn", 2),
    ("一二三", "一三", 1),
])
def test_levenshtein_textbook_cases(a, b, want):
    assert oracle_levenshtein(a, b) == want  # oracle sanity first
    assert levenshtein(a, b) == want


@given(st.text(alphabet="abc一二", max_size=12),
       st.text(alphabet="abc一二", max_size=12))
@settings(max_examples=200, deadline=None)
def test_levenshtein_matches_oracle(a, b):
    assert levenshtein(a, b) == oracle_levenshtein(a, b)


def test_normalized_edit_distance():
    assert normalized_edit_distance("", "") == 0.0
    assert normalized_edit_distance("abcd", "abcd") == 0.0
    assert normalized_edit_distance("abcd", "") == 1.0
    # 1 edit over max length 4
    assert normalized_edit_distance("abcd", "abed") == pytest.approx(0.25)


def test_perturbation_violations_catalogue():
    ok = perturbation_violations("abcdefgh", "abcdefgX", DEFAULT_MAX_EDIT)
    assert ok == []
    assert perturbation_violations("same", "same", 0.5)
    assert perturbation_violations("abcdefghij", "a" + "x" * 9, 0.5)
    # length ratio outside [0.5, 2.0]
    assert perturbation_violations("abcd", "abcdabcdabcd", 1.0)
    assert perturbation_violations("abcdabcdabcd", "abcd", 1.0)


# --- principle files -----------------------------------------------------------------

def test_principle_validation():
    with pytest.raises(ValueError):
        Principle(id="P", domain=DomainKind.FictionWriting,
                  task=TaskKind.ContentWriting, description="",
                  adhering_case="a", violating_case="b",
                  rationale_adhere="c", rationale_violate="d")


def test_load_principles_round_trip(tmp_path):
    originals = make_principles()
    write_principles(tmp_path, originals)
    loaded = load_principles(tmp_path)
    assert {p.id for p in loaded} == {p.id for p in originals}
    assert all(isinstance(p, Principle) for p in loaded)


def test_load_principles_rejects_duplicates(tmp_path):
    import json
    dup = principle()
    folder = tmp_path / "FictionWriting"
    folder.mkdir()
    (folder / "ContentWriting.json").write_text(
        json.dumps([dup.to_dict(), dict(dup.to_dict(), id="P-002")]),
        encoding="utf-8")
    with pytest.raises(ValueError, match="duplicate"):
        load_principles(tmp_path)


def test_candidates_for_filters_domain_and_task():
    ps = make_principles()
    picked = candidates_for(ps, DomainKind.FictionWriting, TaskKind.ContentWriting)
    assert picked
    assert all(p.domain is DomainKind.FictionWriting and
               p.task is TaskKind.ContentWriting for p in picked)
    assert candidates_for(ps, DomainKind.FictionWriting,
                          TaskKind.InstructionAnnotation) == []


# --- attribution ---------------------------------------------------------------------

def attribution_backend(reply) -> MockBackend:
    return MockBackend(seed=0, script={"cdpo_attribute": reply})


def five_candidates() -> list[Principle]:
    return [principle(f"P-00{i}") for i in range(1, 6)]


def test_attribute_principle_scripted_choice():
    backend = attribution_backend("PRINCIPLE: P-003\nRATIONALE: best fit")
    pid, rationale = attribute_principle(pair(1), five_candidates(), backend)
    assert pid == "P-003"
    assert rationale == "best fit"
    # prompt lists every candidate id and description
    prompt = backend.calls[0].joined_content()
    for candidate in five_candidates():
        assert candidate.id in prompt
        assert candidate.description in prompt


def test_attribute_principle_single_candidate_still_prompts():
    backend = attribution_backend("PRINCIPLE: P-001\nRATIONALE: only one")
    pid, _ = attribute_principle(pair(1), [principle("P-001")], backend)
    assert pid == "P-001"
    assert len(backend.calls) == 1


def test_attribute_principle_unknown_id_is_parse_failure():
    backend = attribution_backend("PRINCIPLE: P-999\nRATIONALE: hallucinated")
    with pytest.raises(ParseFailure, match="P-999"):
        attribute_principle(pair(1), five_candidates(), backend)


def test_attribute_principle_empty_candidates():
    with pytest.raises(NoCandidatePrinciples):
        attribute_principle(pair(1), [], MockBackend())


def test_attribute_principle_mock_handler_picks_candidate():
    pid, rationale = attribute_principle(pair(1), five_candidates(), MockBackend(seed=2))
    assert pid in {p.id for p in five_candidates()}
    assert rationale


# --- negative synthesis ----------------------------------------------------------------

def test_synthesize_negative_happy_path():
    pref = synthesize_negative(pair(1), principle(), MockBackend(seed=1))
    assert pref.id.startswith("pref-")
    assert pref.chosen == pair(1).response
    assert pref.rejected != pref.chosen
    assert pref.principle_id == "P-001"
    assert perturbation_violations(pref.chosen, pref.rejected,
                                   DEFAULT_MAX_EDIT) == []


def test_synthesize_negative_unchanged_text_rejected_after_retry():
    def unchanged(req):
        import re
        chosen = re.search(r"<<<TEXT\n(.*)\nTEXT>>>", req.joined_content(),
                           re.DOTALL).group(1)
        return f"[RATIONALE]\nno change\n[/RATIONALE]\n[REWRITE]\n{chosen}\n[/REWRITE]"

    backend = MockBackend(seed=0, script={"cdpo_perturb": unchanged})
    with pytest.raises(PerturbationRejected):
        synthesize_negative(pair(1), principle(), backend)
    assert len(backend.calls) == 2  # one retry


def test_synthesize_negative_distance_fixture_rejected():
    chosen = "aaaaaaaaaa"
    rewrite = "a" + "x" * 9
    # oracle first: 9 substitutions over max length 10 → 0.9 > 0.5
    assert oracle_levenshtein(chosen, rewrite) == 9
    backend = MockBackend(seed=0, script={
        "cdpo_perturb": f"[RATIONALE]\nheavy\n[/RATIONALE]\n"
                        f"[REWRITE]\n{rewrite}\n[/REWRITE]"})
    with pytest.raises(PerturbationRejected, match="edit distance"):
        synthesize_negative(pair(1, response=chosen), principle(), backend)


def test_synthesize_negative_retry_can_succeed():
    # first reply is malformed, second (different request seed) is degraded
    calls = {"n": 0}
    real = MockBackend(seed=0)
    handler = real.handlers["cdpo_perturb"]

    def flaky(req):
        calls["n"] += 1
        if calls["n"] == 1:
            return "not a rewrite"
        return handler(real, req)

    backend = MockBackend(seed=0, script={"cdpo_perturb": flaky})
    pref = synthesize_negative(pair(2), principle(), backend)
    assert calls["n"] == 2
    assert pref.rejected != pref.chosen


def test_preference_pair_validates_bounds():
    with pytest.raises(ValueError):
        PreferencePair(id="x", instruction="i", chosen="same", rejected="same",
                       principle_id="P", attribution_rationale="",
                       perturbation_rationale="")


def test_build_preference_pairs_counts_and_skips():
    principles = make_principles()
    positives = [pair(i) for i in range(4)]
    # Reviewing has no principles on purpose: those positives are skipped.
    positives.append(pair(99, task=TaskKind.Reviewing))
    prefs, report = build_preference_pairs(positives, principles,
                                           MockBackend(seed=3))
    assert report.positives == 5
    assert len(prefs) == 4
    assert report.pairs == 4
    assert len(report.skipped) == 1
    assert report.skipped[0][0] == "pair-0099"
    for pref in prefs:
        assert pref.chosen != pref.rejected
        assert normalized_edit_distance(pref.chosen, pref.rejected) <= 0.5


def test_build_preference_pairs_deterministic():
    principles = make_principles()
    positives = [pair(i) for i in range(3)]
    a, _ = build_preference_pairs(positives, principles, MockBackend(seed=3))
    b, _ = build_preference_pairs(positives, principles, MockBackend(seed=3))
    assert [p.to_dict() for p in a] == [p.to_dict() for p in b]


# --- DPO kernel -----------------------------------------------------------------------

def batch(pc, pr, rc, rr, beta=0.1) -> DpoBatch:
    return DpoBatch(policy_chosen=np.asarray(pc, dtype=float),
                    policy_rejected=np.asarray(pr, dtype=float),
                    ref_chosen=np.asarray(rc, dtype=float),
                    ref_rejected=np.asarray(rr, dtype=float), beta=beta)


def test_dpo_loss_zero_margin_is_ln2():
    b = batch([-1.0, -2.0], [-1.0, -2.0], [-1.0, -2.0], [-1.0, -2.0])
    loss, _ = dpo_loss(b)
    assert abs(loss - math.log(2)) < 1e-12


def test_dpo_loss_fixture_beta_margin_03():
    # policy advantage 2.0, reference advantage −1.0 → margin 3.0, β·m = 0.3
    b = batch([2.0], [0.0], [0.0], [1.0], beta=0.1)
    loss, _ = dpo_loss(b)
    want = oracle_softplus("-0.3")
    assert loss == pytest.approx(want, abs=1e-12)
    assert loss == pytest.approx(0.554355, abs=5e-7)


def test_dpo_loss_strictly_decreasing_in_margin():
    margins = np.linspace(-5, 5, 41)
    losses = [dpo_loss(batch([m], [0.0], [0.0], [0.0]))[0] for m in margins]
    assert all(a > b for a, b in zip(losses, losses[1:]))


def test_dpo_loss_stable_at_extreme_margins():
    low, _ = dpo_loss(batch([7000.0], [0.0], [0.0], [0.0], beta=0.1))
    high, _ = dpo_loss(batch([-7000.0], [0.0], [0.0], [0.0], beta=0.1))
    assert low == pytest.approx(0.0, abs=1e-12)
    assert high == pytest.approx(700.0, rel=1e-12)
    assert math.isfinite(low) and math.isfinite(high)


def test_dpo_gradients_analytic_structure():
    b = batch([1.0, -0.5], [0.2, 0.1], [0.3, -0.3], [0.0, 0.4], beta=0.1)
    _, grads = dpo_loss(b)
    np.testing.assert_allclose(grads["policy_chosen"], -grads["policy_rejected"])
    np.testing.assert_allclose(grads["policy_chosen"], -grads["ref_chosen"])
    np.testing.assert_allclose(grads["policy_chosen"], grads["ref_rejected"])
    assert (grads["policy_chosen"] < 0).all()  # pushing chosen up lowers loss


def test_dpo_gradients_match_finite_differences():
    rng = random.Random(1234)
    h = 1e-5
    for _ in range(20):
        n = rng.randint(1, 6)
        arrays = {name: np.array([rng.uniform(-3, 3) for _ in range(n)])
                  for name in ("policy_chosen", "policy_rejected",
                               "ref_chosen", "ref_rejected")}
        b = DpoBatch(beta=0.1, **arrays)
        _, grads = dpo_loss(b)
        for name in arrays:
            for i in range(n):
                bumped_hi = {k: v.copy() for k, v in arrays.items()}
                bumped_lo = {k: v.copy() for k, v in arrays.items()}
                bumped_hi[name][i] += h
                bumped_lo[name][i] -= h
                hi_loss, _ = dpo_loss(DpoBatch(beta=0.1, **bumped_hi))
                lo_loss, _ = dpo_loss(DpoBatch(beta=0.1, **bumped_lo))
                numeric = (hi_loss - lo_loss) / (2 * h)
                analytic = grads[name][i]
                scale = max(abs(numeric), abs(analytic), 1e-8)
                assert abs(numeric - analytic) / scale < 1e-6


def test_dpo_batch_validation():
    with pytest.raises(NonFiniteInput):
        batch([math.nan], [0.0], [0.0], [0.0])
    with pytest.raises(NonFiniteInput):
        batch([math.inf], [0.0], [0.0], [0.0])
    with pytest.raises(ValueError):
        batch([], [], [], [])
    with pytest.raises(ValueError):
        batch([1.0], [0.0, 0.0], [0.0], [0.0])
    with pytest.raises(ValueError):
        batch([1.0], [0.0], [0.0], [0.0], beta=0.0)


def test_dpo_batch_from_dict():
    raw = {"beta": 0.1, "items": [
        {"policy_logp_chosen": -1.0, "policy_logp_rejected": -2.0,
         "ref_logp_chosen": -1.5, "ref_logp_rejected": -1.5},
    ]}
    b = DpoBatch.from_dict(raw)
    assert b.beta == 0.1
    # margin = (−1 − (−1.5)) − (−2 − (−1.5)) = 1.0
    loss, _ = dpo_loss(b)
    assert loss == pytest.approx(oracle_softplus("-0.1"), abs=1e-12)
