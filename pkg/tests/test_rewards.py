"""Reward stack: template gate, answer extraction, structural and
accuracy scores, composite assembly, and advantage normalization."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from physsymbol.errors import (
    FormulaSyntaxError, GroupTooSmall, NoAnswerTag, UnknownSymbol,
)
from physsymbol.expr import parse
from physsymbol.library import sample_formula
from physsymbol.rewards import (
    AdvantageGroup, RewardWeights, accuracy_reward, composite_reward,
    extract_answer, format_reward, group_advantages, structural_reward,
)

WELL_FORMED = "<think>damping</think><answer>-k*x - c*v</answer>"


# --- format gate ---------------------------------------------------------------

def test_format_accepts_template():
    assert format_reward(WELL_FORMED) == 1
    assert format_reward("  <think>\nmulti\nline\n</think>\n<answer>x</answer>\n") == 1


def test_format_missing_think():
    assert format_reward("<answer>-k*x</answer>") == 0


def test_format_empty_bodies():
    assert format_reward("<think>a</think><answer></answer>") == 0
    assert format_reward("<think>a</think><answer>   </answer>") == 0
    assert format_reward("<think> </think><answer>x</answer>") == 0


def test_format_text_outside_blocks():
    assert format_reward("hi <think>a</think><answer>x</answer>") == 0
    assert format_reward("<think>a</think> so <answer>x</answer>") == 0
    assert format_reward("<think>a</think><answer>x</answer> bye") == 0


def test_format_nested_tags():
    assert format_reward("<think>a<think>b</think></think><answer>x</answer>") == 0
    assert format_reward("<think>a</think><answer>x<answer>y</answer></answer>") == 0


def test_format_two_answer_blocks():
    s = "<think>a</think><answer>x</answer><answer>v</answer>"
    assert format_reward(s) == 0


def test_format_wrong_order():
    assert format_reward("<answer>x</answer><think>a</think>") == 0


def test_format_case_sensitive():
    assert format_reward("<THINK>a</THINK><ANSWER>x</ANSWER>") == 0


# --- answer extraction ------------------------------------------------------------

def test_extract_well_formed():
    assert extract_answer(WELL_FORMED) == parse("-k*x - c*v")


def test_extract_last_of_multiple():
    s = "<answer>x</answer> then <answer>v**3</answer>"
    assert extract_answer(s) == parse("v**3")


def test_extract_no_tag():
    with pytest.raises(NoAnswerTag):
        extract_answer("<think>no answer here</think>")


def test_extract_syntax_error_propagates():
    with pytest.raises(SyntaxError):
        extract_answer("<answer>-k*x +</answer>")
    with pytest.raises(FormulaSyntaxError):
        extract_answer("<answer></answer>")


def test_extract_unknown_function_propagates():
    with pytest.raises(UnknownSymbol):
        extract_answer("<answer>foo(x)</answer>")


# --- structural reward ---------------------------------------------------------------

def test_structural_same_skeletons():
    assert structural_reward(parse("-k*x - c*v"), parse("-2.5*x - 0.3*v")) == 1.0


def test_structural_two_thirds():
    got = structural_reward(
        parse("-k*x - c*v**3"),
        parse("-2.1*x - 0.4*v**3 + 1.5*sin(2.0*t)"),
    )
    assert got == 2 / 3


def test_structural_identical():
    e = parse("-k*x + F*sin(w*t)")
    assert structural_reward(e, e) == 1.0


def test_structural_disjoint():
    assert structural_reward(parse("-k*x"), parse("0.5*sin(t)")) == 0.0


def test_structural_symmetric():
    a = parse("-k*x - c*v**3")
    b = parse("-2*x + 0.3*sin(1.1*t)")
    assert structural_reward(a, b) == structural_reward(b, a)


def test_structural_sign_matters():
    assert structural_reward(parse("k*x"), parse("-k*x")) == 0.0


@settings(max_examples=100, derandomize=True)
@given(
    a=st.floats(min_value=0.1, max_value=50.0),
    b=st.floats(min_value=0.1, max_value=50.0),
    c=st.floats(min_value=0.1, max_value=50.0),
)
def test_structural_rescale_invariance(a, b, c):
    gt = parse("-1.5*x - 0.2*v**3 + 0.8*sin(1.2*t)")
    gen = parse(f"-{a!r}*x - {b!r}*v**3 + {c!r}*sin(2.7*t)")
    assert structural_reward(gen, gt) == 1.0


# --- accuracy reward --------------------------------------------------------------------

def test_accuracy_commutation():
    assert accuracy_reward(parse("-k*x - c*v"), parse("-c*v - k*x")) == 1


def test_accuracy_literal_names():
    assert accuracy_reward(parse("-k*x"), parse("-2.5*x")) == 0
    assert accuracy_reward(parse("-k*x"), parse("-b*x")) == 0


def test_accuracy_constant_folding():
    assert accuracy_reward(parse("2*x + x"), parse("3*x")) == 1


def test_accuracy_implies_structural_on_generated():
    for seed in range(30):
        f = sample_formula(seed).formula
        assert accuracy_reward(f, f) == 1
        assert structural_reward(f, f) == 1.0


# --- composite -----------------------------------------------------------------------------

def test_composite_perfect():
    gt = parse("-k*x - c*v")
    got = composite_reward(WELL_FORMED, gt)
    assert got.format == 1
    assert got.structural == 1.0
    assert got.accuracy == 1
    assert got.composite == 0.1 * 1 + 0.6 * 1.0 + 0.3 * 1


def test_composite_structure_only():
    gt = parse("-2.5*x - 0.3*v")
    got = composite_reward(WELL_FORMED, gt)
    assert (got.format, got.structural, got.accuracy) == (1, 1.0, 0)
    assert got.composite == 0.1 * 1 + 0.6 * 1.0 + 0.3 * 0


def test_composite_unparseable_answer_keeps_format():
    gt = parse("-k*x")
    got = composite_reward("<think>hm</think><answer>-k*x +</answer>", gt)
    assert got.format == 1
    assert got.structural == 0.0 and got.accuracy == 0
    assert got.composite == 0.1
    assert got.gen_skeletons == frozenset()
    assert len(got.gt_skeletons) == 1


def test_composite_missing_tags():
    got = composite_reward("no tags at all", parse("-k*x"))
    assert got.composite == 0.0


def test_composite_answer_without_think():
    # format fails but the answer still scores structure and accuracy
    got = composite_reward("<answer>-k*x</answer>", parse("-k*x"))
    assert got.format == 0
    assert got.structural == 1.0
    assert got.accuracy == 1
    assert got.composite == 0.1 * 0 + 0.6 * 1.0 + 0.3 * 1


def test_composite_custom_weights_linearity():
    gt = parse("-2.5*x - 0.3*v")
    lam = 2.5
    base = composite_reward(WELL_FORMED, gt, RewardWeights(0.1, 0.6, 0.3))
    scaled = composite_reward(
        WELL_FORMED, gt, RewardWeights(0.1 * lam, 0.6 * lam, 0.3 * lam))
    assert math.isclose(scaled.composite, lam * base.composite, rel_tol=1e-15)


# --- advantages ----------------------------------------------------------------------------

def test_advantages_hand_example():
    got = group_advantages([1.0, 0.0, 0.0, 1.0])
    assert np.allclose(got, [1, -1, -1, 1], atol=1e-6)


def test_advantages_constant_group():
    assert np.array_equal(group_advantages([0.7, 0.7, 0.7]), [0.0, 0.0, 0.0])


def test_advantages_pair():
    got = group_advantages([2.0, 0.0])
    assert np.allclose(got, [1, -1], atol=1e-6)


def test_advantages_group_too_small():
    with pytest.raises(GroupTooSmall):
        group_advantages([1.0])
    with pytest.raises(GroupTooSmall):
        group_advantages([])


def test_advantages_mean_zero_std_one():
    rng = np.random.default_rng(8)
    values = np.array([0.0, 0.1, 0.4, 0.5, 0.7, 0.9, 1.0])
    for _ in range(200):
        g = int(rng.integers(2, 65))
        r = rng.choice(values, size=g)
        a = group_advantages(r)
        assert abs(a.mean()) < 1e-12
        if np.ptp(r) > 0:
            assert abs(a.std() - 1.0) < 1e-6


def test_advantages_translation_scale_invariance():
    rng = np.random.default_rng(9)
    for _ in range(50):
        r = rng.uniform(0, 1, size=8)
        if np.ptp(r) < 1e-3:
            continue
        a = group_advantages(r)
        b = group_advantages(3.7 * r + 0.4)
        assert np.max(np.abs(a - b)) < 1e-6


def test_advantage_group_wrapper():
    g = AdvantageGroup.from_rewards([1.0, 0.0, 0.0, 1.0])
    assert g.epsilon == 1e-8
    assert np.allclose(g.advantages, [1, -1, -1, 1], atol=1e-6)
