"""Reward stack for scoring candidate governing equations.

Four signals: a binary template check on the raw response text, a
parameter-agnostic structural score (Jaccard over skeleton sets), a
binary exact-equivalence score, and their weighted composite. Group
advantage normalization turns batches of composites into zero-mean,
unit-scale learning signals.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormulaError, GroupTooSmall, NoAnswerTag, NonFinite
from .expr import Expr, SkeletonTerm, parse, skeleton_set, symbolic_equal

__all__ = [
    "RewardWeights", "RewardBreakdown", "AdvantageGroup",
    "format_reward", "extract_answer", "structural_reward",
    "accuracy_reward", "composite_reward", "group_advantages",
]


@dataclass(frozen=True)
class RewardWeights:
    w_f: float = 0.1
    w_s: float = 0.6
    w_a: float = 0.3

    def validate(self) -> None:
        for name in ("w_f", "w_s", "w_a"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")


DEFAULT_WEIGHTS = RewardWeights()


@dataclass(frozen=True)
class RewardBreakdown:
    format: int                       # {0, 1}
    structural: float                 # [0, 1]
    accuracy: int                     # {0, 1}
    composite: float
    gen_skeletons: frozenset[SkeletonTerm]
    gt_skeletons: frozenset[SkeletonTerm]


_TEMPLATE = re.compile(
    r"\s*<think>(.*?)</think>\s*<answer>(.*?)</answer>\s*\Z", re.DOTALL)
_ANSWER = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_TAG_TOKENS = ("<think>", "</think>", "<answer>", "</answer>")


def format_reward(response: str) -> int:
    """1 iff the response is exactly one think block then one answer
    block, nothing but whitespace outside, both bodies non-empty and free
    of nested tag tokens."""
    m = _TEMPLATE.fullmatch(response)
    if m is None:
        return 0
    think, answer = m.group(1), m.group(2)
    if not think.strip() or not answer.strip():
        return 0
    for body in (think, answer):
        if any(tok in body for tok in _TAG_TOKENS):
            return 0
    return 1


def extract_answer(response: str) -> Expr:
    """Parse the body of the last answer block. Raises NoAnswerTag when no
    block exists; parse failures propagate."""
    blocks = _ANSWER.findall(response)
    if not blocks:
        raise NoAnswerTag("no <answer>...</answer> block found")
    return parse(blocks[-1].strip())


def structural_reward(gen: Expr, gt: Expr) -> float:
    """Jaccard similarity of the two skeleton sets: which physics terms
    appear, signs included, magnitudes ignored."""
    sg = skeleton_set(gen)
    st = skeleton_set(gt)
    union = sg | st
    if not union:
        return 1.0
    return len(sg & st) / len(union)


def accuracy_reward(gen: Expr, gt: Expr) -> int:
    """1 iff the two formulas are symbolically identical (canonical forms
    equal, or numerically indistinguishable at the probe points).
    Parameter names match literally."""
    return int(symbolic_equal(gen, gt))


def composite_reward(response: str, gt: Expr,
                     weights: RewardWeights = DEFAULT_WEIGHTS) -> RewardBreakdown:
    """Total function: malformed or unparseable responses zero out the
    structural and accuracy components, never raise."""
    weights.validate()
    fmt = format_reward(response)
    structural = 0.0
    accuracy = 0
    gen_skels: frozenset[SkeletonTerm] = frozenset()
    try:
        gen = extract_answer(response)
    except (NoAnswerTag, FormulaError, NonFinite):
        gen = None
    if gen is not None:
        structural = structural_reward(gen, gt)
        accuracy = accuracy_reward(gen, gt)
        gen_skels = skeleton_set(gen)
    composite = weights.w_f * fmt + weights.w_s * structural + weights.w_a * accuracy
    return RewardBreakdown(
        format=fmt,
        structural=structural,
        accuracy=accuracy,
        composite=composite,
        gen_skeletons=gen_skels,
        gt_skeletons=skeleton_set(gt),
    )


def group_advantages(rewards, epsilon: float = 1e-8) -> np.ndarray:
    """Standardize one sampling group: (r - mean) / (population std + eps)."""
    r = np.asarray(rewards, float)
    if r.ndim != 1 or len(r) < 2:
        raise GroupTooSmall(f"need a 1-d group of >= 2 rewards, got shape {r.shape}")
    if np.ptp(r) == 0:
        # constant group: the numerator is exactly zero; skip the float
        # mean, whose rounding residue epsilon would otherwise amplify
        return np.zeros_like(r)
    centered = r - r.mean()
    return centered / (centered.std() + epsilon)


@dataclass(frozen=True)
class AdvantageGroup:
    rewards: np.ndarray
    advantages: np.ndarray
    epsilon: float

    @classmethod
    def from_rewards(cls, rewards, epsilon: float = 1e-8) -> "AdvantageGroup":
        r = np.asarray(rewards, float)
        return cls(rewards=r, advantages=group_advantages(r, epsilon),
                   epsilon=epsilon)
