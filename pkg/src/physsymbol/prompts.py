"""Canned system prompts for the three training-stage dataset variants.

These are shipped verbatim as data assets: downstream consumers match on
their exact text, so reflowing or rewording them is a breaking change.
"""

from __future__ import annotations

__all__ = [
    "PROMPT_JOINT_REASONING",
    "PROMPT_GUIDED_FORMULA",
    "PROMPT_SYMBOLIC_ANSATZ",
    "prompt_for_variant",
]

# Stage 1: the model reasons end to end and emits both the analysis and
# the governing equation.
PROMPT_JOINT_REASONING = """\
You are a helpful scientific assistant. Given trajectory
images and motion data from a physical system, reason
step-by-step to explain the observed behavior, then
output the governing equation. Wrap your reasoning
process in <think> </think> and your final equation
in <answer> </answer>."""

# Stage 2: the reasoning chain is given; only the equation is produced.
PROMPT_GUIDED_FORMULA = """\
You are a helpful scientific assistant. Given the
reasoning steps for a physical system and its
trajectory images, output the corresponding governing
equation. The reasoning is provided in <think> </think>
tags, and your answer should be placed in
<answer> </answer> tags."""

# Stage 3: reinforcement stage; unknown coefficients stay symbolic.
PROMPT_SYMBOLIC_ANSATZ = """\
The user provides visual and trajectory data of a
physical phenomenon. The Assistant's task is to act
as a physicist. First, think step-by-step about the
underlying physical principles in <think> tags. Then,
derive and state the final governing equation in
<answer> tags. The equation should use symbolic
placeholders for unknown parameters (e.g., k, c, F)
and standard variables for the system (x, v, t)."""

_BY_VARIANT = {
    "MSI_JOINT": PROMPT_JOINT_REASONING,
    "MSI_GUIDED": PROMPT_GUIDED_FORMULA,
    "RGSC": PROMPT_SYMBOLIC_ANSATZ,
}


def prompt_for_variant(variant: str) -> str:
    try:
        return _BY_VARIANT[variant]
    except KeyError:
        raise KeyError(f"unknown dataset variant {variant!r}; "
                       f"expected one of {sorted(_BY_VARIANT)}") from None
