"""Reasoning annotations for corpus instances.

Two generators with one output contract: a deterministic template engine
that needs no network, and an external chat-completion client that can be
swapped in when richer prose is wanted. Both produce a five-stage
analysis: visual pattern recognition, physical interpretation,
term-by-term analysis, hypothesis formation, validation logic.

Template text is keyword-checkable: every term category present in the
system contributes one fixed phrase, and no absent category's phrase ever
appears. Corpus quality checks grep for exactly these phrases.
"""

from __future__ import annotations

import base64
import os
import time
from dataclasses import dataclass

import numpy as np
import requests

from .errors import AuthError, AnnotatorError, MalformedResponse, NetworkError, RateLimited
from .expr import render
from .library import GeneratedSystem
from .simulate import Trajectory

__all__ = [
    "CATEGORY_KEYWORDS", "AnnotationText", "AnnotatorConfig",
    "annotate_template", "annotate_external", "annotation_request_prompt",
    "validate_keywords",
]

# one distinctive phrase per term category; none is a substring of another
CATEGORY_KEYWORDS = {
    "linear_restoring": "linear restoring force",
    "cubic_restoring": "cubic stiffening",
    "quintic_restoring": "quintic stiffening",
    "linear_damping": "linear drag",
    "cubic_damping": "cubic drag",
    "quintic_damping": "quintic drag",
    "forcing_time": "periodic driving in time",
    "forcing_space": "spatially periodic forcing",
    "coupling": "position-velocity coupling",
    "trig": "self-referential trigonometric force",
    "noise": "stochastic kicks",
}

_INTERPRETATION = {
    "linear_restoring": (
        "The {kw} pulls the mass back toward equilibrium in proportion to "
        "displacement, which is what sustains the oscillation."),
    "cubic_restoring": (
        "A {kw} contribution makes the effective spring harden at large "
        "amplitude, shortening the period of wide swings."),
    "quintic_restoring": (
        "A {kw} contribution only matters at the largest excursions, where "
        "it sharpens the turnaround."),
    "linear_damping": (
        "Energy leaves through {kw}, removing a fixed fraction of velocity "
        "per unit time and producing exponential-looking decay."),
    "cubic_damping": (
        "Dissipation here is {kw}: strong when the motion is fast, nearly "
        "absent near the turning points, so decay slows as amplitude drops."),
    "quintic_damping": (
        "The {kw} term bites only during the fastest passages, clipping "
        "velocity peaks while barely touching slow motion."),
    "forcing_time": (
        "There is {kw}: an external sinusoidal push at a fixed frequency "
        "that keeps feeding energy into the system."),
    "forcing_space": (
        "There is {kw}: the push depends on where the mass sits, rippling "
        "the effective potential landscape."),
    "coupling": (
        "A {kw} term mixes the two state variables, skewing the orbit "
        "relative to the coordinate axes."),
    "trig": (
        "A {kw} acts on the mass: the restoring push itself oscillates "
        "with position, creating multiple equilibria."),
    "noise": (
        "Random {kw} perturb the acceleration, roughening the otherwise "
        "smooth trace."),
}

_SIGNATURE = {
    "linear_restoring": "the repeated crossings through the equilibrium line",
    "cubic_restoring": "the flattened, squarish tips of the large swings",
    "quintic_restoring": "the abrupt reversals at the extreme excursions",
    "linear_damping": "the steady shrinkage of successive peaks",
    "cubic_damping": "fast early decay that stalls at small amplitude",
    "quintic_damping": "clipped velocity extremes early in the run",
    "forcing_time": "the persistent oscillation that never dies out",
    "forcing_space": "the uneven spacing of oscillation lobes across positions",
    "coupling": "the tilt of the phase-plane orbit away from axis symmetry",
    "trig": "the drift toward off-center resting points",
    "noise": "the jitter superimposed on the smooth trend",
}


def _float_fmt(value: float) -> str:
    return f"{value:.6g}"


def _trajectory_features(traj: Trajectory) -> dict:
    x = traj.x
    n = len(x)
    sign = np.sign(x)
    nz = sign[sign != 0]
    crossings = int(np.sum(nz[1:] != nz[:-1])) if len(nz) > 1 else 0
    third = max(n // 3, 1)
    early = float(np.max(np.abs(x[:third])))
    late = float(np.max(np.abs(x[-third:])))
    if early > 1e-12 and late < 0.8 * early:
        shape = "a spiral tightening toward the origin"
        trend = "the envelope of the displacement trace shrinks over time"
    elif early > 1e-12 and late > 1.25 * early:
        shape = "an outward-winding orbit"
        trend = "the envelope of the displacement trace grows over time"
    else:
        shape = "a closed, repeating orbit"
        trend = "the displacement amplitude stays level across the window"
    return {
        "crossings": crossings,
        "early": early,
        "late": late,
        "shape": shape,
        "trend": trend,
    }


def annotate_template(system: GeneratedSystem, traj: Trajectory) -> str:
    """Deterministic five-stage reasoning text for one instance."""
    cats = list(dict.fromkeys(system.term_categories))
    feats = _trajectory_features(traj)
    formula = render(system.formula)

    lines = []
    lines.append("Visual pattern recognition:")
    lines.append(
        f"The phase portrait traces {feats['shape']}, and {feats['trend']}. "
        f"The displacement crosses zero {feats['crossings']} times over the "
        f"window, with peak amplitude {_float_fmt(max(feats['early'], feats['late']))}.")

    lines.append("")
    lines.append("Physical interpretation:")
    for cat in cats:
        lines.append(_INTERPRETATION[cat].format(kw=CATEGORY_KEYWORDS[cat]))

    lines.append("")
    lines.append("Term-by-term analysis:")
    for cat in cats:
        kw = CATEGORY_KEYWORDS[cat]
        sig = _SIGNATURE[cat]
        lines.append(f"The {kw} term accounts for {sig}.")
    if "trig" in cats:
        shape = "x*cos(x)" if "x*cos(x)" in formula else "x*sin(x)"
        lines.append(f"Its shape here is the parameter-free form {shape}.")

    lines.append("")
    lines.append("Hypothesis formation:")
    named = ", ".join(CATEGORY_KEYWORDS[c] for c in cats)
    lines.append(
        f"From the plots alone one would posit: {named}. Together these "
        f"give an equation of motion with {len(system.term_categories)} terms.")

    lines.append("")
    lines.append("Validation logic:")
    lines.append(
        "Each proposed term maps onto a feature actually present in the "
        "plots, and no observed feature is left unexplained, so the "
        f"structure x'' = {formula} is consistent with the data.")
    return "\n".join(lines)


def validate_keywords(text: str, term_categories) -> tuple[list, list]:
    """(missing, forbidden) keyword phrases for a reasoning text."""
    present = set(term_categories)
    missing = [CATEGORY_KEYWORDS[c] for c in sorted(present)
               if CATEGORY_KEYWORDS[c] not in text]
    forbidden = [CATEGORY_KEYWORDS[c]
                 for c in sorted(set(CATEGORY_KEYWORDS) - present)
                 if CATEGORY_KEYWORDS[c] in text]
    return missing, forbidden


def annotation_request_prompt(formula_text: str) -> str:
    """Instruction block sent to an external annotator alongside the plots."""
    return (
        "You are given two plots of a one-dimensional mechanical system "
        "(a phase portrait and a displacement time series) together with "
        f"its governing equation x'' = {formula_text}.\n"
        "Write an expert analysis in five stages, in this order:\n"
        "1. Visual pattern recognition: salient geometric and temporal "
        "features of both plots.\n"
        "2. Physical interpretation: the mechanisms (restoring forces, "
        "dissipation, driving, randomness) behind those features.\n"
        "3. Term-by-term analysis: how each term of the equation produces "
        "a specific visual signature.\n"
        "4. Hypothesis formation: which terms could be posited from the "
        "visuals alone.\n"
        "5. Validation logic: check the proposed structure back against "
        "the observations.\n"
        "Be concrete and reference the plots, not generic theory."
    )


class AnnotationText(str):
    """A str carrying where the text came from: 'template', 'external',
    or 'template-fallback'."""
    source: str = "template"

    def __new__(cls, text: str, source: str = "template"):
        obj = super().__new__(cls, text)
        obj.source = source
        return obj


@dataclass(frozen=True)
class AnnotatorConfig:
    endpoint: str
    model: str = "gpt-4o"
    api_key_env: str = "ANNOTATOR_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5
    fallback_text: str | None = None


def annotate_external(config: AnnotatorConfig, prompt: str,
                      image_paths) -> AnnotationText:
    """Request reasoning text from a chat-completion endpoint.

    The credential is read from the environment and its absence is a
    precondition failure (AuthError before any request), never subject to
    fallback. Transport failures, rate-limit exhaustion, auth rejections
    by the server, and malformed replies fall back to
    config.fallback_text when set, else raise.
    """
    key = os.environ.get(config.api_key_env, "")
    if not key:
        raise AuthError(f"environment variable {config.api_key_env} is not set")

    content = [{"type": "text", "text": prompt}]
    for path in image_paths:
        with open(path, "rb") as fh:
            b64 = base64.b64encode(fh.read()).decode("ascii")
        content.append({"type": "image_url",
                        "image_url": {"url": f"data:image/png;base64,{b64}"}})
    payload = {"model": config.model,
               "messages": [{"role": "user", "content": content}]}
    headers = {"Authorization": f"Bearer {key}"}

    try:
        for attempt in range(config.max_retries + 1):
            try:
                resp = requests.post(config.endpoint, json=payload,
                                     headers=headers, timeout=config.timeout)
            except requests.RequestException as exc:
                raise NetworkError(str(exc)) from exc
            if resp.status_code == 429:
                if attempt < config.max_retries:
                    time.sleep(config.backoff_base * (2.0 ** attempt))
                    continue
                raise RateLimited(f"still rate-limited after "
                                  f"{config.max_retries} retries")
            if resp.status_code in (401, 403):
                raise AuthError(f"endpoint rejected the credential "
                                f"(HTTP {resp.status_code})")
            if resp.status_code >= 400:
                raise NetworkError(f"HTTP {resp.status_code} from endpoint")
            try:
                text = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise MalformedResponse(str(exc)) from exc
            if not isinstance(text, str) or not text.strip():
                raise MalformedResponse("empty or non-string content")
            return AnnotationText(text, source="external")
        raise NetworkError("retry loop exhausted")  # not reachable
    except AnnotatorError:
        if config.fallback_text is not None:
            return AnnotationText(config.fallback_text,
                                  source="template-fallback")
        raise
