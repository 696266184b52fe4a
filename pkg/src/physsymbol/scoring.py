"""Scoring of candidate formulas against a built corpus.

A submission is a JSONL file of rows, each naming an instance and
carrying exactly one payload: either the raw model response (answer
extracted from its tags) or a bare formula string. Every row yields
structural and accuracy rewards plus a numeric track (pre-fit MSE, and
post-refinement MSE when refinement is enabled).

Unparseable candidates are scored, not dropped: both rewards go to zero
and the numeric track proceeds from the zero ansatz, so a refinement
pass still reports how far the trajectory alone can be explained.

Refinement is dispatched through the sr2 module object, never a direct
function reference, so a test can swap the engine out and prove that
scoring without refinement never touches it.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import sr2 as _sr2
from .dataset import load_manifest
from .errors import PhysSymbolError, UnknownInstance
from .expr import Constant, Expr, parameter_names, parse
from .rewards import accuracy_reward, extract_answer, structural_reward
from .simulate import import_csv
from .sr2 import GPConfig

__all__ = [
    "CandidateSubmission", "ScoreOptions", "ScoreRow", "Report",
    "load_submissions", "score_submission",
]


@dataclass(frozen=True)
class CandidateSubmission:
    """One scored candidate: exactly one of response_text (tagged model
    output) or formula_text (bare formula) must be present."""
    instance_id: str
    response_text: str | None = None
    formula_text: str | None = None

    def validate(self) -> None:
        has_response = self.response_text is not None
        has_formula = self.formula_text is not None
        if has_response == has_formula:
            raise ValueError(
                f"submission {self.instance_id!r} must carry exactly one of "
                f"response_text or formula_text")

    @classmethod
    def from_json(cls, d: dict) -> "CandidateSubmission":
        sub = cls(instance_id=d["instance_id"],
                  response_text=d.get("response_text"),
                  formula_text=d.get("formula_text"))
        sub.validate()
        return sub


def load_submissions(path: str) -> tuple[CandidateSubmission, ...]:
    """Parse a JSONL submission file; blank lines are skipped."""
    subs = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                subs.append(CandidateSubmission.from_json(json.loads(line)))
            except (json.JSONDecodeError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: bad submission row "
                                 f"({exc})") from exc
    return tuple(subs)


@dataclass(frozen=True)
class ScoreOptions:
    refine: bool = False                 # gate for the refinement engine
    gp: GPConfig = field(default_factory=GPConfig)


@dataclass(frozen=True)
class ScoreRow:
    instance_id: str
    parse_ok: bool
    s_struct: float
    s_acc: int
    pre_mse: float
    post_mse: float | None               # None when refinement is off
    runtime: float

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class Report:
    rows: tuple[ScoreRow, ...]
    aggregates: dict
    config: dict

    def to_json(self) -> dict:
        return {"rows": [r.to_json() for r in self.rows],
                "aggregates": self.aggregates,
                "config": self.config}

    def to_text(self) -> str:
        header = ["instance", "parse", "S_struct", "S_acc", "pre_mse",
                  "post_mse", "seconds"]
        body = []
        for r in self.rows:
            body.append([
                r.instance_id,
                "ok" if r.parse_ok else "fail",
                f"{r.s_struct:.4f}",
                str(r.s_acc),
                _fmt_mse(r.pre_mse),
                _fmt_mse(r.post_mse) if r.post_mse is not None else "-",
                f"{r.runtime:.3f}",
            ])
        widths = [max(len(h), *(len(row[i]) for row in body)) if body
                  else len(h) for i, h in enumerate(header)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
        for row in body:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)))
        lines.append("")
        for key in ("n", "parse_rate", "mean_s_struct", "mean_s_acc",
                    "mean_pre_mse", "mean_post_mse", "total_runtime"):
            if key in self.aggregates and self.aggregates[key] is not None:
                lines.append(f"{key} = {self.aggregates[key]:.6g}")
        return "\n".join(lines)


def _fmt_mse(value: float) -> str:
    if math.isinf(value):
        return "inf"
    return f"{value:.6g}"


def _candidate_expr(sub: CandidateSubmission) -> tuple[Expr | None, bool]:
    """(candidate, parse_ok); a failed parse yields (None, False)."""
    try:
        if sub.response_text is not None:
            return extract_answer(sub.response_text), True
        return parse(sub.formula_text), True
    except PhysSymbolError:
        return None, False


def _bound_candidate(candidate: Expr, traj) -> Expr:
    """Bind any free parameters so the numeric track can evaluate."""
    if not parameter_names(candidate):
        return candidate
    try:
        return _sr2.fit_coefficients(candidate, traj, strict=False)
    except PhysSymbolError:
        return Constant(0.0)


def score_submission(submissions, corpus_root: str,
                     options: ScoreOptions | None = None) -> Report:
    """Score each submission against its instance's ground truth.

    Raises UnknownInstance for ids absent from the corpus manifest.
    Rewards come from the stored formula; the numeric track runs on the
    stored (subsampled) trajectory. With options.refine the bound
    candidate seeds a residual-regression pass and post_mse reports the
    realigned result; without it the engine is never invoked.
    """
    opts = options or ScoreOptions()
    instances = {inst.id: inst for inst in load_manifest(corpus_root)}

    rows = []
    for sub in submissions:
        sub.validate()
        if sub.instance_id not in instances:
            raise UnknownInstance(sub.instance_id)
        inst = instances[sub.instance_id]
        t0 = time.perf_counter()

        gt = parse(inst.formula_text)
        traj = import_csv(f"{corpus_root}/{inst.trajectory_csv}")

        candidate, parse_ok = _candidate_expr(sub)
        if parse_ok:
            s_struct = structural_reward(candidate, gt)
            s_acc = accuracy_reward(candidate, gt)
        else:
            candidate = Constant(0.0)     # numeric track continues from zero
            s_struct, s_acc = 0.0, 0

        if opts.refine:
            result = _sr2.run_sr2(traj, candidate, opts.gp)
            pre, post = result.pre_mse, result.final_mse
        else:
            bound = _bound_candidate(candidate, traj)
            pre, post = _sr2.post_mse(bound, traj), None

        rows.append(ScoreRow(
            instance_id=sub.instance_id,
            parse_ok=parse_ok,
            s_struct=s_struct,
            s_acc=s_acc,
            pre_mse=pre,
            post_mse=post,
            runtime=time.perf_counter() - t0,
        ))

    aggregates = _aggregate(rows)
    config = {"refine": opts.refine}
    if opts.refine:
        config["gp"] = dataclasses.asdict(opts.gp)
        config["gp"]["operators"] = list(config["gp"]["operators"])
    return Report(rows=tuple(rows), aggregates=aggregates, config=config)


def _aggregate(rows) -> dict:
    n = len(rows)
    if n == 0:
        return {"n": 0}
    finite_pre = [r.pre_mse for r in rows if math.isfinite(r.pre_mse)]
    posts = [r.post_mse for r in rows if r.post_mse is not None
             and math.isfinite(r.post_mse)]
    return {
        "n": n,
        "parse_rate": sum(r.parse_ok for r in rows) / n,
        "mean_s_struct": float(np.mean([r.s_struct for r in rows])),
        "mean_s_acc": float(np.mean([r.s_acc for r in rows])),
        "mean_pre_mse": float(np.mean(finite_pre)) if finite_pre else None,
        "mean_post_mse": float(np.mean(posts)) if posts else None,
        "total_runtime": float(sum(r.runtime for r in rows)),
    }
