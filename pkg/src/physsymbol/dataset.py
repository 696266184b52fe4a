"""Corpus construction: sampled systems rendered into per-instance files
plus stage-specific training records.

A corpus directory is laid out as

    manifest.json                 instance metadata, one entry per instance
    trajectories/i00042.csv       subsampled t,x,v,a table
    images/i00042_phase.png       phase portrait of the full trajectory
    images/i00042_traj.png        displacement time series
    msi_joint.json                training records, one file per variant
    msi_guided.json
    rgsc.json

All paths stored in manifests and records are relative to the corpus
root, and every byte written is a pure function of the build
configuration, so rebuilding with the same seed reproduces the corpus
bit for bit in any directory.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import enum
import json
import os
from dataclasses import dataclass, field

from .annotate import (AnnotationText, AnnotatorConfig, annotate_external,
                       annotate_template, annotation_request_prompt,
                       validate_keywords)
from .errors import Diverged, IntegrityError, StepSizeUnderflow, Unstable
from .expr import parse, render
from .library import SamplerConfig, categories, param_range_for, sample_formula
from .prompts import prompt_for_variant
from .simulate import SimConfig, export_csv, import_csv, simulate, subsample
from .viz import DEFAULT_STYLE, PlotStyle, render_phase_portrait, render_time_series

__all__ = [
    "StageVariant", "BuildConfig", "Instance",
    "build_instance", "build_corpus", "assemble",
    "load_manifest", "corpus_stats",
]

MANIFEST_SCHEMA = "physsymbol-corpus/1"
DATASET_SCHEMA = "physsymbol-dataset/1"


class StageVariant(enum.Enum):
    MSI_JOINT = "MSI_JOINT"
    MSI_GUIDED = "MSI_GUIDED"
    RGSC = "RGSC"


def _coerce_variant(variant) -> StageVariant:
    if isinstance(variant, StageVariant):
        return variant
    return StageVariant(str(variant))


@dataclass(frozen=True)
class BuildConfig:
    out_dir: str
    n_instances: int
    corpus_seed: int = 0
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    style: PlotStyle = DEFAULT_STYLE
    csv_points: int = 100
    max_retries: int = 16
    annotator: AnnotatorConfig | None = None  # None = template annotations
    n_workers: int = 1

    def validate(self) -> None:
        if self.n_instances < 0:
            raise ValueError("n_instances must be nonnegative")
        if self.csv_points < 2:
            raise ValueError("csv_points must be at least 2")
        if self.max_retries < 0:
            raise ValueError("max_retries must be nonnegative")
        if self.n_workers < 1:
            raise ValueError("n_workers must be at least 1")


@dataclass(frozen=True)
class Instance:
    id: str
    seed: int
    formula_text: str
    formula_symbolic: str
    trajectory_csv: str          # path relative to the corpus root
    phase_png: str
    traj_png: str
    cot_text: str
    term_categories: tuple[str, ...]
    params: dict[str, float]
    retries: int
    annotation_source: str

    def to_json(self) -> dict:
        d = dataclasses.asdict(self)
        d["term_categories"] = list(self.term_categories)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "Instance":
        return cls(
            id=d["id"], seed=d["seed"],
            formula_text=d["formula_text"],
            formula_symbolic=d["formula_symbolic"],
            trajectory_csv=d["trajectory_csv"],
            phase_png=d["phase_png"], traj_png=d["traj_png"],
            cot_text=d["cot_text"],
            term_categories=tuple(d["term_categories"]),
            params=dict(d["params"]),
            retries=d["retries"],
            annotation_source=d["annotation_source"],
        )


def _instance_id(index: int) -> str:
    return f"i{index:05d}"


def build_instance(corpus_seed: int, index: int, config: BuildConfig) -> Instance:
    """Sample, integrate, and render one corpus instance, writing its CSV
    and PNG files under config.out_dir.

    Unstable draws (divergence or integrator stall) are retried with a
    derived seed, index*32 + attempt, up to config.max_retries extra
    attempts; exhaustion raises Unstable rather than silently skipping
    the slot.
    """
    iid = _instance_id(index)
    sampler = dataclasses.replace(config.sampler, corpus_seed=corpus_seed)

    system = traj = None
    retries = 0
    for attempt in range(config.max_retries + 1):
        candidate = sample_formula(index * 32 + attempt, sampler)
        try:
            traj = simulate(candidate, config.sim)
        except (Diverged, StepSizeUnderflow):
            retries = attempt + 1
            continue
        system = candidate
        retries = attempt
        break
    if system is None:
        raise Unstable(iid, config.max_retries + 1)

    os.makedirs(os.path.join(config.out_dir, "trajectories"), exist_ok=True)
    os.makedirs(os.path.join(config.out_dir, "images"), exist_ok=True)
    rel_csv = os.path.join("trajectories", f"{iid}.csv")
    rel_phase = os.path.join("images", f"{iid}_phase.png")
    rel_traj = os.path.join("images", f"{iid}_traj.png")

    export_csv(subsample(traj, config.csv_points),
               os.path.join(config.out_dir, rel_csv))
    with open(os.path.join(config.out_dir, rel_phase), "wb") as fh:
        fh.write(render_phase_portrait(traj, config.style))
    with open(os.path.join(config.out_dir, rel_traj), "wb") as fh:
        fh.write(render_time_series(traj, config.style))

    template = annotate_template(system, traj)
    if config.annotator is None:
        cot = AnnotationText(template, source="template")
    else:
        ann_cfg = dataclasses.replace(config.annotator, fallback_text=template)
        cot = annotate_external(
            ann_cfg,
            annotation_request_prompt(render(system.formula)),
            [os.path.join(config.out_dir, rel_phase),
             os.path.join(config.out_dir, rel_traj)],
        )

    return Instance(
        id=iid,
        seed=system.seed,
        formula_text=render(system.formula),
        formula_symbolic=render(system.symbolic_formula),
        trajectory_csv=rel_csv,
        phase_png=rel_phase,
        traj_png=rel_traj,
        cot_text=str(cot),
        term_categories=system.term_categories,
        params=dict(system.params),
        retries=retries,
        annotation_source=cot.source,
    )


def _dump_json(obj, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _build_slot(job) -> Instance:
    corpus_seed, index, config = job
    return build_instance(corpus_seed, index, config)


def build_corpus(config: BuildConfig) -> tuple[Instance, ...]:
    """Build the full corpus under config.out_dir: per-instance files,
    manifest.json, and one record file per stage variant.

    Instances are independent given (corpus_seed, index) and own disjoint
    output files, so with n_workers > 1 they build in a process pool; the
    manifest and variant files are assembled by this process alone, in
    index order either way.
    """
    config.validate()
    os.makedirs(os.path.join(config.out_dir, "trajectories"), exist_ok=True)
    os.makedirs(os.path.join(config.out_dir, "images"), exist_ok=True)

    jobs = [(config.corpus_seed, i, config)
            for i in range(config.n_instances)]
    if config.n_workers > 1 and len(jobs) > 1:
        with concurrent.futures.ProcessPoolExecutor(
                max_workers=config.n_workers) as pool:
            instances = tuple(pool.map(_build_slot, jobs, chunksize=8))
    else:
        instances = tuple(_build_slot(job) for job in jobs)

    manifest = {
        "schema": MANIFEST_SCHEMA,
        "corpus_seed": config.corpus_seed,
        "count": len(instances),
        "csv_points": config.csv_points,
        "instances": [inst.to_json() for inst in instances],
    }
    _dump_json(manifest, os.path.join(config.out_dir, "manifest.json"))

    for variant in StageVariant:
        assemble(instances, variant, config.out_dir)
    return instances


def load_manifest(root: str) -> tuple[Instance, ...]:
    """Instances recorded in root/manifest.json."""
    with open(os.path.join(root, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    if manifest.get("schema") != MANIFEST_SCHEMA:
        raise IntegrityError(f"unrecognized manifest schema "
                             f"{manifest.get('schema')!r}")
    return tuple(Instance.from_json(d) for d in manifest["instances"])


def _record_fields(inst: Instance, variant: StageVariant) -> tuple[str, str]:
    """(input_text, target_text) for one training record."""
    if variant is StageVariant.MSI_JOINT:
        return "", (f"<think>\n{inst.cot_text}\n</think>\n"
                    f"<answer>\n{inst.formula_text}\n</answer>")
    if variant is StageVariant.MSI_GUIDED:
        return (f"<think>\n{inst.cot_text}\n</think>",
                f"<answer>\n{inst.formula_text}\n</answer>")
    return "", inst.formula_symbolic


def assemble(instances, variant, root: str, filename: str | None = None) -> str:
    """Write the training-record file for one stage variant and return
    its path.

    Every referenced per-instance file must exist under root; a missing
    file is an IntegrityError naming the instance. An empty instance
    list still produces a valid file with header metadata and zero
    records.
    """
    var = _coerce_variant(variant)
    records = []
    for inst in instances:
        for rel in (inst.trajectory_csv, inst.phase_png, inst.traj_png):
            if not os.path.isfile(os.path.join(root, rel)):
                raise IntegrityError(f"instance {inst.id}: missing file {rel}")
        input_text, target_text = _record_fields(inst, var)
        records.append({
            "id": inst.id,
            "images": [inst.phase_png, inst.traj_png],
            "trajectory": inst.trajectory_csv,
            "formula": inst.formula_text,
            "formula_symbolic": inst.formula_symbolic,
            "cot": inst.cot_text,
            "variant": var.value,
            "prompt": prompt_for_variant(var.value),
            "input": input_text,
            "target": target_text,
            "meta": {
                "seed": inst.seed,
                "categories": list(inst.term_categories),
                "params": inst.params,
                "retries": inst.retries,
                "annotation_source": inst.annotation_source,
            },
        })
    payload = {
        "schema": DATASET_SCHEMA,
        "variant": var.value,
        "count": len(records),
        "records": records,
    }
    path = os.path.join(root, filename or f"{var.value.lower()}.json")
    _dump_json(payload, path)
    return path


def _params_in_range(inst: Instance) -> bool:
    for name, value in inst.params.items():
        try:
            lo, hi = param_range_for(name)
        except KeyError:
            return False
        if value < lo - 1e-12 or value > hi + 1e-12:
            return False
    return True


def corpus_stats(root: str) -> dict:
    """Summary and integrity report for a built corpus.

    Integrity covers: per-instance files present, formula text
    re-parses, CSV round-trips with the declared point count, parameters
    inside their library ranges, and (for template annotations) the
    keyword check that every present category's phrase appears and no
    absent category's phrase does.
    """
    with open(os.path.join(root, "manifest.json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    instances = tuple(Instance.from_json(d) for d in manifest["instances"])
    csv_points = manifest.get("csv_points")

    term_hist: dict[int, int] = {}
    category_counts: dict[str, int] = {}
    retry_total = 0
    failures = []
    for inst in instances:
        n_terms = len(inst.term_categories)
        term_hist[n_terms] = term_hist.get(n_terms, 0) + 1
        for cat in set(inst.term_categories):
            category_counts[cat] = category_counts.get(cat, 0) + 1
        retry_total += inst.retries

        for rel in (inst.trajectory_csv, inst.phase_png, inst.traj_png):
            if not os.path.isfile(os.path.join(root, rel)):
                failures.append(f"{inst.id}: missing file {rel}")
        try:
            parse(inst.formula_text)
            parse(inst.formula_symbolic)
        except Exception as exc:
            failures.append(f"{inst.id}: formula does not parse ({exc})")
        csv_path = os.path.join(root, inst.trajectory_csv)
        if os.path.isfile(csv_path):
            traj = import_csv(csv_path)
            if csv_points is not None and len(traj) != csv_points:
                failures.append(f"{inst.id}: expected {csv_points} samples, "
                                f"got {len(traj)}")
        if not _params_in_range(inst):
            failures.append(f"{inst.id}: parameter outside library range")
        if inst.annotation_source in ("template", "template-fallback"):
            missing, forbidden = validate_keywords(inst.cot_text,
                                                   inst.term_categories)
            if missing:
                failures.append(f"{inst.id}: keywords missing {missing}")
            if forbidden:
                failures.append(f"{inst.id}: keywords forbidden {forbidden}")

    count = len(instances)
    mean_terms = (sum(k * v for k, v in term_hist.items()) / count
                  if count else 0.0)
    return {
        "count": count,
        "term_count_histogram": {str(k): term_hist[k]
                                 for k in sorted(term_hist)},
        "mean_term_count": mean_terms,
        "category_coverage": {
            c: category_counts.get(c, 0) / count
            for c in sorted(set(categories()) | set(category_counts))
        } if count else {},
        "retry_total": retry_total,
        "integrity_failures": len(failures),
        "integrity_detail": failures[:50],
    }
