"""The full image-to-forces chain, shared by the CLI and the tests."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from . import raster, segmenter, solver, textreader, trussmodel
from .config import Config
from .segmenter import SegParams, Segmentation
from .textreader import OcrParams
from .trussmodel import TrussModel, ValidationIssue


@dataclass
class Analysis:
    gray: np.ndarray
    binary: np.ndarray
    model: TrussModel
    issues: list[ValidationIssue]
    segmentation: Optional[Segmentation] = None
    words: list = field(default_factory=list)
    labels: list = field(default_factory=list)
    result: Optional[solver.SolveResult] = None
    stages: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.result is not None and not trussmodel.has_errors(self.issues)


def seg_params(cfg: Config) -> SegParams:
    return SegParams(
        joint_se_radius=None if cfg.joint_se_radius == "auto" else float(cfg.joint_se_radius),
        joint_se_factor=cfg.joint_se_factor,
        member_coverage_min=cfg.member_coverage_min,
        residual_min_area=cfg.residual_min_area,
        arrow_line_min=cfg.arrow_line_similarity_min,
        arrow_shift_min=cfg.arrow_centroid_shift_min,
        support_band=tuple(cfg.support_band),
        support_shift_min=cfg.support_centroid_shift_min,
        roller_dilation_frac=cfg.roller_dilation_fraction,
        roller_line_min=cfg.roller_line_similarity_min,
    )


def ocr_params(cfg: Config) -> OcrParams:
    mean, low = cfg.flip_thresholds
    return OcrParams(area_band=tuple(cfg.ocr_area_band), flip_mean=mean, flip_min=low)


def _issue(severity, code, subject, message, remedy="") -> ValidationIssue:
    return ValidationIssue(severity, code, subject, message, remedy)


def _label_issues(model: TrussModel, labels, arrows) -> list[ValidationIssue]:
    """OCR problems worth reporting next to the validation result."""
    load_of_arrow = {a.id: k for k, a in enumerate(sorted(arrows, key=lambda a: a.id), start=1)}
    loads = {l.id: l for l in model.loads}
    out = []
    for lab in labels:
        if lab.attached_to is None:
            out.append(_issue("warning", "unattached-label", f"label {lab.text!r}",
                              f"label {lab.text!r} has no arrow or member nearby"))
        elif lab.issue == "unparseable load magnitude":
            lid = load_of_arrow.get(lab.attached_to[1])
            load = loads.get(lid)
            if load is not None and load.magnitude is None:
                out.append(_issue("warning", "unparseable-label", f"load {lid}",
                                  f"could not read a magnitude from label {lab.text!r} next to load {lid}",
                                  trussmodel._remedy("set", f"load {lid}", {"magnitude_kN": 10.0})))
    return out


def analyze(
    gray: np.ndarray,
    cfg: Config = Config(),
    corrections: list[dict] = (),
    scale: Optional[tuple[int, int, float]] = None,
) -> Analysis:
    """Binarize, segment, read labels, build and validate the model, and
    solve it when no error remains.

    Corrections and the ``scale`` reference ``(i, j, meters)`` apply to the
    built model before validation.  Correction failures raise
    :class:`trussmodel.CorrectionError`.
    """
    gray = np.asarray(gray)
    binary = raster.binarize(gray, cfg.threshold)
    shapes, small = raster.remove_small_regions(binary, cfg.small_region_area)
    stages = {"binary": binary, "shapes": shapes}

    try:
        seg = segmenter.segment(shapes, seg_params(cfg))
    except segmenter.SegmentationError as exc:
        issue = _issue("error", "no-joints", "image", str(exc),
                       "draw joints as filled circles larger than the line width")
        return Analysis(gray, binary, TrussModel(), [issue], stages=stages)
    stages.update(seg.stages)

    words = textreader.group_words(small, cfg.word_dilation_radius, binary.shape)
    words = textreader.read_words(words, params=ocr_params(cfg))
    labels = textreader.snap_labels(words, seg.arrows, seg.members)

    model = trussmodel.build_model(seg.joints, seg.members, seg.supports, seg.arrows, labels)
    if cfg.member_EA != 1.0:
        model = replace(model, members=tuple(replace(m, EA=float(cfg.member_EA)) for m in model.members))
    model = trussmodel.apply_corrections(model, list(corrections))
    if scale is not None:
        model = trussmodel.calibrate_scale(model, scale[0], scale[1], scale[2])

    issues = trussmodel.validate(model)
    for code, subject, message in seg.issues:
        issues.append(_issue("warning", code, subject, message,
                             trussmodel._remedy("add", "support N", {"kind": "pinned"}) if code == "orphan-support" else ""))
    issues += _label_issues(model, labels, seg.arrows)

    result = None
    if not trussmodel.has_errors(issues):
        try:
            result = solver.solve(model)
        except solver.SolverError as exc:
            issues.append(_issue("error", "solver", "model", str(exc)))
    return Analysis(gray, binary, model, issues, seg, words, labels, result, stages)
