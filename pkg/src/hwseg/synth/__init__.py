from hwseg.synth.compose import compose_layers, extract_handwritten, invert_compose
from hwseg.synth.dataset import (
    PAPER_TRAIN_COUNT,
    PAPER_VAL_COUNT,
    Sources,
    load_sources,
    load_split,
    regenerate_dataset,
    synthesize_dataset,
)
from hwseg.synth.otsu import between_class_variance, otsu_threshold
from hwseg.synth.patch import LabeledPatch, SynthConfig, render_patch, synthesize_patch
from hwseg.synth.transform import TransformParams, apply_transform

__all__ = [
    "LabeledPatch",
    "PAPER_TRAIN_COUNT",
    "PAPER_VAL_COUNT",
    "Sources",
    "SynthConfig",
    "TransformParams",
    "apply_transform",
    "between_class_variance",
    "compose_layers",
    "extract_handwritten",
    "invert_compose",
    "load_sources",
    "load_split",
    "otsu_threshold",
    "regenerate_dataset",
    "render_patch",
    "synthesize_dataset",
    "synthesize_patch",
]
