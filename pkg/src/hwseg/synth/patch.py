"""Single labeled patch synthesis."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from hwseg.errors import ConfigError, PlacementError, ShapeError, SynthesisError
from hwseg.synth.compose import compose_layers, extract_handwritten
from hwseg.synth.transform import TransformParams, apply_transform


@dataclass(frozen=True)
class SynthConfig:
    patch_size: int = 256
    scale_range: Tuple[float, float] = (0.5, 1.5)
    rotation_range: Tuple[float, float] = (-10.0, 10.0)
    offset_range: Tuple[int, int] = (0, 80)
    sentences_range: Tuple[int, int] = (1, 3)
    retry_budget: int = 10

    def __post_init__(self):
        for name in ("scale_range", "rotation_range", "offset_range", "sentences_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name}: lower bound above upper bound")
            object.__setattr__(self, name, (lo, hi))
        if self.patch_size < 1:
            raise ConfigError("patch_size must be positive")
        if self.scale_range[0] <= 0:
            raise ConfigError("scale must be positive")
        if self.offset_range[0] < 0:
            raise ConfigError("offset must be >= 0")
        if self.sentences_range[0] < 0:
            raise ConfigError("sentence count must be >= 0")
        if self.retry_budget < 1:
            raise ConfigError("retry_budget must be >= 1")

    def to_dict(self) -> dict:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synth keys: {sorted(unknown)}")
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass
class LabeledPatch:
    image: np.ndarray
    label: np.ndarray
    provenance: dict = field(default_factory=dict)


def _sample_params(rng: np.random.Generator, cfg: SynthConfig, src_shape) -> TransformParams:
    scale = float(rng.uniform(*cfg.scale_range))
    rotation = float(rng.uniform(*cfg.rotation_range))
    offset = int(rng.integers(cfg.offset_range[0], cfg.offset_range[1] + 1))
    # the sentence centre lands uniformly inside the canvas
    cy = int(rng.integers(0, cfg.patch_size))
    cx = int(rng.integers(0, cfg.patch_size))
    h, w = src_shape
    translation = (cy - (h - 1) // 2, cx - (w - 1) // 2)
    return TransformParams(scale, rotation, translation, offset)


def render_patch(printed_page: np.ndarray, sentences: Sequence[np.ndarray], provenance: dict,
                 patch_size: int) -> LabeledPatch:
    """Rebuild a patch from recorded provenance; ``sentences`` align with its placements."""
    y, x = provenance["crop"]
    crop = np.asarray(printed_page, dtype=np.uint8)[y:y + patch_size, x:x + patch_size]
    if crop.shape != (patch_size, patch_size):
        raise ShapeError(f"crop at {(y, x)} leaves the page")
    canvas = crop.shape
    layers = []
    label = np.zeros(canvas, dtype=np.uint8)
    for placement, sentence in zip(provenance["placements"], sentences, strict=True):
        p = TransformParams.from_dict(placement)
        ink, mask = extract_handwritten(sentence)
        ink_t, mask_t = apply_transform(ink, mask, p, canvas)
        layers.append((ink_t, mask_t, p.offset))
        label |= mask_t
    image = compose_layers(crop, layers)
    return LabeledPatch(image, label, provenance)


def synthesize_patch(printed_page: np.ndarray, sentences: Sequence[np.ndarray], cfg: SynthConfig,
                     rng: np.random.Generator, page_id: str = "page",
                     sentence_ids: Optional[Sequence[str]] = None) -> LabeledPatch:
    """Crop a printed page and paste 1..k transformed handwriting sentences onto it.

    ``sentences`` is the pool to draw from (any indexable sequence). Each
    sentence gets ``cfg.retry_budget`` attempts at finding parameters that
    leave some of it on the canvas.
    """
    page = np.asarray(printed_page, dtype=np.uint8)
    P = cfg.patch_size
    if page.shape[0] < P or page.shape[1] < P:
        raise ShapeError(f"page {page.shape} smaller than patch size {P}")
    if sentence_ids is None:
        sentence_ids = [str(i) for i in range(len(sentences))]
    y = int(rng.integers(0, page.shape[0] - P + 1))
    x = int(rng.integers(0, page.shape[1] - P + 1))
    k = int(rng.integers(cfg.sentences_range[0], cfg.sentences_range[1] + 1))
    if k and not len(sentences):
        raise SynthesisError("no handwriting sources to place")

    placements: List[dict] = []
    chosen = []
    for _ in range(k):
        idx = int(rng.integers(0, len(sentences)))
        sentence = np.asarray(sentences[idx], dtype=np.uint8)
        ink, mask = extract_handwritten(sentence)
        for _attempt in range(cfg.retry_budget):
            p = _sample_params(rng, cfg, sentence.shape)
            try:
                apply_transform(ink, mask, p, (P, P))
            except PlacementError:
                continue
            break
        else:
            raise SynthesisError(f"could not place sentence {sentence_ids[idx]} in {cfg.retry_budget} tries")
        placements.append({"sentence": sentence_ids[idx], **p.to_dict()})
        chosen.append(sentence)

    provenance = {"page": page_id, "crop": [y, x], "placements": placements}
    return render_patch(page, chosen, provenance, P)
