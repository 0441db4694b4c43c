"""Dataset generation from a sources manifest.

A sources manifest is JSON of the form::

    {"printed": ["pages/", "extra/form1.png"], "handwritten": ["sentences/"]}

Entries are files or directories (every ``*.png`` inside, sorted), relative
to the manifest's own directory. Output layout::

    out/train/patch_000000.png, out/train/patch_000000_mask.png, ...
    out/val/...
    out/manifest.json
"""

from __future__ import annotations

import json
import logging
import shutil
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from hwseg.errors import ConfigError
from hwseg.imageio import read_gray, read_mask, write_gray, write_mask
from hwseg.synth.patch import SynthConfig, render_patch, synthesize_patch

log = logging.getLogger(__name__)

PAPER_TRAIN_COUNT = 146_391
PAPER_VAL_COUNT = 8_128
SPLITS = ("train", "val")


@dataclass
class Sources:
    root: Path
    printed: List[str]
    handwritten: List[str]

    def path(self, source_id: str) -> Path:
        return self.root / source_id


def _expand(root: Path, entries) -> List[str]:
    found = []
    for entry in entries:
        p = root / entry
        if p.is_dir():
            files = sorted(f for f in p.rglob("*.png") if f.is_file())
            if not files:
                raise FileNotFoundError(f"source directory {p} holds no PNG files")
            found.extend(f.relative_to(root).as_posix() for f in files)
        elif p.is_file():
            found.append(p.relative_to(root).as_posix())
        else:
            raise FileNotFoundError(f"missing source {p}")
    return found


def load_sources(manifest_path) -> Sources:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"sources manifest {manifest_path} not found")
    spec = json.loads(manifest_path.read_text())
    if not isinstance(spec, dict) or set(spec) - {"printed", "handwritten"}:
        raise ConfigError("sources manifest must only have 'printed' and 'handwritten' lists")
    root = manifest_path.parent
    printed = _expand(root, spec.get("printed", []))
    handwritten = _expand(root, spec.get("handwritten", []))
    if not printed:
        raise FileNotFoundError("no printed pages listed")
    return Sources(root, printed, handwritten)


class _ImagePool:
    """Lazily loaded, cached images indexed like a list."""

    def __init__(self, sources: Sources, ids: List[str]):
        self.ids = ids
        self._load = lru_cache(maxsize=None)(lambda i: read_gray(sources.path(ids[i])))

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, i):
        return self._load(i)


def patch_rng(seed: int, split: str, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, SPLITS.index(split), index]))


def _patch_name(index: int) -> str:
    return f"patch_{index:06d}"


def synthesize_dataset(sources_manifest, out_dir, n_train: int, n_val: int, seed: int,
                       cfg: SynthConfig = SynthConfig(), force: bool = False, threads: int = 1) -> dict:
    """Write ``n_train``/``n_val`` patches and ``manifest.json``; return the manifest.

    Every patch draws from its own rng stream seeded by ``(seed, split, index)``,
    so the output does not depend on ``threads``. Files go to a temporary
    directory that is moved into place only after the manifest is written.
    """
    if n_train < 0 or n_val < 0:
        raise ConfigError("patch counts must be >= 0")
    sources = load_sources(sources_manifest)
    out_dir = Path(out_dir)
    if out_dir.exists() and any(out_dir.iterdir()):
        if not force:
            raise FileExistsError(f"{out_dir} is not empty (use force to overwrite)")
    pages = _ImagePool(sources, sources.printed)
    sentences = _ImagePool(sources, sources.handwritten)
    for name, pool in (("printed pages", pages), ("handwriting sentences", sentences)):
        if 0 < len(pool) < max(n_train, n_val):
            log.warning("only %d distinct %s for %d patches; sampling with replacement",
                        len(pool), name, max(n_train, n_val))

    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=out_dir.name + ".", dir=out_dir.parent))
    try:
        splits: Dict[str, list] = {}
        for split, count in zip(SPLITS, (n_train, n_val)):
            (tmp / split).mkdir()

            def make(index, split=split):
                rng = patch_rng(seed, split, index)
                page_idx = int(rng.integers(0, len(pages)))
                patch = synthesize_patch(pages[page_idx], sentences, cfg, rng,
                                         page_id=sources.printed[page_idx], sentence_ids=sources.handwritten)
                stem = tmp / split / _patch_name(index)
                write_gray(stem.with_name(stem.name + ".png"), patch.image)
                write_mask(stem.with_name(stem.name + "_mask.png"), patch.label)
                return {"index": index, **patch.provenance}

            if threads > 1:
                with ThreadPoolExecutor(threads) as ex:
                    splits[split] = list(ex.map(make, range(count)))
            else:
                splits[split] = [make(i) for i in range(count)]

        manifest = {
            "format": 1,
            "seed": seed,
            "config": cfg.to_dict(),
            "counts": {"train": n_train, "val": n_val},
            "splits": splits,
        }
        (tmp / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
        if out_dir.exists():
            shutil.rmtree(out_dir)
        tmp.rename(out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return manifest


def regenerate_dataset(manifest_path, sources_manifest, out_dir) -> None:
    """Re-render every patch from recorded provenance instead of the rng."""
    manifest = json.loads(Path(manifest_path).read_text())
    sources = load_sources(sources_manifest)
    cfg = SynthConfig.from_dict(manifest["config"])
    out_dir = Path(out_dir)

    @lru_cache(maxsize=None)
    def load(source_id):
        return read_gray(sources.path(source_id))

    for split, records in manifest["splits"].items():
        for rec in records:
            sentences = [load(p["sentence"]) for p in rec["placements"]]
            prov = {k: v for k, v in rec.items() if k != "index"}
            patch = render_patch(load(rec["page"]), sentences, prov, cfg.patch_size)
            stem = out_dir / split / _patch_name(rec["index"])
            write_gray(stem.with_name(stem.name + ".png"), patch.image)
            write_mask(stem.with_name(stem.name + "_mask.png"), patch.label)
    (out_dir / "manifest.json").write_text(Path(manifest_path).read_text())


def load_split(dataset_dir, split: str) -> Tuple[np.ndarray, np.ndarray]:
    """Stack a split into ``(images [N,H,W] uint8, masks [N,H,W] {0,1})``."""
    d = Path(dataset_dir) / split
    if not d.is_dir():
        raise FileNotFoundError(f"no split directory {d}")
    stems = sorted(p.name[:-len(".png")] for p in d.glob("patch_*.png") if not p.name.endswith("_mask.png"))
    if not stems:
        return np.zeros((0, 0, 0), np.uint8), np.zeros((0, 0, 0), np.uint8)
    images = np.stack([read_gray(d / f"{s}.png") for s in stems])
    masks = np.stack([read_mask(d / f"{s}_mask.png") for s in stems])
    return images, masks
