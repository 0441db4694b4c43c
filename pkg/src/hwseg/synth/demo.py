"""Procedural stand-ins for scanned source material.

Printed pages are typeset text lines (Pillow's bundled font) on noisy
paper. Handwriting "sentences" are smooth pen trajectories drawn word by
word onto slightly differently toned tiles, which mimics the seams of
word-concatenated sentence scans.

Run ``python -m hwseg.synth.demo OUT_DIR`` to write a sources manifest.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from hwseg.imageio import write_gray

_WORDS = ("the of and form name date signature total amount address please fill "
          "section item number page report code value office use only yes no "
          "account period tax return phone email city state zip question").split()


def _paper(rng, shape, level=(232, 248), noise=4.0):
    base = rng.uniform(*level)
    img = base + rng.normal(0, noise, shape)
    return img


def printed_page(rng: np.random.Generator, size=(384, 384)) -> np.ndarray:
    h, w = size
    canvas = Image.new("L", (w, h), 255)
    draw = ImageDraw.Draw(canvas)
    y = int(rng.integers(2, 12))
    while y < h - 8:
        fsize = int(rng.integers(9, 15))
        font = ImageFont.load_default(size=fsize)
        x = int(rng.integers(2, 20))
        n = int(rng.integers(3, 10))
        line = " ".join(rng.choice(_WORDS, n))
        if rng.random() < 0.3:
            line = line.upper()
        draw.text((x, y), line, fill=int(rng.integers(0, 40)), font=font)
        if rng.random() < 0.15:
            ly = y + fsize + 2
            draw.line([(0, ly), (w, ly)], fill=int(rng.integers(20, 80)), width=1)
        y += fsize + int(rng.integers(3, 10))
    ink = 255.0 - np.asarray(canvas, dtype=np.float64)
    page = _paper(rng, size) - ink * rng.uniform(0.85, 1.0)
    return np.clip(np.rint(page), 0, 255).astype(np.uint8)


def _stroke(rng, length):
    """Pen trajectory for one word: a forward drift plus looping oscillation."""
    t = np.linspace(0, 1, 40 * length)
    freq = rng.uniform(0.8, 1.4) * length
    phase = rng.uniform(0, 2 * np.pi)
    x = t * 13 * length + 2.5 * np.sin(2 * np.pi * freq * t + phase)
    y = 7.0 * np.sin(2 * np.pi * freq * t * rng.uniform(0.8, 1.2)) + rng.normal(0, 0.3, t.size).cumsum() * 0.15
    return x, y


def handwritten_sentence(rng: np.random.Generator, height: int = 36) -> np.ndarray:
    words = int(rng.integers(1, 4))
    tiles = []
    for _ in range(words):
        length = int(rng.integers(2, 6))
        x, y = _stroke(rng, length)
        wdt = int(np.ceil(x.max() - x.min())) + 10
        tile = Image.new("L", (wdt, height), 0)
        draw = ImageDraw.Draw(tile)
        pts = list(zip(x - x.min() + 5, y - y.mean() + height / 2))
        draw.line(pts, fill=255, width=int(rng.integers(1, 3)), joint="curve")
        ink = np.asarray(tile, dtype=np.float64) / 255.0
        paper = _paper(rng, (height, wdt), level=(236, 250), noise=3.0)
        pen = rng.uniform(40, 110)
        tiles.append(paper * (1 - ink) + pen * ink + rng.normal(0, 4, ink.shape) * ink)
    img = np.concatenate(tiles, axis=1)
    return np.clip(np.rint(img), 0, 255).astype(np.uint8)


def write_demo_sources(out_dir, n_pages: int = 8, n_sentences: int = 40, seed: int = 0,
                       page_size=(384, 384)) -> Path:
    """Write pages/ and sentences/ plus ``sources.json``; return the manifest path."""
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    for i in range(n_pages):
        write_gray(out_dir / "printed" / f"page_{i:03d}.png", printed_page(rng, page_size))
    for i in range(n_sentences):
        write_gray(out_dir / "handwritten" / f"sentence_{i:04d}.png", handwritten_sentence(rng))
    manifest = out_dir / "sources.json"
    manifest.write_text(json.dumps({"printed": ["printed"], "handwritten": ["handwritten"]}, indent=1) + "\n")
    return manifest


def main(argv=None):
    ap = argparse.ArgumentParser(description="write procedural demo sources")
    ap.add_argument("out_dir")
    ap.add_argument("--pages", type=int, default=8)
    ap.add_argument("--sentences", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--page-size", type=int, default=384)
    args = ap.parse_args(argv)
    path = write_demo_sources(args.out_dir, args.pages, args.sentences, args.seed,
                              (args.page_size, args.page_size))
    print(path)


if __name__ == "__main__":
    main()
