import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from hwseg.errors import PlacementError, ShapeError, SynthesisError
from hwseg.synth import (
    SynthConfig,
    TransformParams,
    apply_transform,
    compose_layers,
    extract_handwritten,
    invert_compose,
    render_patch,
    synthesize_patch,
)

u8 = hnp.arrays(np.uint8, (5, 7))


def blob_sentence(h=12, w=20):
    s = np.full((h, w), 245, np.uint8)
    s[3:9, 4:15] = 50
    return s


class TestExtract:
    def test_example(self):
        ink, mask = extract_handwritten(np.array([[255, 60], [250, 40]], np.uint8), threshold=150)
        np.testing.assert_array_equal(mask, [[0, 1], [0, 1]])
        np.testing.assert_array_equal(ink, [[255, 60], [255, 40]])

    def test_ink_free(self):
        ink, mask = extract_handwritten(np.full((3, 3), 240, np.uint8), threshold=100)
        assert not mask.any() and np.all(ink == 255)

    def test_default_uses_otsu(self):
        ink, mask = extract_handwritten(blob_sentence())
        assert mask.sum() == 6 * 11


class TestCompose:
    def test_white_page_dark_ink(self):
        out = invert_compose(np.array([[255]], np.uint8), np.array([[40]], np.uint8), np.array([[1]], np.uint8))
        assert out[0, 0] == 40

    def test_saturated_overlap(self):
        out = invert_compose(np.array([[20]], np.uint8), np.array([[20]], np.uint8), np.array([[1]], np.uint8))
        assert out[0, 0] == 0

    def test_offset_lightens(self):
        out = invert_compose(np.array([[255]], np.uint8), np.array([[40]], np.uint8), np.array([[1]], np.uint8), offset=100)
        assert out[0, 0] == 140
        out = invert_compose(np.array([[255]], np.uint8), np.array([[40]], np.uint8), np.array([[1]], np.uint8), offset=300)
        assert out[0, 0] == 255

    @settings(max_examples=80)
    @given(u8, u8)
    def test_empty_mask_is_identity(self, printed, ink):
        out = invert_compose(printed, ink, np.zeros_like(printed), offset=13)
        np.testing.assert_array_equal(out, printed)

    @settings(max_examples=80)
    @given(u8, u8, hnp.arrays(np.uint8, (5, 7), elements=st.integers(0, 1)), st.integers(0, 80))
    def test_never_lighter(self, printed, ink, mask, offset):
        # adding ink can only darken the page, and only inside the mask
        out = invert_compose(printed, ink, mask, offset)
        assert np.all(out <= printed)
        np.testing.assert_array_equal(out[mask == 0], printed[mask == 0])

    def test_single_final_clamp(self):
        # two layers each adding 200 saturate, instead of a lighter per-layer clamp
        page = np.array([[255]], np.uint8)
        layer = (np.array([[55]], np.uint8), np.array([[1]], np.uint8), 0)
        assert compose_layers(page, [layer, layer])[0, 0] == 0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            invert_compose(np.zeros((2, 2), np.uint8), np.zeros((2, 3), np.uint8), np.zeros((2, 3), np.uint8))


class TestTransform:
    def test_identity_pads_onto_canvas(self):
        ink, mask = extract_handwritten(blob_sentence())
        out_ink, out_mask = apply_transform(ink, mask, TransformParams(), (16, 24))
        np.testing.assert_array_equal(out_mask[:12, :20], mask)
        np.testing.assert_array_equal(out_ink[:12, :20], ink)
        assert not out_mask[12:].any() and np.all(out_ink[12:] == 255)

    @pytest.mark.parametrize("dy,dx", [(3, 5), (-2, 7), (10, -1)])
    def test_translation_moves_centroid(self, dy, dx):
        ink, mask = extract_handwritten(blob_sentence())
        _, m0 = apply_transform(ink, mask, TransformParams(), (40, 40))
        _, m1 = apply_transform(ink, mask, TransformParams(translation=(dy, dx)), (40, 40))
        c0 = np.argwhere(m0).mean(axis=0)
        c1 = np.argwhere(m1).mean(axis=0)
        np.testing.assert_allclose(c1 - c0, [dy, dx], atol=1e-12)

    def test_rotate_180_twice(self, rng):
        s = np.full((21, 31), 240, np.uint8)
        s[rng.random(s.shape) < 0.2] = 30
        ink, mask = extract_handwritten(s)
        p = TransformParams(rotation=180.0)
        i1, m1 = apply_transform(ink, mask, p, s.shape)
        _, m2 = apply_transform(i1, m1, p, s.shape)
        assert np.count_nonzero(m2 != mask) <= 0.01 * mask.sum()

    def test_scale_about_centre(self):
        ink, mask = extract_handwritten(blob_sentence())
        _, m = apply_transform(ink, mask, TransformParams(scale=1.5), (12, 20))
        c0 = np.argwhere(mask).mean(axis=0)
        c1 = np.argwhere(m).mean(axis=0)
        centre = np.array([5.5, 9.5])
        # centroid moves away from the image centre by the scale factor (up to rasterization)
        np.testing.assert_allclose(c1 - centre, 1.5 * (c0 - centre), atol=0.5)

    def test_clipped_away(self):
        ink, mask = extract_handwritten(blob_sentence())
        with pytest.raises(PlacementError):
            apply_transform(ink, mask, TransformParams(translation=(100, 100)), (20, 20))

    def test_params_roundtrip(self):
        p = TransformParams(0.75, -4.5, (3, -2), 17)
        assert TransformParams.from_dict(p.to_dict()) == p


class TestPatch:
    def page(self, rng, size=48):
        return rng.integers(200, 256, (size, size), dtype=np.uint8)

    def test_no_sentences(self, rng):
        page = self.page(rng)
        patch = synthesize_patch(page, [blob_sentence()], SynthConfig(patch_size=32, sentences_range=(0, 0)), rng)
        y, x = patch.provenance["crop"]
        assert not patch.label.any()
        np.testing.assert_array_equal(patch.image, page[y:y + 32, x:x + 32])

    def test_identity_conserves_mask(self, rng):
        page = self.page(rng)
        s = blob_sentence()
        prov = {"page": "p", "crop": [0, 0],
                "placements": [{"sentence": "s", **TransformParams().to_dict()}]}
        patch = render_patch(page, [s], prov, 32)
        assert patch.label.sum() == extract_handwritten(s)[1].sum()

    def test_deterministic(self):
        page = self.page(np.random.default_rng(0))
        pool = [blob_sentence(), blob_sentence(10, 30)]
        cfg = SynthConfig(patch_size=32)
        a = synthesize_patch(page, pool, cfg, np.random.default_rng(5))
        b = synthesize_patch(page, pool, cfg, np.random.default_rng(5))
        np.testing.assert_array_equal(a.image, b.image)
        np.testing.assert_array_equal(a.label, b.label)
        assert a.provenance == b.provenance

    def test_replay_from_provenance(self, rng):
        page = self.page(rng)
        pool = [blob_sentence(), blob_sentence(14, 26)]
        patch = synthesize_patch(page, pool, SynthConfig(patch_size=32, sentences_range=(2, 3)), rng,
                                 sentence_ids=["a", "b"])
        sentences = [pool["ab".index(p["sentence"])] for p in patch.provenance["placements"]]
        again = render_patch(page, sentences, patch.provenance, 32)
        np.testing.assert_array_equal(again.image, patch.image)

    def test_label_marks_darkened_pixels(self, rng):
        page = np.full((40, 40), 250, np.uint8)
        patch = synthesize_patch(page, [blob_sentence()], SynthConfig(patch_size=32, offset_range=(0, 0)), rng)
        assert patch.label.any()
        assert np.all(patch.image[patch.label == 0] == 250)
        assert np.all(patch.image[patch.label == 1] < 250)

    def test_retry_budget(self, rng):
        # at scale 0.1 only the sentence centre is ever sampled, and the ink sits in a corner
        s = np.full((9, 9), 240, np.uint8)
        s[0, 0] = 10
        cfg = SynthConfig(patch_size=16, scale_range=(0.1, 0.1), retry_budget=3, sentences_range=(1, 1))
        with pytest.raises(SynthesisError):
            synthesize_patch(self.page(rng, 16), [s], cfg, rng)

    def test_config_roundtrip(self):
        cfg = SynthConfig(patch_size=64, rotation_range=(-5.0, 5.0))
        assert SynthConfig.from_dict(cfg.to_dict()) == cfg
