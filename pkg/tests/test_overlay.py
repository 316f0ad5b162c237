"""Overlay rendering: selection by |weight|, tint direction, untouched pixels."""

import numpy as np
import pytest

from limescope import ClassLabel, render_overlay, segment_grid
from limescope.errors import ContractError
from limescope.overlay import NEGATIVE_TINT, POSITIVE_TINT, TINT_ALPHA, rank_segments, segment_boundaries
from limescope.surrogate import Explanation, Provenance


def _explanation(weights, d):
    return Explanation(
        target_class=ClassLabel(1, "glaucoma"),
        weights=np.asarray(weights, dtype=np.float64),
        intercept=0.0,
        r2=1.0,
        selected=tuple(rank_segments(weights, d)),
        provenance=Provenance(0, 2, 0.25, 1.0, d, "test", d),
    )


def test_top_k_zero_is_identity(random_image):
    img = random_image(6, 6)
    smap = segment_grid(img, 2, 2)
    out = render_overlay(img, smap, _explanation([0.9, -0.8, 0.1, 0.0], 4), top_k=0)
    assert out.same_pixels(img)


def test_single_segment_boundary_tinted_green(random_image):
    img = random_image(5, 5)
    smap = segment_grid(img, 1, 1)
    out = render_overlay(img, smap, _explanation([0.7], 1), top_k=1)
    boundary = segment_boundaries(smap.labels)
    assert boundary[0].all() and boundary[-1].all()
    assert boundary[:, 0].all() and boundary[:, -1].all()
    assert np.array_equal(out.pixels[boundary], np.tile(POSITIVE_TINT, (boundary.sum(), 1)))
    inner = ~boundary
    expected = (1 - TINT_ALPHA) * img.pixels[inner] + TINT_ALPHA * POSITIVE_TINT
    assert np.allclose(out.pixels[inner], expected)


def test_exact_top_two_segments_tinted(random_image):
    img = random_image(8, 8)
    smap = segment_grid(img, 2, 2)
    weights = [0.9, -0.8, 0.1, 0.0]
    out = render_overlay(img, smap, _explanation(weights, 4), top_k=2)
    # oracle: sort by |weight| -> segments 0 and 1 selected
    order = sorted(range(4), key=lambda i: (-abs(weights[i]), i))
    assert order[:2] == [0, 1]
    for seg in (0, 1):
        member = smap.labels == seg
        assert not np.array_equal(out.pixels[member], img.pixels[member])
    for seg in (2, 3):
        member = smap.labels == seg
        assert np.array_equal(out.pixels[member], img.pixels[member])


def test_positive_green_negative_red(random_image):
    img = random_image(8, 8)
    smap = segment_grid(img, 2, 2)
    out = render_overlay(img, smap, _explanation([0.9, -0.8, 0.1, 0.0], 4), top_k=2)
    boundary = segment_boundaries(smap.labels)
    seg0_edge = (smap.labels == 0) & boundary
    seg1_edge = (smap.labels == 1) & boundary
    assert (out.pixels[seg0_edge] == POSITIVE_TINT).all()
    assert (out.pixels[seg1_edge] == NEGATIVE_TINT).all()


def test_top_k_clamped_to_segment_count(random_image):
    img = random_image(6, 6)
    smap = segment_grid(img, 2, 2)
    out = render_overlay(img, smap, _explanation([0.5, 0.4, 0.3, 0.2], 4), top_k=99)
    assert not out.same_pixels(img)


def test_dimension_mismatch_rejected(random_image):
    img = random_image(6, 6)
    other = segment_grid(random_image(8, 8), 2, 2)
    with pytest.raises(ContractError):
        render_overlay(img, other, _explanation([0.5, 0.4, 0.3, 0.2], 4), top_k=1)


def test_never_alters_unselected_pixels(random_image):
    for seed in range(5):
        img = random_image(10, 10, seed=seed)
        smap = segment_grid(img, 2, 5)
        weights = np.linspace(-1, 1, 10)
        for k in (0, 1, 3, 10):
            out = render_overlay(img, smap, _explanation(weights, 10), top_k=k)
            selected = set(rank_segments(weights, k))
            untouched = ~np.isin(smap.labels, list(selected))
            assert np.array_equal(out.pixels[untouched], img.pixels[untouched])


def test_rank_segments_tie_breaks_toward_lower_id():
    assert rank_segments([0.5, -0.5, 0.5], 3) == [0, 1, 2]
    assert rank_segments([0.1, -0.9, 0.9], 2) == [1, 2]
