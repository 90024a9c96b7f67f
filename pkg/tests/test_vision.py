"""Mask metrics, reference-point geometry, augmentation, and PGM I/O."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from biobotsim.vision import (
    EmptyMaskError,
    Mask,
    PronotumShapeParams,
    ReferencePoint,
    augment,
    dsc,
    evaluate_pairs,
    extract_reference_point,
    identity_segmenter,
    iou,
    mse_pr,
    read_pgm,
    synth_pronotum,
    write_pgm,
)


def _mask(rows):
    return Mask.from_array(np.array(rows, dtype=bool))


# ---------- reference point ----------

def test_reference_point_posterior_row_and_mean_column():
    m = _mask([
        [0, 1, 1, 1, 0],
        [0, 1, 1, 1, 0],
        [0, 0, 1, 1, 0],
    ])
    # posterior row is y=2; columns {2, 3} average to 2.5, rounded away to 3
    assert extract_reference_point(m) == ReferencePoint(x=3, y=2)


def test_reference_point_single_pixel():
    m = Mask.zeros(8, 8)
    arr = m.pixels.copy()
    arr[5, 2] = True
    assert extract_reference_point(Mask(arr)) == ReferencePoint(x=2, y=5)


def test_reference_point_opposite_posterior_direction():
    m = _mask([
        [0, 0, 1, 0],
        [0, 1, 1, 1],
    ])
    assert extract_reference_point(m, "-y") == ReferencePoint(x=2, y=0)
    assert extract_reference_point(m, "+y") == ReferencePoint(x=2, y=1)


def test_reference_point_rejects_empty_mask():
    with pytest.raises(EmptyMaskError):
        extract_reference_point(Mask.zeros(4, 4))


def test_reference_point_rejects_bad_direction():
    m = _mask([[1]])
    with pytest.raises(ValueError):
        extract_reference_point(m, "+x")


# ---------- overlap metrics ----------

def test_identical_masks_score_unity():
    m, _ = synth_pronotum(PronotumShapeParams(), seed=0)
    assert iou(m, m) == 1.0
    assert dsc(m, m) == 1.0


def test_disjoint_masks_score_zero():
    a = Mask.zeros(10, 10).pixels.copy()
    b = Mask.zeros(10, 10).pixels.copy()
    a[:3, :3] = True
    b[6:, 6:] = True
    assert iou(Mask(a), Mask(b)) == 0.0
    assert dsc(Mask(a), Mask(b)) == 0.0


def test_half_overlap_analytic_values():
    # two 10x10 squares sharing a 5x10 strip: inter 50, union 150
    a = np.zeros((10, 20), dtype=bool)
    b = np.zeros((10, 20), dtype=bool)
    a[:, 0:10] = True
    b[:, 5:15] = True
    assert iou(Mask(a), Mask(b)) == 50 / 150
    assert dsc(Mask(a), Mask(b)) == 0.5


def test_both_empty_masks_score_unity():
    e = Mask.zeros(6, 6)
    assert iou(e, e) == 1.0
    assert dsc(e, e) == 1.0


def test_one_empty_mask_scores_zero():
    a = Mask.zeros(6, 6)
    b = Mask.from_array(np.ones((6, 6)))
    assert iou(a, b) == 0.0
    assert dsc(a, b) == 0.0


def test_metrics_reject_shape_mismatch():
    with pytest.raises(ValueError, match="dimensions"):
        iou(Mask.zeros(4, 4), Mask.zeros(5, 4))
    with pytest.raises(ValueError, match="dimensions"):
        dsc(Mask.zeros(4, 4), Mask.zeros(4, 5))


@st.composite
def small_mask_pairs(draw):
    h = draw(st.integers(min_value=1, max_value=12))
    w = draw(st.integers(min_value=1, max_value=12))
    bits = st.lists(st.booleans(), min_size=h * w, max_size=h * w)
    a = np.array(draw(bits), dtype=bool).reshape(h, w)
    b = np.array(draw(bits), dtype=bool).reshape(h, w)
    return Mask(a), Mask(b)


@given(small_mask_pairs())
def test_dice_dominates_iou(pair):
    a, b = pair
    assert dsc(a, b) >= iou(a, b)


@given(small_mask_pairs())
def test_overlap_metrics_are_symmetric(pair):
    a, b = pair
    assert iou(a, b) == iou(b, a)
    assert dsc(a, b) == dsc(b, a)


@given(small_mask_pairs())
def test_overlap_metrics_lie_in_unit_interval(pair):
    a, b = pair
    assert 0.0 <= iou(a, b) <= 1.0
    assert 0.0 <= dsc(a, b) <= 1.0


# ---------- reference point MSE ----------

def test_mse_single_unit_offset():
    assert mse_pr([ReferencePoint(1, 0)], [ReferencePoint(0, 0)]) == 1.0


def test_mse_averages_squared_distances():
    pred = [ReferencePoint(3, 4), ReferencePoint(0, 0)]
    true = [ReferencePoint(0, 0), ReferencePoint(0, 0)]
    assert mse_pr(pred, true) == 12.5  # (25 + 0) / 2


def test_mse_rejects_length_mismatch_and_empty():
    with pytest.raises(ValueError):
        mse_pr([ReferencePoint(0, 0)], [])
    with pytest.raises(ValueError):
        mse_pr([], [])


# ---------- augmentation ----------

def test_identity_augmentation_is_bit_exact():
    for seed in range(10):
        m, _ = synth_pronotum(PronotumShapeParams(), seed=seed)
        assert augment(m, 1.0, 1.0, 0.0).same_bits(m)


def test_augment_rejects_nonpositive_scales():
    m, _ = synth_pronotum(PronotumShapeParams(), seed=0)
    with pytest.raises(ValueError):
        augment(m, 0.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        augment(m, 1.0, -2.0, 0.0)


def test_uniform_scaling_scales_area():
    m, _ = synth_pronotum(PronotumShapeParams(), seed=3)
    grown = augment(m, 1.3, 1.3, 0.0)
    ratio = grown.foreground_count / m.foreground_count
    assert ratio == pytest.approx(1.3 * 1.3, rel=0.03)


def test_rotation_round_trip_moves_reference_at_most_two_px():
    worst = 0.0
    for seed in range(30):
        m, p_true = synth_pronotum(PronotumShapeParams(), seed=seed)
        for deg in (-30.0, 30.0):
            back = augment(augment(m, 1.0, 1.0, deg), 1.0, 1.0, -deg)
            p = extract_reference_point(back)
            err = ((p.x - p_true.x) ** 2 + (p.y - p_true.y) ** 2) ** 0.5
            worst = max(worst, err)
    assert worst <= 2.0


def test_rotation_preserves_area_approximately():
    m, _ = synth_pronotum(PronotumShapeParams(), seed=1)
    rot = augment(m, 1.0, 1.0, 30.0)
    assert rot.foreground_count == pytest.approx(m.foreground_count, rel=0.02)


# ---------- synthetic generator ----------

def test_synthetic_reference_point_matches_extraction_exactly():
    params = PronotumShapeParams()
    for seed in range(50):
        m, p_true = synth_pronotum(params, seed)
        assert extract_reference_point(m) == p_true, seed


def test_synthetic_generator_is_deterministic():
    params = PronotumShapeParams()
    a, pa = synth_pronotum(params, 11)
    b, pb = synth_pronotum(params, 11)
    assert a.same_bits(b)
    assert pa == pb


def test_synthetic_masks_do_not_touch_the_border():
    m, _ = synth_pronotum(PronotumShapeParams(), seed=2)
    assert not m.pixels[0].any() and not m.pixels[-1].any()
    assert not m.pixels[:, 0].any() and not m.pixels[:, -1].any()


# ---------- pair evaluation ----------

def test_evaluate_pairs_identity_prediction():
    params = PronotumShapeParams()
    truths = [synth_pronotum(params, s)[0] for s in range(5)]
    preds = [identity_segmenter(t) for t in truths]
    metrics, rows = evaluate_pairs(preds, truths)
    assert metrics.miou == 1.0
    assert metrics.mdsc == 1.0
    assert metrics.mse_pr == 0.0
    assert len(rows) == 5


def test_evaluate_pairs_aggregates_are_row_means():
    params = PronotumShapeParams()
    truths = [synth_pronotum(params, s)[0] for s in range(4)]
    preds = [augment(t, 1.0, 1.0, 5.0) for t in truths]
    metrics, rows = evaluate_pairs(preds, truths)
    arr = np.asarray(rows)
    assert metrics.miou == pytest.approx(arr[:, 0].mean(), abs=0)
    assert metrics.mdsc == pytest.approx(arr[:, 1].mean(), abs=0)
    assert metrics.mse_pr == pytest.approx(arr[:, 2].mean(), abs=0)


def test_evaluate_pairs_rejects_mismatched_lengths():
    m, _ = synth_pronotum(PronotumShapeParams(), 0)
    with pytest.raises(ValueError):
        evaluate_pairs([m], [m, m])


# ---------- PGM I/O ----------

def test_pgm_round_trip_is_bit_exact(tmp_path):
    m, _ = synth_pronotum(PronotumShapeParams(), seed=9)
    p = tmp_path / "m.pgm"
    write_pgm(m, p)
    assert read_pgm(p).same_bits(m)


def test_pgm_reader_tolerates_comments(tmp_path):
    p = tmp_path / "c.pgm"
    p.write_text("P2\n# a comment line\n2 2\n1\n1 0\n# mid comment\n0 1\n")
    m = read_pgm(p)
    assert m.pixels.tolist() == [[True, False], [False, True]]


def test_pgm_reader_rejects_wrong_magic(tmp_path):
    p = tmp_path / "bad.pgm"
    p.write_text("P5\n2 2\n1\n1 0 0 1\n")
    with pytest.raises(ValueError):
        read_pgm(p)
