import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsiqa import evalstat, scorepipe
from wsiqa.scorepipe import DegenerateDistributionError, HETransform, ZScoreTransform
from wsiqa.scoretable import LOWER, ScoreTable


def test_zscore():

    assert scorepipe.zscore([1.0, 2.0, 3.0]).tolist() == [-1.0, 0.0, 1.0]


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(min_value=-1000, max_value=1000), min_size=2, max_size=100, unique=True),
    st.floats(min_value=0.01, max_value=100.0),
    st.booleans(),
    st.floats(min_value=-1000.0, max_value=1000.0),
)
def test_zscore_is_affine_invariant_up_to_sign(values, scale, negate, offset):

    x = np.array(values, dtype=np.float64)
    a = -scale if negate else scale

    expected = np.sign(a) * scorepipe.zscore(x)
    assert scorepipe.zscore(a * x + offset) == pytest.approx(expected, abs=1e-9)


def test_zscore_rejects_constant_vector():

    with pytest.raises(DegenerateDistributionError) as e:
        scorepipe.zscore([2.0, 2.0, 2.0])
    assert e.value.message == "Cannot z-score a constant vector (zero variance)"


def test_zscore_rejects_single_value():

    with pytest.raises(DegenerateDistributionError):
        scorepipe.zscore([2.0])


def test_zscore_rejects_non_finite():

    with pytest.raises(DegenerateDistributionError):
        scorepipe.zscore([1.0, math.inf])


def test_fit_zscore_applies_train_statistics():

    transform = scorepipe.fit_zscore([1.0, 3.0])
    assert transform == ZScoreTransform(2.0, math.sqrt(2.0))
    assert scorepipe.apply_zscore(transform, [2.0, 2.0 + math.sqrt(2.0)]).tolist() == pytest.approx([0.0, 1.0])


def test_he_is_uniform_on_its_training_set():

    values = np.random.default_rng(0).lognormal(0.0, 1.0, 100_000)
    transform = scorepipe.fit_he(values)

    equalized = scorepipe.apply_he(transform, values)
    counts = scorepipe.equalization_counts(equalized)

    assert counts.sum() == values.size
    assert counts.max() - counts.min() <= 2
    assert evalstat.srocc(values, equalized) == pytest.approx(1.0)


def test_he_ties_share_a_midrank():

    transform = scorepipe.fit_he([1.0, 1.0, 2.0, 3.0])

    assert transform.reference.tolist() == [1.0, 2.0, 3.0]
    assert transform.cdf.tolist() == [0.375, 0.75, 1.0]


def test_he_clamps_outside_training_range():

    transform = scorepipe.fit_he([1.0, 2.0, 3.0, 4.0])
    assert transform.apply([0.0, 10.0]).tolist() == [0.0, 1.0]


def test_he_rejects_constant_training_values():

    with pytest.raises(DegenerateDistributionError) as e:
        scorepipe.fit_he([5.0, 5.0, 5.0])
    assert e.value.message == "Histogram equalization needs at least 2 distinct training values"


def test_he_transform_rejects_unsorted_grid():

    with pytest.raises(DegenerateDistributionError):
        HETransform([2.0, 1.0], [0.5, 1.0])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False), min_size=2, max_size=200, unique=True))
def test_he_preserves_order(values):

    transform = scorepipe.fit_he(values)
    equalized = transform.apply(values)

    order = np.argsort(values)
    assert np.all(np.diff(equalized[order]) > 0)
    assert equalized.max() == pytest.approx(1.0)


def test_he_compact_keeps_the_mapping_close():

    values = np.random.default_rng(1).normal(size=5000)
    transform = scorepipe.fit_he(values, bins=64)
    compact = transform.compact()

    assert compact.reference.size <= 65
    assert np.max(np.abs(compact.apply(values) - transform.apply(values))) < 0.02


def test_transforms_save_and_load(tmp_path):

    transforms = {
        "PSNR": scorepipe.fit_he([20.0, 25.0, 30.0, 35.0]),
        "GMSD": scorepipe.fit_zscore([0.1, 0.2, 0.4]),
    }
    path = tmp_path / "transforms.json"

    scorepipe.save_transforms(transforms, path)
    loaded = scorepipe.load_transforms(path)

    values = [22.0, 0.3]
    assert loaded["PSNR"].apply(values).tolist() == transforms["PSNR"].apply(values).tolist()
    assert loaded["GMSD"] == transforms["GMSD"]


def test_transform_from_json_unknown_method():

    with pytest.raises(DegenerateDistributionError) as e:
        scorepipe.transform_from_json({"method": "minmax"})
    assert e.value.message == "Unknown normalization method 'minmax'"


def _table():
    ids = tuple(f"img{i}" for i in range(8))
    psnr = [math.inf, 40.0, 35.0, 30.0, 28.0, 25.0, 22.0, 20.0]
    gmsd = [0.0, 0.01, 0.03, 0.05, 0.08, 0.1, 0.15, 0.2]
    return ScoreTable(ids, ("PSNR", "GMSD"), np.column_stack([psnr, gmsd]), {"GMSD": LOWER})


def test_normalize_table_he():

    table = _table()
    train_ids = table.image_ids[:6]

    normalized, transforms = scorepipe.normalize_table(table, train_ids, "he")

    assert set(transforms) == {"PSNR", "GMSD"}
    assert normalized.polarity == table.polarity
    psnr = normalized.column("PSNR")
    # the infinite score is clamped onto the finite maximum
    assert psnr[0] == psnr[1]
    assert psnr[-1] == 0.0
    assert np.all(np.diff(psnr) <= 0)
    assert normalized.column("GMSD")[-1] == 1.0


def test_normalize_table_zscore_uses_train_rows_only():

    table = _table()
    train_ids = ["img2", "img3"]

    normalized, transforms = scorepipe.normalize_table(table, train_ids, "zscore")

    assert transforms["GMSD"].mean == pytest.approx(0.04)
    assert transforms["GMSD"].std == pytest.approx(0.01 * math.sqrt(2.0))
    assert normalized.column("GMSD")[2:4].tolist() == pytest.approx([-1 / math.sqrt(2.0), 1 / math.sqrt(2.0)])


def test_normalize_table_needs_two_train_rows():

    with pytest.raises(DegenerateDistributionError) as e:
        scorepipe.normalize_table(_table(), ["img1"])
    assert e.value.message == "Need at least 2 training rows to fit a normalization, got 1"


def test_normalize_table_rejects_unknown_method():

    with pytest.raises(DegenerateDistributionError):
        scorepipe.normalize_table(_table(), ["img1", "img2"], "minmax")


def test_normalize_table_names_degenerate_metric():

    table = ScoreTable(("a", "b", "c"), ("SSIM",), [[0.5], [0.5], [0.7]])

    with pytest.raises(DegenerateDistributionError) as e:
        scorepipe.normalize_table(table, ["a", "b"], "he")
    assert e.value.message.startswith("Metric 'SSIM': ")
