"""Tests for Dice, Hausdorff distance and pair evaluation."""

import itertools
import math

import numpy as np
import pytest
import torch

from fouriereg.config.settings import NetVariant
from fouriereg.core.data import RegistrationPair
from fouriereg.core.metrics import (
    LabelMask,
    MetricError,
    dice,
    evaluate_manifest,
    evaluate_pair,
    hausdorff,
    initial_dice,
    mean_hausdorff,
    summarize,
    warp_labels,
)
from fouriereg.core.model import build

from .utils import smooth_field


def mask_from(array):
    return LabelMask(torch.as_tensor(np.asarray(array), dtype=torch.int32))


def empty(shape):
    return mask_from(np.zeros(shape, dtype=np.int32))


def square(shape, top, left, size, label=1):
    labels = np.zeros(shape, dtype=np.int32)
    labels[top : top + size, left : left + size] = label
    return labels


def brute_force_hd(a, b):
    """All-pairs Hausdorff distance between boundary voxels (4-neighbour)."""

    def boundary(region):
        points = []
        H, W = region.shape
        for i, j in itertools.product(range(H), range(W)):
            if not region[i, j]:
                continue
            neighbours = [(i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)]
            inside = [0 <= y < H and 0 <= x < W for y, x in neighbours]
            if not all(inside) or not all(region[y, x] for y, x in neighbours):
                points.append((i, j))
        return points

    pa, pb = boundary(a), boundary(b)

    def directed(p, q):
        return max(min(math.dist(x, y) for y in q) for x in p)

    return max(directed(pa, pb), directed(pb, pa))


class TestLabelMask:
    """Test label masks."""

    def test_label_set(self):
        mask = mask_from([[0, 2], [3, 2]])
        assert mask.label_set == (2, 3)

    def test_rejects_float(self):
        with pytest.raises(MetricError):
            LabelMask(torch.zeros(2, 2))


class TestDice:
    """Test Dice overlap."""

    def test_identical(self):
        mask = mask_from(square((8, 8), 2, 2, 3))
        result = dice(mask, mask)
        assert result.per_label == {1: 1.0}
        assert result.mean == 1.0

    def test_disjoint(self):
        a = mask_from(square((8, 8), 0, 0, 2))
        b = mask_from(square((8, 8), 5, 5, 2))
        assert dice(a, b).mean == 0.0

    def test_partial_overlap(self):
        """Two 2x2 squares sharing one column overlap with Dice 0.5."""
        a = mask_from(square((6, 6), 1, 1, 2))
        b = mask_from(square((6, 6), 1, 2, 2))
        assert dice(a, b).mean == pytest.approx(0.5)
        assert dice(b, a).mean == dice(a, b).mean

    def test_empty_masks(self):
        empty = mask_from(np.zeros((4, 4), dtype=np.int32))
        assert math.isnan(dice(empty, empty).mean)

    def test_label_only_in_one_mask(self):
        a = mask_from([[1, 2], [0, 0]])
        b = mask_from([[1, 0], [0, 0]])
        result = dice(a, b)
        assert result.per_label == {1: 1.0, 2: 0.0}
        assert result.mean == 0.5

    def test_shape_mismatch(self):
        with pytest.raises(MetricError):
            dice(empty((4, 4)), empty((4, 5)))


class TestWarpLabels:
    """Test nearest-neighbour label warping."""

    def test_zero_field(self):
        mask = mask_from(square((8, 8), 2, 3, 3, label=4))
        warped = warp_labels(mask, torch.zeros(2, 8, 8, dtype=torch.float64))
        assert torch.equal(warped.labels, mask.labels)

    def test_integer_translation_clamps(self):
        labels = torch.arange(16, dtype=torch.int32).reshape(4, 4)
        u = torch.zeros(1, 2, 4, 4, dtype=torch.float64)
        u[0, 0] = 1.0
        warped = warp_labels(LabelMask(labels), u).labels
        assert torch.equal(warped[:3], labels[1:])
        assert torch.equal(warped[3], labels[3])

    def test_matches_scalar_oracle(self, generator):
        labels = torch.randint(0, 4, (12, 12), generator=generator, dtype=torch.int32)
        u = smooth_field(1, (12, 12), 2.3, generator, reduction=2)[0]
        warped = warp_labels(LabelMask(labels), u).labels
        for i, j in itertools.product(range(12), range(12)):
            y = min(max(math.floor(i + float(u[0, i, j]) + 0.5), 0), 11)
            x = min(max(math.floor(j + float(u[1, i, j]) + 0.5), 0), 11)
            assert warped[i, j] == labels[y, x]

    def test_shape_mismatch(self):
        with pytest.raises(MetricError):
            warp_labels(empty((4, 4)), torch.zeros(2, 4, 5))


class TestHausdorff:
    """Test Hausdorff distances."""

    def test_identical(self):
        mask = mask_from(square((10, 10), 2, 2, 4))
        assert hausdorff(mask, mask, 1) == 0.0

    def test_offset_squares(self):
        a = mask_from(square((12, 12), 2, 2, 3))
        b = mask_from(square((12, 12), 5, 2, 3))
        assert hausdorff(a, b, 1) == pytest.approx(3.0)
        assert hausdorff(b, a, 1) == pytest.approx(3.0)

    def test_matches_brute_force(self, generator):
        for _ in range(3):
            a = (torch.rand(14, 14, generator=generator) > 0.6).numpy().astype(np.int32)
            b = (torch.rand(14, 14, generator=generator) > 0.6).numpy().astype(np.int32)
            expected = brute_force_hd(a == 1, b == 1)
            assert hausdorff(mask_from(a), mask_from(b), 1) == pytest.approx(expected)

    def test_missing_label(self):
        a = mask_from(square((8, 8), 1, 1, 2))
        with pytest.raises(MetricError, match="missing"):
            hausdorff(a, a, 2)

    def test_mean_over_shared_labels(self):
        a = square((12, 12), 1, 1, 3, label=1) + square((12, 12), 7, 7, 3, label=2)
        b = square((12, 12), 2, 1, 3, label=1) + square((12, 12), 7, 7, 3, label=2)
        assert mean_hausdorff(mask_from(a), mask_from(b)) == pytest.approx(0.5)
        assert mean_hausdorff(mask_from(a), empty((12, 12))) is None


class TestEvaluate:
    """Test pair and manifest evaluation."""

    @pytest.fixture
    def pairs(self):
        a = torch.zeros(16, 16, dtype=torch.int32)
        a[4:10, 4:10] = 1
        b = torch.zeros(16, 16, dtype=torch.int32)
        b[5:11, 4:10] = 1
        images = [m.double()[None] for m in (a, b)]
        return [
            RegistrationPair("p0", images[0], images[1], a, b),
            RegistrationPair("p1", images[1], images[0], b, a),
        ]

    def test_initial_dice(self, pairs):
        assert initial_dice(pairs[0]) == pytest.approx(2 * 30 / 72)

    def test_identity_model(self, pairs):
        model = build(NetVariant(base_channels=1), torch.float64).zero_()
        metrics = evaluate_pair(model, pairs[0])
        assert metrics.dice_mean == pytest.approx(initial_dice(pairs[0]))
        assert metrics.dice_per_label == {"1": pytest.approx(2 * 30 / 72)}
        assert metrics.hd == pytest.approx(1.0)
        assert metrics.neg_jac_pct == 0.0
        assert metrics.seconds >= 0
        assert set(metrics.to_dict()) == {
            "pair_id", "dice_mean", "dice_per_label", "hd", "neg_jac_pct", "seconds"
        }

    def test_missing_masks(self, pairs):
        model = build(NetVariant(base_channels=1), torch.float64)
        bare = RegistrationPair("bare", pairs[0].moving, pairs[0].fixed)
        with pytest.raises(MetricError):
            evaluate_pair(model, bare)

    async def test_evaluate_manifest(self, pairs):
        model = build(NetVariant(base_channels=1), torch.float64).zero_()
        results = await evaluate_manifest(model, pairs * 3, max_concurrency=2)
        assert sorted(r.pair_id for r in results) == ["p0"] * 3 + ["p1"] * 3
        summary = summarize(results)
        assert summary["pairs"] == 6
        assert summary["dice_mean"] == pytest.approx(2 * 30 / 72)

    def test_summarize_empty(self):
        assert summarize([]) == {"pairs": 0}
