import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.ndimage import gaussian_filter
from scipy.optimize import linear_sum_assignment

from vidbound.evaluation import (GroundTruth, average_precision, boundary_pr, f_measure,
                                 match_boundaries, seg_boundaries, superpixel_curves,
                                 undersegmentation_error, volume_pr)
from vidbound.hierarchy import build_ucm
from vidbound.raster import BoundaryMap, RasterError, VideoSegmentation


def exact_matching(pred, gt, tol):
    """Maximum-cardinality matching by exact assignment."""
    pp, gg = np.argwhere(pred), np.argwhere(gt)
    if len(pp) == 0 or len(gg) == 0:
        return 0
    d = np.hypot(*(pp[:, None, :] - gg[None, :, :]).transpose(2, 0, 1))
    cost = (d > tol).astype(float)
    r, c = linear_sum_assignment(cost)
    return int((cost[r, c] == 0).sum())


def random_sparse(rng, shape=(12, 12), p=0.15):
    return rng.random(shape) < p


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("tol", [0, 1, 1.5, 2])
def test_matching_is_maximum(seed, tol):
    rng = np.random.default_rng(seed)
    pred, gt = random_sparse(rng), random_sparse(rng)
    mp, mg = match_boundaries(pred, gt, tol)
    assert mp.sum() == mg.sum() == exact_matching(pred, gt, tol)
    assert not (mp & ~pred).any() and not (mg & ~gt).any()


def square_gt(shift=0, size=24):
    lab = np.zeros((size, size), int)
    lab[6:18, 6 + shift:18 + shift] = 1
    return lab


def test_perfect_prediction():
    gt = square_gt()
    pred = BoundaryMap(seg_boundaries(gt).astype(np.float32))
    for tol in (0, 1, 3):
        c = boundary_pr([pred], GroundTruth.single(gt), n_thresholds=5, tol=tol)
        assert all(s[1] == s[2] == s[3] == 1.0 for s in c.samples)
        assert c.ods == c.oss == 1.0


def test_shifted_line():
    gt = np.zeros((16, 16), int)
    gt[:, 8:] = 1
    pred = np.zeros((16, 16), np.float32)
    pred[:, 8] = 1  # gt boundary sits in column 7
    g = GroundTruth.single(gt)
    hit = boundary_pr([BoundaryMap(pred)], g, n_thresholds=3, tol=2)
    miss = boundary_pr([BoundaryMap(pred)], g, n_thresholds=3, tol=0)
    assert hit.samples[0][1:3] == (1.0, 1.0)
    assert miss.samples[0][1:3] == (0.0, 0.0)


def test_no_gt_boundary():
    with pytest.raises(RasterError):
        boundary_pr([BoundaryMap(np.zeros((8, 8), np.float32))], GroundTruth.single(np.zeros((8, 8), int)))


def test_curve_invariants(rng):
    gt = square_gt()
    smooth = [gaussian_filter(rng.random((24, 24)), 1) for _ in range(3)]
    frames = [BoundaryMap((s / s.max()).astype(np.float32)) for s in smooth]
    c = boundary_pr(frames, GroundTruth.single(np.stack([gt] * 3)), n_thresholds=8)
    assert 0 <= c.ap <= 1
    assert c.oss >= c.ods - 1e-12
    for _, p, r, f in c.samples:
        assert 0 <= p <= 1 and 0 <= r <= 1 and f == pytest.approx(f_measure(p, r))


def test_average_precision_box():
    assert average_precision([0.5, 1.0], [1.0, 1.0]) == 1.0
    assert average_precision([1.0], [0.5]) == 0.5


# ---------------------------------------------------------------------------
# volumes


def halves(t=4, size=8):
    lab = np.zeros((t, size, size), int)
    lab[:, :, size // 2:] = 1
    return lab


def test_vpr_identical():
    gt = halves()
    c = volume_pr([VideoSegmentation(gt + 5)], GroundTruth.single(gt))
    assert c.samples[0][1:3] == (1.0, 1.0)


def test_vpr_single_volume():
    # sum_v max_g |v & g| / N = 1/2; recall: every gt volume fits in the one volume
    gt = halves()
    c = volume_pr([VideoSegmentation(np.zeros_like(gt))], GroundTruth.single(gt))
    assert c.samples[0][1:3] == (0.5, 1.0)


def test_vpr_temporal_consistency_matters():
    gt = halves()
    flicker = gt.copy()
    flicker[1::2] = 1 - flicker[1::2]
    flicker[1::2] += 2  # same partition per frame, fresh labels on odd frames
    g = GroundTruth.single(gt)
    good = volume_pr([VideoSegmentation(gt)], g).samples[0]
    bad = volume_pr([VideoSegmentation(flicker)], g).samples[0]
    assert bad[2] < good[2]


def test_vpr_frame_mismatch():
    with pytest.raises(RasterError):
        volume_pr([VideoSegmentation(halves(3))], GroundTruth.single(halves(4)))


@given(st.permutations(range(4)))
def test_vpr_label_permutation(perm):
    rng = np.random.default_rng(0)
    seg = rng.integers(0, 4, (3, 6, 6))
    gt = halves(3, 6)
    a = volume_pr([VideoSegmentation(seg)], GroundTruth.single(gt)).samples
    b = volume_pr([VideoSegmentation(np.asarray(perm)[seg])], GroundTruth.single(gt)).samples
    assert a == b


# ---------------------------------------------------------------------------
# under-segmentation error


def test_use_cases():
    gt = halves(1)[0]
    assert undersegmentation_error(np.zeros((8, 8), int), gt) == 1.0
    assert undersegmentation_error(gt, gt) == 0.0
    fine = np.arange(64).reshape(8, 8)
    assert undersegmentation_error(fine, gt) == 0.0
    straddle = np.zeros((8, 8), int)
    straddle[:, 3:] = 1  # 8 pixels left of the gt split, 32 right of it
    assert undersegmentation_error(straddle, gt) == pytest.approx((8 + 8) / 64)


@given(st.integers(0, 10_000))
def test_use_range_and_refinement(seed):
    rng = np.random.default_rng(seed)
    gt = rng.integers(0, 3, (6, 6))
    spx = rng.integers(0, 5, (6, 6))
    e = undersegmentation_error(spx, gt)
    assert 0 <= e <= 1
    refined = spx * 3 + gt
    assert undersegmentation_error(refined, gt) == 0.0


# ---------------------------------------------------------------------------
# superpixel curves


def synthetic_image(seed, size=32):
    rng = np.random.default_rng(seed)
    gt = np.zeros((size, size), int)
    r, c = rng.integers(6, 14, 2)
    gt[r:r + 12, c:c + 12] = 1
    edge = seg_boundaries(gt).astype(float)
    noise = gaussian_filter(rng.random((size, size)), 1.5)
    m = np.clip(0.8 * gaussian_filter(edge, 0.7) / gaussian_filter(edge, 0.7).max() + 0.3 * noise, 0, 1)
    return build_ucm(BoundaryMap(m.astype(np.float32))), gt


def test_superpixel_curves():
    data = [synthetic_image(s) for s in range(20)]
    hier, gts = zip(*data)
    counts = [1, 2, 4, 8, 16, 32, 64]
    rows = superpixel_curves(hier, gts, counts, tol=1)
    assert rows[0][0] == 1.0 and rows[0][1] == 0.0
    use_one = np.mean([undersegmentation_error(np.zeros_like(g), g) for g in gts])
    assert rows[0][3] == pytest.approx(use_one)
    recalls = [r[1] for r in rows]
    assert all(b >= a for a, b in zip(recalls, recalls[1:]))
    assert [r[0] for r in rows] == sorted(r[0] for r in rows)
