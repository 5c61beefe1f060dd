import numpy as np
import pytest

from vidbound.raster import (BoundaryMap, FlowField, FrameImage, LabelMap, RasterError,
                             VideoSegmentation, check, connected_components, label_boundaries,
                             relabel_array, validate)


def test_arrays_are_read_only():
    m = BoundaryMap(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        m.data[0, 0] = 1.0


def test_boundary_map_is_float32():
    assert BoundaryMap(np.ones((2, 2))).data.dtype == np.float32


@pytest.mark.parametrize("bad", [-0.1, 1.5, np.nan])
def test_boundary_map_range(bad):
    a = np.zeros((4, 4))
    a[1, 1] = bad
    assert check(BoundaryMap(a)) is not None
    with pytest.raises(RasterError):
        validate(BoundaryMap(a))


def test_frame_channels():
    assert check(FrameImage(np.zeros((4, 4, 2)))) == "channels must be 1 or 3"
    assert check(FrameImage(np.zeros((4, 4, 3)))) is None


def test_gray_of_rgb():
    img = FrameImage(np.dstack([np.ones((2, 2)), np.zeros((2, 2)), np.zeros((2, 2))]))
    assert np.allclose(img.gray(), 0.299)


def test_label_map_contiguity():
    assert check(LabelMap(np.array([[0, 2], [0, 2]]))) == "non-contiguous labels"
    assert check(LabelMap(np.array([[0, 1], [0, 1]]))) is None


def test_label_map_connectivity():
    lab = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]])
    assert check(LabelMap(lab)) == "label 0 is not 4-connected"
    # diagonal contact does not connect
    assert check(LabelMap(np.array([[0, 1], [1, 0]]))) is not None


def test_flow_checks():
    f = FlowField(np.full((3, 3), 10.0), np.zeros((3, 3)))
    assert check(f) == "flow exceeds image extent"
    assert check(FlowField.zeros(3, 3)) is None


def test_video_segmentation_frames():
    v = VideoSegmentation.from_frames([np.zeros((2, 2), int), np.ones((2, 2), int)])
    assert v.n_frames == 2 and v.n_labels == 2
    assert np.array_equal(v.frame(1), np.ones((2, 2)))


def test_relabel_first_occurrence_order():
    assert relabel_array(np.array([[7, 7, 3], [5, 3, 3]])).tolist() == [[0, 0, 1], [2, 1, 1]]


def test_connected_components_splits_pieces():
    lab = np.array([[0, 1, 0]])
    assert connected_components(lab).tolist() == [[0, 1, 2]]


def test_label_boundaries_both_sides():
    lab = np.array([[0, 0, 1, 1]])
    assert label_boundaries(lab).tolist() == [[False, True, True, False]]
