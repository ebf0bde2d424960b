import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from boundaryloss import BinaryMask, FormatError, InvalidThreshold, ProbMap, ScalarGrid, ShapeError
from boundaryloss.grid import read_grid, threshold, write_grid


def test_threshold_inclusive():
    np.testing.assert_array_equal(threshold(np.array([0.2, 0.6, 0.5]), 0.5), [0, 1, 1])


def test_threshold_zeros_and_idempotent():
    assert not threshold(np.zeros((3, 3))).any()
    g = (np.random.default_rng(0).random((5, 5)) > 0.5).astype(float)
    np.testing.assert_array_equal(threshold(g), g)


@pytest.mark.parametrize("delta", [0.0, 1.0, -0.1, 1.5])
def test_threshold_rejects_delta(delta):
    with pytest.raises(InvalidThreshold):
        threshold(np.zeros(3), delta)


def test_threshold_keeps_grid_metadata():
    p = ProbMap(np.full((2, 4), 0.7), spacing=(2.0, 0.5))
    m = threshold(p)
    assert isinstance(m, BinaryMask)
    assert m.spacing == (2.0, 0.5) and m.shape == (2, 4)


@given(arrays(np.float64, (6, 7), elements=st.floats(0, 1)), st.floats(0.01, 0.99))
def test_threshold_partitions_domain(p, delta):
    m = threshold(p, delta)
    comp = 1 - m
    assert np.all(m + comp == 1)
    assert np.array_equal(m == 1, p >= delta)


def test_grid_invariants():
    with pytest.raises(ShapeError):
        ScalarGrid(np.zeros((2, 2)), spacing=(1.0, 0.0))
    with pytest.raises(ShapeError):
        ScalarGrid(np.zeros((2, 2)), spacing=(1.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        ScalarGrid(np.array([[np.nan, 0.0]]))
    with pytest.raises(ValueError):
        BinaryMask(np.array([0, 2]).reshape(1, 2))
    with pytest.raises(ValueError):
        ProbMap(np.array([[1.5]]))
    g = ScalarGrid(np.zeros((2, 3, 4)), spacing=(2.0, 1.0, 0.5))
    assert g.voxel_volume == 1.0 and g.ndim == 3
    with pytest.raises(ValueError):
        g.values[0, 0, 0] = 1.0  # immutable


@pytest.mark.parametrize("grid", [
    ScalarGrid(np.random.default_rng(1).standard_normal((5, 6)), spacing=(0.7, 1.3)),
    ScalarGrid(np.random.default_rng(2).standard_normal((3, 4, 5)).astype(np.float32), spacing=(3.0, 1.0, 1.0)),
    BinaryMask((np.random.default_rng(3).random((4, 4)) > 0.5).astype(np.uint8)),
])
def test_roundtrip_bit_exact(tmp_path, grid):
    path = tmp_path / "g.sgrid"
    write_grid(grid, path)
    back = read_grid(path)
    assert type(back) is type(grid)
    assert back.values.dtype == grid.values.dtype
    assert back.values.tobytes() == grid.values.tobytes()
    assert back.shape == grid.shape and back.spacing == grid.spacing


@given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 5)),
              elements=st.floats(-1e6, 1e6, allow_nan=False)),
       st.tuples(st.floats(0.1, 10), st.floats(0.1, 10)))
def test_roundtrip_property(tmp_path_factory, values, spacing):
    path = tmp_path_factory.mktemp("rt") / "g.sgrid"
    write_grid(ScalarGrid(values, spacing), path)
    back = read_grid(path)
    assert back.values.tobytes() == values.tobytes() and back.spacing == spacing


def test_truncated_payload(tmp_path):
    path = tmp_path / "g.sgrid"
    write_grid(ScalarGrid(np.ones((4, 4))), path)
    data = path.read_bytes()
    path.write_bytes(data[:-3])
    with pytest.raises(FormatError):
        read_grid(path)


def test_header_dimension_mismatch(tmp_path):
    path = tmp_path / "g.sgrid"
    payload = np.zeros(24, dtype="<f8").tobytes()
    path.write_bytes(b"SGRID v1 2 2 3 4 1.0 1.0 f64\n" + payload)
    with pytest.raises(FormatError):
        read_grid(path)


@pytest.mark.parametrize("header", [b"XGRID v1 2 2 2 1.0 1.0 f64\n", b"SGRID v1 2 2 2 1.0 1.0 i32\n",
                                    b"SGRID v1 2 2 2 1.0 -1.0 f64\n"])
def test_bad_headers(tmp_path, header):
    path = tmp_path / "g.sgrid"
    path.write_bytes(header + np.zeros(4, "<f8").tobytes())
    with pytest.raises(FormatError):
        read_grid(path)


def test_non_finite_payload(tmp_path):
    path = tmp_path / "g.sgrid"
    path.write_bytes(b"SGRID v1 2 1 2 1.0 1.0 f64\n" + np.array([0.0, np.inf], "<f8").tobytes())
    with pytest.raises(FormatError):
        read_grid(path)


def test_header_format(tmp_path):
    path = tmp_path / "g.sgrid"
    write_grid(BinaryMask(np.eye(2, dtype=np.uint8), spacing=(0.5, 2.0)), path)
    assert path.read_bytes().split(b"\n", 1)[0] == b"SGRID v1 2 2 2 0.5 2.0 u8"
