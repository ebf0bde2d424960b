import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import brute_dsc, brute_hd95, percentile_linear

from boundaryloss import ShapeError
from boundaryloss.metrics import EvalReport, directed_boundary_distances, domain_diagonal, dsc, hd95


def test_dsc_examples():
    g = np.zeros((4, 4), np.uint8)
    g[1:3, 1:3] = 1
    assert dsc(g, g) == 1.0
    other = np.zeros_like(g)
    other[0, 0] = 1
    assert dsc(other, g) == 0.0
    p = np.zeros_like(g)
    p[1:3, 2:4] = 1  # |P| = |G| = 4, overlap 2
    assert dsc(p, g) == 0.5
    assert dsc(np.zeros((3, 3)), np.zeros((3, 3))) == 1.0
    assert dsc(np.zeros((3, 3)), np.eye(3)) == 0.0
    with pytest.raises(ShapeError):
        dsc(np.zeros((2, 2)), np.zeros((2, 3)))


def test_hd95_examples():
    g = np.zeros((5, 5), np.uint8)
    g[1, 1] = 1
    p = np.zeros_like(g)
    p[1, 2] = 1
    assert hd95(p, g) == 1.0
    assert hd95(g, g) == 0.0
    sq = np.zeros((16, 16), np.uint8)
    sq[4:10, 4:10] = 1
    assert hd95(np.roll(sq, 1, axis=1), sq) == 1.0


def test_hd95_full_mask_is_sentinel():
    full = np.ones((4, 5), np.uint8)
    part = full.copy()
    part[0, 0] = 0
    assert hd95(full, full) == 0.0
    assert hd95(part, full) == domain_diagonal((4, 5), (1, 1))


def test_hd95_empty_cases():
    g = np.zeros((6, 8), np.uint8)
    assert hd95(g, g) == 0.0
    g[2, 2] = 1
    assert hd95(np.zeros_like(g), g, spacing=(2.0, 1.0)) == pytest.approx(np.hypot(12, 8))
    assert domain_diagonal((6, 8), (1, 1)) == 10.0


pairs = st.tuples(arrays(np.bool_, (12, 12)), arrays(np.bool_, (12, 12)))


@settings(max_examples=40)
@given(pairs, st.floats(0.5, 2.0), st.floats(0.5, 2.0))
def test_against_brute_force(pair, sy, sx):
    a, b = pair
    assert dsc(a, b) == pytest.approx(brute_dsc(a, b), abs=1e-12)
    assert hd95(a, b, (sy, sx)) == pytest.approx(brute_hd95(a, b, (sy, sx)), abs=1e-9)


@given(pairs)
def test_symmetry_and_bounds(pair):
    a, b = pair
    assert dsc(a, b) == dsc(b, a)
    assert hd95(a, b) == hd95(b, a)
    if a.any() and b.any():
        assert (dsc(a, b) == 1.0) == bool(np.array_equal(a, b))
    if a.any() and b.any() and not a.all() and not b.all():
        full = max(directed_boundary_distances(a, b, (1, 1)).max(), directed_boundary_distances(b, a, (1, 1)).max())
        assert hd95(a, b) <= full + 1e-12


def test_percentile_formula():
    vals = [0.0, 1.0, 2.0, 10.0]
    assert np.percentile(vals, 95) == pytest.approx(percentile_linear(vals, 95))


def test_eval_report():
    r = EvalReport()
    g = np.zeros((8, 8), np.uint8)
    g[2:4, 2:4] = 1
    r.add(g, g, case="a")
    r.add(np.zeros_like(g), g, case="b")
    assert r.dsc == [1.0, 0.0] and r.hd95_sentinel == [False, True]
    assert r.mean_dsc == 0.5 and r.std_dsc == 0.5
    assert r.mean_hd95 == pytest.approx(np.mean(r.hd95))
    r2 = EvalReport(dsc=[0.25], hd95=[3.0], hd95_sentinel=[False], cases=["c"])
    pooled = EvalReport.over_runs([r, r2])
    assert pooled.run_dsc == [0.5, 0.25]
    assert pooled.mean_dsc == pytest.approx(0.375) and pooled.std_dsc == pytest.approx(0.125)
    assert pooled.to_dict()["cases"] == ["a", "b", "c"]
    assert np.isnan(EvalReport().mean_dsc)
