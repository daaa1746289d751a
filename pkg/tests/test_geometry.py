import pytest
from hypothesis import given, strategies as st

from pyranet3d.geometry import (GeometryError, LayerGeometry, output_shape,
                                receptive_field_range, temporal_maps)


def test_output_shape_reference_values():
    assert output_shape(64, LayerGeometry(r=4, overlap=3)) == 61
    assert output_shape(48, LayerGeometry(r=4, overlap=3)) == 45
    assert output_shape(61, LayerGeometry(r=2, overlap=0)) == 30
    assert output_shape(45, LayerGeometry(r=2, overlap=0)) == 22
    assert output_shape(80, LayerGeometry(r=4, overlap=3)) == 77
    assert output_shape(100, LayerGeometry(r=4, overlap=3)) == 97


@pytest.mark.parametrize("n,o", [(4, 0), (4, 3), (7, 2), (9, 8)])
def test_full_cover_kernel_gives_one(n, o):
    assert output_shape(n, LayerGeometry(r=n, overlap=o)) == 1


def test_temporal_maps():
    geom = LayerGeometry(r=4, overlap=3, depth=3, t_stride=1)
    assert temporal_maps(13, geom) == 11
    assert temporal_maps(11, geom) == 9
    assert temporal_maps(9, geom) == 7
    assert temporal_maps(9, LayerGeometry(r=2, overlap=0, depth=3, t_stride=2)) == 4


def test_too_small_input_raises():
    with pytest.raises(GeometryError):
        output_shape(3, LayerGeometry(r=4, overlap=3))
    with pytest.raises(GeometryError):
        temporal_maps(2, LayerGeometry(r=2, overlap=0, depth=3))


def test_invalid_geometry_rejected():
    with pytest.raises(GeometryError):
        LayerGeometry(r=2, overlap=2)
    with pytest.raises(GeometryError):
        LayerGeometry(r=0, overlap=0)
    with pytest.raises(GeometryError):
        LayerGeometry(r=2, overlap=0, depth=0)


def test_receptive_field_first_window():
    geom = LayerGeometry(r=4, overlap=3, depth=3)
    ranges = receptive_field_range(1, 1, 1, geom, (64, 48, 13))
    assert ranges == ((1, 4), (1, 4), (1, 3))


def test_receptive_field_stride_one_shift():
    geom = LayerGeometry(r=4, overlap=3, depth=3)
    (i_lo, i_hi), _, _ = receptive_field_range(2, 1, 1, geom, (64, 48, 13))
    assert (i_lo, i_hi) == (2, 5)


def test_receptive_field_temporal_shift():
    geom = LayerGeometry(r=4, overlap=3, depth=3)
    _, _, (m_lo, m_hi) = receptive_field_range(1, 1, 5, geom, (64, 48, 13))
    assert (m_lo, m_hi) == (5, 7)


def test_receptive_field_out_of_bounds():
    geom = LayerGeometry(r=4, overlap=3, depth=3)
    with pytest.raises(GeometryError):
        receptive_field_range(62, 1, 1, geom, (64, 48, 13))
    with pytest.raises(GeometryError):
        receptive_field_range(1, 1, 12, geom, (64, 48, 13))


@given(
    r=st.integers(1, 6),
    overlap_frac=st.integers(0, 5),
    extra=st.integers(0, 30),
)
def test_windows_tile_the_input(r, overlap_frac, extra):
    """Union of all windows covers [1, last window end]; consecutive windows
    overlap by exactly O samples."""
    overlap = min(overlap_frac, r - 1)
    geom = LayerGeometry(r=r, overlap=overlap)
    in_dim = r + extra
    n_out = output_shape(in_dim, geom)
    covered = set()
    prev = None
    for u in range(1, n_out + 1):
        (i_lo, i_hi), _, _ = receptive_field_range(u, 1, 1, geom, (in_dim, in_dim, 1))
        window = set(range(i_lo, i_hi + 1))
        if prev is not None:
            assert len(prev & window) == overlap
        covered |= window
        prev = window
    last_end = (n_out - 1) * geom.stride + r
    assert covered == set(range(1, last_end + 1))
    # everything past the last window is smaller than one more stride step
    assert in_dim - last_end < geom.stride


def test_table_configs_chain():
    """Composing output_shape over the reference configs reproduces every
    stage of both preset shape tables."""
    corr = LayerGeometry(r=4, overlap=3, depth=3)
    pool = LayerGeometry(r=2, overlap=0, depth=3)

    def chain(w, h, t):
        stages = []
        for geom in (corr, pool, corr):
            w, h, t = output_shape(w, geom), output_shape(h, geom), temporal_maps(t, geom)
            stages.append((w, h, t))
        return stages

    assert chain(64, 48, 13) == [(61, 45, 11), (30, 22, 9), (27, 19, 7)]
    assert chain(80, 100, 13) == [(77, 97, 11), (38, 48, 9), (35, 45, 7)]
