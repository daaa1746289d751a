"""Layer geometry: receptive fields, strides, and output shapes.

Index conventions
-----------------
The layer equations in this package are written 1-based (output neuron
``(u, v, z)`` reads input rows ``(u-1)*g+1 .. (u-1)*g+r``).  Arrays are
stored 0-based; the mapping is ``i0 = i1 - 1`` throughout, i.e. output
``u0`` reads rows ``u0*g .. u0*g + r - 1``.  Helpers that mirror the
1-based formulas (``receptive_field_range``) say so explicitly.

A spatial receptive field is an ``r x r`` window; adjacent windows share
``overlap`` rows/columns, so the stride is ``g = r - overlap``.  The
temporal window spans ``depth`` consecutive maps and advances ``t_stride``
maps per output map.
"""

from __future__ import annotations

from dataclasses import dataclass

__all__ = [
    "GeometryError",
    "LayerGeometry",
    "output_shape",
    "temporal_maps",
    "receptive_field_range",
]


class GeometryError(ValueError):
    """A receptive field does not fit the tensor it is applied to."""


@dataclass(frozen=True)
class LayerGeometry:
    """Receptive field size ``r``, spatial ``overlap``, temporal ``depth``
    and temporal stride ``t_stride`` of one layer."""

    r: int
    overlap: int = 0
    depth: int = 1
    t_stride: int = 1

    def __post_init__(self):
        if self.r < 1:
            raise GeometryError(f"receptive field must be >= 1, got {self.r}")
        if not 0 <= self.overlap < self.r:
            raise GeometryError(
                f"overlap must satisfy 0 <= overlap < r, got overlap={self.overlap}, r={self.r}"
            )
        if self.depth < 1:
            raise GeometryError(f"temporal depth must be >= 1, got {self.depth}")
        if self.t_stride < 1:
            raise GeometryError(f"temporal stride must be >= 1, got {self.t_stride}")

    @property
    def stride(self) -> int:
        """Spatial stride ``g = r - overlap`` (always >= 1)."""
        return self.r - self.overlap


def output_shape(in_dim: int, geom: LayerGeometry) -> int:
    """Number of output neurons along one spatial axis.

    ``floor((in_dim - r) / g) + 1``; raises :class:`GeometryError` when the
    window does not fit.
    """
    if in_dim < geom.r:
        raise GeometryError(
            f"input extent {in_dim} smaller than receptive field {geom.r}"
        )
    return (in_dim - geom.r) // geom.stride + 1


def temporal_maps(in_maps: int, geom: LayerGeometry) -> int:
    """Number of output maps: ``floor((in_maps - depth) / t_stride) + 1``."""
    if in_maps < geom.depth:
        raise GeometryError(
            f"{in_maps} input maps smaller than temporal depth {geom.depth}"
        )
    return (in_maps - geom.depth) // geom.t_stride + 1


def receptive_field_range(
    u: int, v: int, z: int, geom: LayerGeometry, in_shape: tuple[int, int, int]
):
    """1-based inclusive index ranges read by output neuron ``(u, v, z)``.

    ``in_shape`` is ``(rows, cols, maps)`` of the input tensor.  Returns
    ``((i_lo, i_hi), (j_lo, j_hi), (m_lo, m_hi))``.
    """
    rows, cols, maps = in_shape
    h_out = output_shape(rows, geom)
    w_out = output_shape(cols, geom)
    m_out = temporal_maps(maps, geom)
    if not (1 <= u <= h_out and 1 <= v <= w_out and 1 <= z <= m_out):
        raise GeometryError(
            f"output index (u={u}, v={v}, z={z}) outside {h_out}x{w_out}x{m_out}"
        )
    g = geom.stride
    i_lo = (u - 1) * g + 1
    j_lo = (v - 1) * g + 1
    m_lo = 1 + (z - 1) * geom.t_stride
    return (
        (i_lo, i_lo + geom.r - 1),
        (j_lo, j_lo + geom.r - 1),
        (m_lo, m_lo + geom.depth - 1),
    )
