"""Cross-level comparison of fields on a shared grid."""

from dataclasses import asdict, dataclass

import numpy as np

from ..errors import ValidationError

__all__ = ["ComparisonMetrics", "compare_fields", "MASKED_FRACTION_LIMIT"]

MASKED_FRACTION_LIMIT = 0.4


@dataclass(frozen=True)
class ComparisonMetrics:
    rel_l2: float
    pearson_corr: float
    peak_offset_cells: tuple
    masked_fraction: float
    mass_a: float
    mass_b: float

    @property
    def flagged(self):
        """Too much of the grid is masked for the numbers to mean much."""
        return self.masked_fraction >= MASKED_FRACTION_LIMIT

    def as_dict(self):
        d = asdict(self)
        d["peak_offset_cells"] = list(self.peak_offset_cells)
        d["flagged"] = self.flagged
        return d


def _pearson(x, y):
    x = x - x.mean()
    y = y - y.mean()
    den = np.sqrt(np.sum(x * x) * np.sum(y * y))
    return float(np.sum(x * y) / den) if den > 0 else float("nan")


def compare_fields(a, b, mask=None):
    """Metrics over cells where ``mask`` is 0 (all cells without a mask).

    ``rel_l2 = |a - b| / max(|a|, |b|)``; the peak offset is the absolute
    (p, q) cell distance between the argmax of ``|a|`` and of ``|b|``.
    Masses are cell-area-weighted sums over the unmasked cells.
    """
    if not a.grid.same_as(b.grid):
        raise ValidationError("fields live on different grids")
    keep = np.ones(a.grid.shape, dtype=bool)
    if mask is not None:
        if not mask.grid.same_as(a.grid):
            raise ValidationError("mask lives on a different grid")
        keep = mask.values == 0
    masked_fraction = 1.0 - float(keep.mean())
    if not keep.any():
        raise ValidationError("mask excludes every cell")
    va, vb = a.values[keep], b.values[keep]
    norm = max(np.linalg.norm(va), np.linalg.norm(vb))
    rel = float(np.linalg.norm(va - vb) / norm) if norm > 0 else 0.0
    ia = np.unravel_index(np.argmax(np.where(keep, np.abs(a.values), -1.0)), a.grid.shape)
    ib = np.unravel_index(np.argmax(np.where(keep, np.abs(b.values), -1.0)), b.grid.shape)
    offset = (abs(int(ia[0]) - int(ib[0])), abs(int(ia[1]) - int(ib[1])))
    area = a.grid.cell_area
    return ComparisonMetrics(rel_l2=rel, pearson_corr=_pearson(va, vb), peak_offset_cells=offset,
                             masked_fraction=masked_fraction,
                             mass_a=float(va.sum() * area), mass_b=float(vb.sum() * area))
