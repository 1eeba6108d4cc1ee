"""Projection-profile zone segmentation for headline (Matra) scripts."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ZONED_SCRIPTS = ("Bangla", "Devanagari")


@dataclass(frozen=True)
class ZoneBoundaries:
    matra_row: int
    band_end: int
    lower_boundary_row: int


@dataclass
class ZonedLine:
    upper: np.ndarray
    middle: np.ndarray
    lower: np.ndarray
    boundaries: ZoneBoundaries

    @property
    def middle_rows(self):
        return self.boundaries.band_end + 1, self.boundaries.band_end + 1 + self.middle.shape[0]


def horizontal_projection(mask):
    """Foreground pixel count per row."""
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2 or m.size == 0:
        raise ValueError("empty line")
    return m.sum(axis=1)


def segment_zones(mask, script, alpha=0.2, band=0.8):
    """Split a binary line into upper / middle / lower zones.

    The headline is the row of maximum projection (topmost on ties) and its
    band is the contiguous run of rows at or above ``band`` times the peak.
    The upper zone runs down to the band's last row, the lower boundary is the
    lowest row whose count reaches ``alpha`` times the peak, and the middle
    zone fills the rows in between.
    """
    if script not in ZONED_SCRIPTS:
        raise ValueError(f"zone segmentation not applicable to script {script!r}")
    m = np.asarray(mask, dtype=bool)
    prof = horizontal_projection(m)
    peak = prof.max()
    if peak == 0:
        raise ValueError("empty line")
    H = m.shape[0]
    matra = int(np.argmax(prof))
    end = matra
    while end + 1 < H and prof[end + 1] >= band * peak:
        end += 1
    strong = np.nonzero(prof >= alpha * peak)[0]
    lower = int(strong.max())
    if lower <= end:
        lower = H - 1
    if end >= H - 1:
        end = H - 2 if H > 1 else 0
        lower = H - 1
    b = ZoneBoundaries(matra, end, lower)
    return ZonedLine(m[:end + 1], m[end + 1:lower + 1], m[lower + 1:], b)
