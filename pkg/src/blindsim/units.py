"""Time base helpers.

Every event timestamp inside the simulator is an integer number of
picoseconds.  Nanosecond-scale pulses and response windows then compare
exactly, sums never accumulate rounding error, and serialized results are
byte-stable.  Public interfaces speak SI seconds; conversion happens once
at the boundary.
"""

from __future__ import annotations

PS_PER_SECOND = 10**12


def to_ps(seconds: float) -> int:
    """Convert seconds to integer picoseconds (round to nearest)."""
    return int(round(seconds * PS_PER_SECOND))


def to_seconds(ps: int) -> float:
    """Convert integer picoseconds back to seconds."""
    return ps / PS_PER_SECOND
