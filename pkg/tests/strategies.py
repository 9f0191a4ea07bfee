"""Shared hypothesis strategies."""

from hypothesis import strategies as st

from tubetrack.geometry import BBox

coord = st.floats(-0.5, 1.5, allow_nan=False, allow_infinity=False)
size = st.floats(1e-3, 1.0, allow_nan=False, allow_infinity=False)
unit = st.floats(0.0, 1.0, allow_nan=False, allow_infinity=False)


@st.composite
def boxes(draw):
    return BBox(draw(coord), draw(coord), draw(size), draw(size))
