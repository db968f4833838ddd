"""Text rendering helpers shared by record serialization, templates, and CSV export."""

from __future__ import annotations


def render_real(value: float) -> str:
    """Shortest decimal that round-trips to the same float.

    Integer-valued reals render without a trailing ``.0`` (86.0 -> "86") so
    templated fixtures stay platform-stable and diff-friendly.
    """
    v = float(value)
    if v.is_integer():
        return str(int(v))
    return repr(v)
