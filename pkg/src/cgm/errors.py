"""Exception types shared across modules."""


class ResourceLimitError(ValueError):
    """Raised before allocating a lattice larger than the configured limit."""


class InstabilityError(ValueError):
    """Raised when a queue's arrival mean does not exceed its service mean."""


def guard_area(width: int, height: int, max_area: float | None) -> None:
    if max_area is not None and width * height > max_area:
        raise ResourceLimitError(
            f"lattice area {width}x{height} = {width * height} exceeds the limit {max_area:g}")
