"""Exception types raised by voxshift. The runner reports the class name of any of these."""


class VoxShiftError(Exception):
    """Base class for every failure voxshift reports to the user."""


class WorldFormatError(VoxShiftError, ValueError):
    """A voxgrid file does not conform to the format."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class ConfigError(VoxShiftError, ValueError):
    """Invalid run configuration or classification file."""


class EmptyInputError(VoxShiftError, ValueError):
    """An operation that needs at least one record received none."""


class NonFiniteInputError(VoxShiftError, ValueError):
    """A NaN or infinite value reached a numeric operation."""

    def __init__(self, message: str, index: int | tuple[int, ...]) -> None:
        super().__init__(f"{message} (at index {index})")
        self.index = index


class PairingError(VoxShiftError):
    """No base location could be paired with the generated world."""
