"""Exception types raised across the package."""


class TransitMCSError(Exception):
    """Base class for all package errors."""


class DegenerateSegmentError(TransitMCSError, ValueError):
    """A zero-length segment was used where a direction or line is required."""


class InvalidSegmentError(TransitMCSError, ValueError):
    """A segment whose end time does not follow its start time."""


class InvalidCoordinateError(TransitMCSError, ValueError):
    """A coordinate that is not finite or lies outside the lat/lon ranges."""


class MalformedTrajectoryError(TransitMCSError, ValueError):
    def __init__(self, sensor_id, index, message="timestamps must be strictly increasing"):
        self.sensor_id = sensor_id
        self.index = index
        super().__init__(f"sensor {sensor_id!r}, point {index}: {message}")


class EmptyClusterError(TransitMCSError, ValueError):
    """A cluster center was requested for an empty member set."""


class NoEstimateError(TransitMCSError, ValueError):
    """No cluster center is available to estimate a vehicle position."""


class ScheduleError(TransitMCSError, ValueError):
    """Validation failure in transit topology or schedule data.

    ``line`` is the 1-based line number in the source file when known.
    """

    def __init__(self, message, line=None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


class FormatError(TransitMCSError, ValueError):
    """A malformed row or record in one of the file formats."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class SlotMismatchError(TransitMCSError, ValueError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"slots missing from clusters file: {self.missing}")
