"""Exception hierarchy. Every library error derives from CalibError."""


class CalibError(Exception):
    pass


class EmptyScene(CalibError):
    pass


class InsufficientBoxes(CalibError):
    pass


class DimensionMismatch(CalibError):
    pass


class NoMatches(CalibError):
    pass


class DegenerateGeometry(CalibError):
    pass


class InvalidStatus(CalibError):
    pass


class MissingGroundTruth(CalibError):
    pass


class EmptyDataset(CalibError):
    pass


class ParseError(CalibError):
    pass


class SchemaError(ParseError):
    pass


class NotRigid(CalibError):
    pass


class PlacementFailure(CalibError):
    pass


class IoError(CalibError):
    pass
