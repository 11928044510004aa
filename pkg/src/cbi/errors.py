"""Exception hierarchy. The CLI maps these onto exit codes."""


class CbiError(Exception):
    exit_code = 4


class ConfigError(CbiError):
    """Bad run/profile configuration or CLI arguments."""

    exit_code = 2


class DataError(CbiError):
    """Bad or inconsistent input data."""

    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, *, row=None, field=None):
        self.row = row
        self.field = field
        where = []
        if row is not None:
            where.append(f"row {row}")
        if field is not None:
            where.append(f"field {field!r}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)


class MissingClass(DataError):
    def __init__(self, missing):
        self.missing = sorted(missing)
        super().__init__(f"no training samples for class(es) {self.missing}")


class SingularSystem(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class DuplicateOrderIndex(ConfigError):
    pass


class UnsupportedFormat(DataError):
    pass


class IoError(DataError):
    pass


class SingularTransform(DataError):
    pass


class DegenerateInput(DataError):
    pass
