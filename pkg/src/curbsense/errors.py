"""Exception types shared across the package."""


class DataError(Exception):
    """Malformed or inconsistent input data (CLI exit code 2)."""


class FormatError(DataError):
    """Parse failure in a line-oriented input file."""

    def __init__(self, path, line_no, message):
        super().__init__(f"{path}:{line_no}: {message}")
        self.path = str(path)
        self.line_no = line_no
