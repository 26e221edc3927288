"""Exception types shared across the toolkit.

The CLI maps ValidationError (and argparse failures) to exit code 2 and
anything else to exit code 1.
"""


class EbssaError(Exception):
    """Base class for all toolkit errors."""


class ParseError(EbssaError):
    """A malformed record in an input file.

    ``record`` is the 0-based record index (header excluded) when known.
    """

    def __init__(self, message, record=None, path=None):
        self.record = record
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}: "
        if record is not None:
            where += f"record {record}: "
        super().__init__(where + message)


class InvalidPolarity(ParseError):
    """On-disk polarity outside {0, 1}."""


class ValidationError(EbssaError):
    """Inputs that parse but violate a contract (bounds, ordering, config)."""
