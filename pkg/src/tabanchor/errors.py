"""Exception hierarchy.

Every error carries the process exit code the CLI maps it to, so library
callers and the command line agree on what counts as bad input.
"""

from __future__ import annotations


class TabAnchorError(Exception):
    exit_code = 1


class InputError(TabAnchorError):
    """Bad input data. Optionally names the source file and 1-based line."""

    exit_code = 2

    def __init__(self, message, source=None, line=None):
        self.message = message
        self.source = source
        self.line = line
        super().__init__(self._format())

    def _format(self):
        where = ""
        if self.source is not None:
            where = str(self.source)
            if self.line is not None:
                where += f":{self.line}"
            where += ": "
        elif self.line is not None:
            where = f"line {self.line}: "
        return f"{where}{self.message}"

    def located(self, source=None, line=None):
        """Return a copy with location filled in where it is still missing."""
        err = type(self).__new__(type(self))
        err.__dict__.update(self.__dict__)
        if err.source is None:
            err.source = source
        if err.line is None:
            err.line = line
        Exception.__init__(err, err._format())
        return err


class MalformedXml(InputError):
    pass


class MissingField(InputError):
    pass


class UnknownClass(InputError):
    def __init__(self, name, source=None, line=None):
        self.name = name
        super().__init__(f"unknown object class {name!r} (expected 'row' or 'column')", source, line)


class InvertedBox(InputError):
    pass


class MalformedJson(InputError):
    pass


class DuplicatePageId(InputError):
    pass


class ScoreOutOfRange(InputError):
    pass


class ImageIoError(InputError):
    pass


class UnsupportedFormat(InputError):
    pass


class PageMismatch(InputError):
    pass


class UnknownPageId(InputError):
    pass


class LayoutOverflow(InputError):
    pass


class ConfigError(InputError):
    pass


class KTooLarge(InputError):
    pass


class EmptySampleSet(TabAnchorError):
    exit_code = 3


class ThresholdNotMet(TabAnchorError):
    exit_code = 4
