"""Exception hierarchy shared by the library and the CLI exit-code mapping."""


class SoundForestError(Exception):
    """Base class for all package errors."""


class ValidationError(SoundForestError, ValueError):
    """Bad configuration, hyperparameters or arguments (CLI exit code 2)."""


class DataError(SoundForestError, ValueError):
    """Malformed or untranscribable input data (CLI exit code 3)."""


class InventoryError(DataError):
    """Problem in a phoneme inventory file."""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)


class UnknownGraphemeError(DataError):
    """A character or syllable with no mapping rule."""

    def __init__(self, grapheme, position, text):
        self.grapheme = grapheme
        self.position = position
        self.text = text
        super().__init__(
            f"no rule for {grapheme!r} at position {position} in {text!r}"
        )
