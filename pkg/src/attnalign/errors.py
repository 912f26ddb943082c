"""Exception taxonomy shared across the toolkit."""


class AttnAlignError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(AttnAlignError, ValueError):
    """Array dimensions do not satisfy an operation's contract."""


class InvalidMaskError(AttnAlignError, ValueError):
    """A boolean mask leaves no position to normalize over."""


class ContractError(AttnAlignError, ValueError):
    """An operation precondition was violated."""


class ConfigError(AttnAlignError, ValueError):
    """A configuration value is out of its legal range."""


class ParseError(AttnAlignError, ValueError):
    """An input file is malformed; carries the offending line number."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}:"
        if line is not None:
            loc += f"{line}: "
        elif loc:
            loc += " "
        super().__init__(loc + message)
        self.path = path
        self.line = line


class ConsistencyError(AttnAlignError, ValueError):
    """Two inputs that must describe the same sentences disagree."""


class DegenerateInputError(AttnAlignError, ValueError):
    """The requested statistic is undefined for this input."""


class TrainingDivergedError(AttnAlignError, RuntimeError):
    """Training produced a non-finite loss; carries epoch/batch indices."""

    def __init__(self, message, epoch=None, batch=None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch
