"""Exception types shared across the package."""


class HNDecodeError(Exception):
    """Base class for all package errors."""


# -- distribution handling ---------------------------------------------------

class EmptyDistribution(HNDecodeError):
    """A token distribution was built from zero entries."""


class MassExceedsOne(HNDecodeError):
    """Probabilities of the reported entries sum to more than one."""


# -- backends ----------------------------------------------------------------

class BackendUnavailable(HNDecodeError):
    """The model backend could not serve a request (retries exhausted)."""


class ContextOverflow(HNDecodeError):
    """The prompt exceeded the backend's context limit."""


class NoAlternative(HNDecodeError):
    """The distribution has a single outcome and it is the excluded token."""


class ReplayUnsupported(HNDecodeError):
    """The backend cannot produce teacher-forced distributions."""


class TreeTooLarge(HNDecodeError):
    """Exhaustive rollout enumeration exceeded the configured node cap."""


# -- search engine -----------------------------------------------------------

class PoolEmpty(HNDecodeError):
    """A draw was attempted on an empty job pool."""


# -- verification ------------------------------------------------------------

class NoBoundaries(HNDecodeError):
    """A rollout closed no think block, so boundary statistics are undefined."""


class NoAnswerFound(HNDecodeError):
    """No parsable number on the final answer line."""


# -- harness and CLI ---------------------------------------------------------

class ParseError(HNDecodeError):
    """A data or model file failed to parse; carries the offending line."""

    def __init__(self, message: str, *, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:" if line is None else f"{path}:{line}: "
        super().__init__(f"{where}{message}")


class DuplicateId(HNDecodeError):
    """Two dataset records share an id."""


class ConfigError(HNDecodeError):
    """An engine config file is malformed or violates an invariant."""


class IoError(HNDecodeError):
    """A report or trace file could not be read or written."""
