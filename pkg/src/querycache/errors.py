"""Exception hierarchy shared across the package."""


class QueryCacheError(Exception):
    """Base class for all errors raised by querycache."""


class ConfigurationError(QueryCacheError, ValueError):
    """A configuration value violates a documented invariant."""


class PreconditionError(QueryCacheError, ValueError):
    """An operation was called with inputs outside its contract."""


class DegenerateInputError(QueryCacheError, ValueError):
    """Numerically degenerate input, e.g. a fully masked attention row."""


class NotFoundError(QueryCacheError, KeyError):
    """A block id was requested that the store has never admitted."""


class InternalError(QueryCacheError, RuntimeError):
    """An internal contract between components was violated."""


class GenerationError(QueryCacheError, RuntimeError):
    """A synthetic workload could not be generated as requested."""
