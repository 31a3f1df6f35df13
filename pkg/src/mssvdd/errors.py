"""Exception types raised by the toolkit."""


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class DataError(ToolkitError):
    """Invalid dataset contents, shapes, or labels."""


class KernelError(ToolkitError):
    """Kernel evaluation or embedding failure (e.g. degenerate spectrum)."""


class SolverError(ToolkitError):
    """Infeasible or failed dual optimization."""


class ConfigError(ToolkitError):
    """Inconsistent training or experiment configuration."""


class PersistenceError(ToolkitError):
    """Model or report file cannot be read or written."""
