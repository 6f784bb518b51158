"""
Exception hierarchy shared by every cachewire module
"""


class CachewireError(Exception):
    """Base class for all cachewire failures"""


class DomainError(CachewireError, ValueError):
    """Model input outside its valid domain (negative durations, budgets above 1, ...)"""


class ContractError(CachewireError):
    """Operation used outside the region it is defined for, or a numerical contract broke"""


class ConfigError(CachewireError):
    """Experiment configuration is missing, inconsistent or unparseable"""


class TraceError(CachewireError):
    """Request stream is malformed, unsorted or empty"""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
