"""Exception hierarchy shared across the package.

Every error carries a short machine-parsable ``code`` so the CLI can emit
single-line diagnostics (``error code=<code> msg=...``).
"""


class ChromaflowError(Exception):
    code = "internal"


class ContractError(ChromaflowError):
    """An operation was called with arguments violating its preconditions."""

    code = "contract"


class ConfigError(ChromaflowError):
    """Invalid configuration value or unknown configuration key."""

    code = "config"


class FormatError(ChromaflowError):
    """Malformed on-disk artifact (.flo file, histogram grid, report...)."""

    code = "format"


class DataError(ChromaflowError):
    """Frame ingestion failure (unreadable or missing files)."""

    code = "data"


class UsageError(ChromaflowError):
    """Command-line level misuse (missing flags, mismatched inputs)."""

    code = "usage"


class DivergenceError(ChromaflowError):
    """Training produced non-finite losses."""

    code = "diverged"
