"""Exception hierarchy. Each class carries a stable ``code`` used by the CLI."""


class PGLPError(Exception):
    code = "error"
    exit_code = 1


class DomainError(PGLPError, ValueError):
    """Invalid argument: out-of-range cell, bad parameter, malformed descriptor."""

    code = "domain-error"


class ConfigError(PGLPError, ValueError):
    code = "config-error"


class NoSensitivityError(PGLPError):
    """The connected component of the queried node has no edges."""

    code = "no-sensitivity"
    exit_code = 2


class ModelInconsistencyError(PGLPError):
    """Beliefs and observations disagree (empty support, truth outside support)."""

    code = "model-inconsistency"
    exit_code = 2


class UnrepairableError(PGLPError):
    code = "unrepairable-policy"
    exit_code = 3
