"""Exception hierarchy. The CLI maps each family to an exit code."""


class EvogecError(Exception):
    exit_code = 1


class ConfigError(EvogecError):
    exit_code = 2


class DataError(EvogecError):
    exit_code = 3


class MissingReferenceError(DataError):
    """Raised when a scoring operation meets an utterance without a reference."""


class ProviderError(EvogecError):
    """An LLM provider failed to produce a usable completion."""

    exit_code = 4
    retryable = False


class TransientProviderError(ProviderError):
    retryable = True


class NetworkError(TransientProviderError):
    pass


class RateLimitError(TransientProviderError):
    pass


class RefusalError(ProviderError):
    """The model refused or returned empty text. Never retried."""


class UnscriptedRequestError(ProviderError):
    pass


class CacheError(ConfigError):
    pass


class CheckpointError(ConfigError):
    pass


class ConfigMismatchError(CheckpointError):
    pass
