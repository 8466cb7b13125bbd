"""Exception hierarchy shared across the toolkit."""


class FgiscanError(Exception):
    """Base class for all toolkit errors."""


# --- corpus ---------------------------------------------------------------

class UnreadableArchive(FgiscanError):
    """Archive is corrupt, truncated, or not in a supported container format."""


class UnknownFormat(FgiscanError):
    """No recognized manifest inside the archive and no parseable filename."""


class ExtractionLimitExceeded(FgiscanError):
    """Decompressed size, file count, or directory depth above the configured caps."""


# --- metadata -------------------------------------------------------------

class NoManifestFound(FgiscanError):
    """Unpacked tree carries no manifest file for the ecosystem."""


class MalformedManifest(FgiscanError):
    """Primary manifest exists but is syntactically unparseable."""


class NetworkError(FgiscanError):
    """Transient network failure, or network use attempted in offline mode."""


class NotFound(FgiscanError):
    """Registry does not know the requested package/version."""


class SchemaError(FgiscanError):
    """Registry response lacks mandatory fields."""


# --- static analysis ------------------------------------------------------

class ParseError(FgiscanError):
    """Source file could not be parsed. Carries line/column of the failure."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        super().__init__(message)
        self.line = line
        self.column = column

    def __str__(self) -> str:  # pragma: no cover - cosmetic
        return f"{self.args[0]} (line {self.line}, column {self.column})"


# --- dynamic trace --------------------------------------------------------

class MissingLog(FgiscanError):
    """Expected trace log file does not exist."""


class RunnerUnavailable(FgiscanError):
    """No sandbox runner command is configured; dynamic extraction disabled."""


class Timeout(FgiscanError):
    """Sandboxed install exceeded its time budget. A partial log may exist."""

    def __init__(self, message: str, log_path=None):
        super().__init__(message)
        self.log_path = log_path


class IsolationViolation(FgiscanError):
    """Sandbox runner reported a breach of its isolation policy."""


# --- analytics ------------------------------------------------------------

class EmptyInput(FgiscanError):
    """Statistic requested over an empty value list."""


class LengthMismatch(FgiscanError):
    """Paired series have unequal or insufficient length."""


class InsufficientData(FgiscanError):
    """Too few samples in a group to compute the requested statistic."""


class EmptyCorpus(FgiscanError):
    """Operation requires at least one package/profile."""


# --- features / classifiers -----------------------------------------------

class MissingModel(FgiscanError):
    """A trained model required by the requested feature mode is absent."""


class TooFewExamples(FgiscanError):
    """Dataset below the minimum size for a train/test split."""


class SingleClassDataset(FgiscanError):
    """Dataset (or split) contains only one label."""


class NonFiniteFeature(FgiscanError):
    """A feature vector contains NaN or infinity."""


class LayoutMismatch(FgiscanError):
    """Feature vector layout differs from the layout a model was trained on."""
