"""Exception hierarchy.

Three base classes map straight onto CLI exit codes: configuration problems
exit 2, bad or missing data exits 3, numerical failures exit 4. Every
module-level error subclasses one of them so the CLI never has to enumerate
leaf types.
"""


class CompoError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class ConfigError(CompoError):
    """Invalid configuration or parameters (CLI exit code 2)."""

    exit_code = 2


class DataError(CompoError):
    """Missing, malformed, or inconsistent input data (CLI exit code 3)."""

    exit_code = 3


class NumericError(CompoError):
    """Numerical failure: non-finite values, solver breakdown (CLI exit code 4)."""

    exit_code = 4


# vocabulary

class EmptyVocabulary(DataError):
    pass


class DuplicateLabel(DataError):
    def __init__(self, name: str, lines: tuple[int, int]):
        super().__init__(f"duplicate label {name!r} at lines {lines[0]} and {lines[1]}")
        self.name = name
        self.lines = lines


class MalformedLine(DataError):
    def __init__(self, line_no: int, content: str = ""):
        super().__init__(f"malformed line {line_no}: {content!r}")
        self.line_no = line_no


# promptgen / parameters

class InvalidParameter(ConfigError):
    pass


class KTooLarge(ConfigError):
    def __init__(self, k: int, p: int):
        super().__init__(f"k={k} exceeds vocabulary size P={p}")
        self.k = k
        self.p = p


# subset-lookup

class SubsetExplosion(ConfigError):
    def __init__(self, k: int, k_max: int):
        super().__init__(f"k={k} would need 2^{k} subset prompts; limit is k_max={k_max}")
        self.k = k
        self.k_max = k_max


class IndexOutOfRange(ConfigError):
    pass


# scoring-engine

class NumericalError(NumericError):
    pass


class DimensionMismatch(NumericError):
    pass


class KMismatch(ConfigError):
    pass


class IncompleteRun(DataError):
    def __init__(self, missing_pairs):
        pairs = list(missing_pairs)
        shown = ", ".join(f"({p},{i})" for p, i in pairs[:8])
        more = "" if len(pairs) <= 8 else f" and {len(pairs) - 8} more"
        super().__init__(f"missing (prompt, image) pairs: {shown}{more}")
        self.missing_pairs = pairs


class ImageLoadError(DataError):
    def __init__(self, path, reason: str = ""):
        super().__init__(f"cannot load image {path}" + (f": {reason}" if reason else ""))
        self.path = path


# mcid-builder

class InvalidSize(DataError):
    pass


class MissingClassImages(DataError):
    def __init__(self, label: str):
        super().__init__(f"corpus has no images for label {label!r}")
        self.label = label


# distribution-metrics

class InvalidDistribution(NumericError):
    def __init__(self, row: int, total: float):
        super().__init__(f"row {row} sums to {total!r}, not 1")
        self.row = row


class InsufficientSamples(DataError):
    pass


class NotSymmetric(NumericError):
    pass


# analysis

class DegenerateTable(DataError):
    pass


class ProtocolError(DataError):
    pass


# backends

class MockResolutionError(DataError):
    pass


class BundleIncomplete(DataError):
    def __init__(self, missing):
        super().__init__(f"model bundle is missing: {', '.join(sorted(missing))}")
        self.missing = sorted(missing)


class BundleMismatch(DataError):
    pass
