"""Error taxonomy shared by the library, the service, and the CLI.

Each error carries a stable ``kind`` string so the service can report it in a
structured payload and the CLI can map it to a process exit code without
string-matching messages.
"""

from __future__ import annotations

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_INPUT = 2
EXIT_DIVERGENCE = 3
EXIT_CHECKSUM = 4
EXIT_INSUFFICIENT = 5


class PipelineError(Exception):
    """Base class for all expected failure modes."""

    kind = "error"
    exit_code = EXIT_FAILURE


class InputError(PipelineError):
    """Malformed file, bad argument, unknown id, inconsistent shapes."""

    kind = "input_error"
    exit_code = EXIT_INPUT


class FormatError(InputError):
    """A file does not conform to its declared binary or JSON layout."""

    kind = "format_error"


class DegenerateInputError(InputError):
    """An input is structurally valid but empty or otherwise unusable."""

    kind = "degenerate_input"


class DivergenceError(PipelineError):
    """Training produced a non-finite loss."""

    kind = "divergence"
    exit_code = EXIT_DIVERGENCE

    def __init__(self, message: str, epoch: int | None = None):
        super().__init__(message)
        self.epoch = epoch


class ChecksumMismatchError(PipelineError):
    """An artifact was built against different data or a different model."""

    kind = "checksum_mismatch"
    exit_code = EXIT_CHECKSUM


class InsufficientDataError(PipelineError):
    """Not enough instances to carry out the requested computation."""

    kind = "insufficient_data"
    exit_code = EXIT_INSUFFICIENT


class DegenerateSampleError(PipelineError):
    """A statistic is undefined for the given sample (e.g. zero variance
    with unequal means)."""

    kind = "degenerate_sample"
    exit_code = EXIT_FAILURE
