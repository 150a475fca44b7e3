"""Exception hierarchy shared across the toolkit.

Container parsing errors carry a stable short ``code`` so the CLI can emit
machine-parsable one-line failures and distinct exit codes per failure class.
"""


class ResidiffError(Exception):
    """Base class for all toolkit errors."""

    code = "error"
    exit_code = 1


class InvalidRangeError(ResidiffError, ValueError):
    """A numeric argument is outside its documented range."""

    code = "invalid-range"
    exit_code = 2


class ShapeMismatchError(ResidiffError, ValueError):
    """Two latents that must share a shape do not."""

    code = "shape-mismatch"
    exit_code = 2


class StepRangeError(ResidiffError, IndexError):
    """A diffusion step index is outside 1..T or violates step ordering."""

    code = "step-range"
    exit_code = 2


class DenoiserError(ResidiffError):
    """Denoiser misuse: missing oracle entry, wrong kind, bad blob."""

    code = "denoiser"
    exit_code = 2


class DecodeError(ResidiffError):
    """An entropy-coded payload could not be decoded."""

    code = "decode"
    exit_code = 5


class ChecksumError(DecodeError):
    """Embedded checksum does not match the payload."""

    code = "checksum"
    exit_code = 6


class ContainerError(ResidiffError):
    """Base class for bitstream container failures."""

    code = "container"
    exit_code = 3


class BadMagicError(ContainerError):
    code = "bad-magic"
    exit_code = 3


class BadVersionError(ContainerError):
    code = "bad-version"
    exit_code = 4


class TruncatedError(ContainerError):
    code = "truncated"
    exit_code = 7


class CaptionerError(ResidiffError):
    """HTTP captioner transport or status failure (never retried)."""

    code = "captioner"
    exit_code = 8
