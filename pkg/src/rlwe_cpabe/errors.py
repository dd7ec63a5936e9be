"""Exception hierarchy shared by every module of the package."""


class AbeError(Exception):
    """Base class for all errors raised by rlwe_cpabe."""


class ConfigurationError(AbeError, ValueError):
    """Invalid or mismatched parameters."""


class NotInvertible(AbeError, ArithmeticError):
    """Ring element has no inverse under the requested convention."""


class SetupFailure(AbeError):
    """Setup could not find invertible elements within the retry budget."""


class PolicySyntaxError(AbeError, ValueError):
    """Malformed policy text. Carries 1-based line and column."""

    def __init__(self, message, line, column):
        super().__init__(f"{message} at line {line}, column {column}")
        self.line = line
        self.column = column


class PolicyError(AbeError, ValueError):
    """Structurally invalid access tree (threshold, attribute range)."""


class CombineAborted(AbeError):
    """The supplied shares do not satisfy the access tree."""


class NotAuthorized(AbeError):
    """The key's attributes do not satisfy the ciphertext policy."""


class DecryptionFailed(AbeError):
    """Decryption self-check detected an out-of-range residual."""


class DecodeError(AbeError, ValueError):
    """Malformed binary envelope. ``offset`` points at the offending byte."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset
