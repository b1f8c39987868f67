"""Exception hierarchy shared by every layer of the package."""


class CipherloopError(Exception):
    """Base class for all package errors."""


class NotInvertible(CipherloopError, ValueError):
    pass


class MessageOutOfRange(CipherloopError, ValueError):
    pass


class KeyMismatch(CipherloopError, ValueError):
    """Ciphertexts or keys from different key pairs were combined."""


class DepthExceeded(CipherloopError):
    """A LabHE multiplication was requested on an already-multiplied ciphertext."""


class LabelMismatch(CipherloopError, ValueError):
    pass


class LabelReuse(CipherloopError):
    """The same (user key, label) pair was used for two encryptions."""


class Overflow(CipherloopError, ArithmeticError):
    pass


class BudgetExceeded(CipherloopError, ValueError):
    """Fixed-point or blinding widths do not fit the plaintext modulus."""


class BlindingOverflow(BudgetExceeded):
    pass


class ProtocolOrderViolation(CipherloopError):
    pass


class BitWidthMismatch(CipherloopError, ValueError):
    pass


class DimensionMismatch(CipherloopError, ValueError):
    pass


class NonPsd(CipherloopError, ValueError):
    pass


class ConfigInvalid(CipherloopError, ValueError):
    pass


class DecodeError(CipherloopError, ValueError):
    """Malformed bytes on the wire."""
