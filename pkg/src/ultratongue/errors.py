"""Exception hierarchy.

Every error carries a short ``category`` string; the CLI prints it as the
first token of its one-line failure message.
"""


class UltraTongueError(Exception):
    category = "error"


class FormatError(UltraTongueError, ValueError):
    category = "format"


class CorruptionError(UltraTongueError, ValueError):
    category = "corruption"


class PairingError(UltraTongueError, ValueError):
    category = "pairing"


class ValidationError(UltraTongueError, ValueError):
    category = "validation"


class SizeError(UltraTongueError, ValueError):
    category = "size"


class ContractError(UltraTongueError, ValueError):
    category = "contract"


class InputError(UltraTongueError, ValueError):
    category = "input"


class NumericError(UltraTongueError, ArithmeticError):
    category = "numeric"


class TrainingError(UltraTongueError, RuntimeError):
    category = "training"

    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class FrameIndexError(UltraTongueError, IndexError):
    category = "index"


class ConfigError(UltraTongueError, ValueError):
    category = "config"
