"""
Exception hierarchy shared by every service; exit codes are read by the CLI
"""

from typing import Optional


class CTRForgeError(Exception):
    """Base error for the toolkit"""
    exit_code: int = 1


class ConfigError(CTRForgeError):
    """Invalid or missing configuration"""
    exit_code = 2


class DataError(CTRForgeError):
    """Unusable input data"""
    exit_code = 3


class NumericError(CTRForgeError):
    """Non-finite values during training or inference"""
    exit_code = 4

    def __init__(self, message: str, epoch: Optional[int] = None, batch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch
        self.batch = batch


class ContractViolation(CTRForgeError, ValueError):
    """A caller broke a documented precondition"""
    exit_code = 1


class EncodeError(DataError):
    """A raw row lacks a field declared in the schema"""

    def __init__(self, field: str):
        super().__init__(f"Missing value for schema field '{field}'")
        self.field = field


class UndefinedAUCError(DataError):
    """AUC requested on labels of a single class"""


class CheckpointError(DataError):
    """Unreadable or corrupt checkpoint"""


class CheckpointVersionError(CheckpointError):
    def __init__(self, found: int, expected: int):
        super().__init__(f"Checkpoint format version {found} is not supported (expected {expected})")
        self.found = found
        self.expected = expected


class FingerprintMismatchError(CheckpointError):
    def __init__(self, checkpoint_fp: str, data_fp: str):
        super().__init__(
            f"Schema fingerprint mismatch: checkpoint={checkpoint_fp} data={data_fp}"
        )
        self.checkpoint_fp = checkpoint_fp
        self.data_fp = data_fp
