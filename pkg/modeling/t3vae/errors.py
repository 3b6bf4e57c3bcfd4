from __future__ import annotations


class T3Error(Exception):
    """Base class; `exit_code` is what the CLI returns when this escapes."""

    exit_code = 1


class ConfigError(T3Error):
    exit_code = 2


class DomainError(T3Error, ValueError):
    exit_code = 2


class ContractError(T3Error, ValueError):
    exit_code = 2


class NumericError(T3Error, ArithmeticError):
    exit_code = 3


class MomentUndefinedError(NumericError):
    pass


class OracleError(NumericError):
    pass


class TrainingDivergenceError(NumericError):
    def __init__(self, message: str, batch_index: int | None = None, epoch: int | None = None):
        where = []
        if epoch is not None:
            where.append(f"epoch {epoch}")
        if batch_index is not None:
            where.append(f"batch {batch_index}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.batch_index = batch_index
        self.epoch = epoch


class DataFormatError(T3Error):
    exit_code = 4

    def __init__(self, path: str, line: int, reason: str):
        super().__init__(f"{path}:{line}: {reason}")
        self.path = path
        self.line = line


class CheckpointError(T3Error):
    exit_code = 4
