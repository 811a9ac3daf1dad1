class ShapeFieldError(Exception):
    """
    Base class for every error raised on purpose by this package.
    `code` is the machine-readable tag printed by the CLI and
    `exit_code` the process status it maps to.
    """

    code = "ERROR"
    exit_code = 1

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message

    def one_line(self) -> str:
        message = " ".join(self.message.split())
        return f"error code={self.code} message={message}"


class ConfigError(ShapeFieldError, ValueError):
    code = "CONFIG_ERROR"
    exit_code = 2


class DataError(ShapeFieldError, ValueError):
    code = "DATA_ERROR"
    exit_code = 3


class NumericError(ShapeFieldError, ArithmeticError):
    code = "NUMERIC_ERROR"
    exit_code = 4
