"""
Toeplitz GOF Errors
===================

Exception hierarchy shared by the library, the CLI and the web service.
"""


class ToeplitzGofError(ValueError):
    """Base class for every error raised by the toeplitz_testing package"""


class InvalidParameterError(ToeplitzGofError):
    """A precondition on sizes, levels or thresholds does not hold"""


class NotPositiveDefiniteError(ToeplitzGofError):
    """A Toeplitz specification does not define a positive definite matrix"""


class ConfigError(ToeplitzGofError):
    """An experiment configuration or command-line input is malformed"""
