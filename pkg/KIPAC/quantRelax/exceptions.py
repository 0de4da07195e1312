"""Exceptions raised by quantRelax"""


class QuantRelaxError(Exception):
    """Base class for all errors raised by this package"""


class InvalidInputError(QuantRelaxError, ValueError):
    """An input vector, matrix or parameter is not acceptable"""


class ConfigurationError(QuantRelaxError, ValueError):
    """A scheme or run configuration failed validation

    All of the validation messages are kept in `self.errors`
    """
    def __init__(self, errors):
        """C'tor

        Parameters
        ----------
        errors : `list` or `str`
            The validation messages
        """
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        QuantRelaxError.__init__(self, "; ".join(self.errors))


class OracleSizeError(QuantRelaxError):
    """An exhaustive enumeration would exceed its size bound"""


class ContractError(QuantRelaxError):
    """A diagnostic was called outside of its precondition"""


class DatasetError(QuantRelaxError):
    """A dataset, vector or checkpoint file could not be parsed"""
    def __init__(self, message, path=None, line=None):
        """C'tor

        Parameters
        ----------
        message : `str`
            What went wrong
        path : `str`
            The offending file
        line : `int`
            1-based line number (or token position), if known
        """
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += "%s" % path
        if line is not None:
            where += ":%i" % line if where else "line %i" % line
        QuantRelaxError.__init__(self, "%s: %s" % (where, message) if where else message)


class TrainingAborted(QuantRelaxError):
    """A training run hit a non-finite gradient or loss

    The metrics recorded before the failure are kept in `self.records`
    """
    def __init__(self, message, iteration, records=None):
        """C'tor

        Parameters
        ----------
        message : `str`
            What went wrong
        iteration : `int`
            The offending iteration k
        records : `list`
            `MetricsRecord` objects recorded before the abort
        """
        self.iteration = iteration
        self.records = list(records) if records is not None else []
        QuantRelaxError.__init__(self, "iteration %i: %s" % (iteration, message))
