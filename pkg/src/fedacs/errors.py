"""Exception hierarchy shared by every fedacs module."""


class FedACSError(Exception):
    """Base class for all errors raised by fedacs."""


class ContractViolation(FedACSError, ValueError):
    """Inputs violate an operation's preconditions (shape, range, emptiness)."""


class DegenerateModelError(FedACSError):
    """A model vector has zero norm, so its cosine similarity is undefined."""

    def __init__(self, message, client_id=None):
        super().__init__(message)
        self.client_id = client_id


class DivergenceError(FedACSError):
    """A non-finite loss, gradient or parameter appeared during training."""

    def __init__(self, message, round_index=None, client_id=None):
        if round_index is not None or client_id is not None:
            message = f"{message} (round={round_index}, client={client_id})"
        super().__init__(message)
        self.round_index = round_index
        self.client_id = client_id


class PartitionError(FedACSError):
    """A partitioner could not satisfy its constraints."""


class FormatError(FedACSError):
    """An input file does not conform to the IDX or CSV layout."""

    def __init__(self, message, path=None, offset=None):
        where = []
        if path is not None:
            where.append(str(path))
        if offset is not None:
            where.append(f"byte offset {offset}")
        if where:
            message = f"{message} [{', '.join(where)}]"
        super().__init__(message)
        self.path = path
        self.offset = offset


class OracleError(FedACSError):
    """The finite-difference oracle evaluated a non-finite function value."""


class ConfigError(FedACSError):
    """An experiment configuration failed to parse or validate."""
