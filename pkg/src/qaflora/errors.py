"""Exception hierarchy."""


class QAFloraError(Exception):
    """Base class for every error raised by this package."""

    code = "error"


class ShapeError(QAFloraError, ValueError):
    code = "shape"


class NumericError(QAFloraError, ValueError):
    code = "numeric"


class DegenerateVectorError(NumericError):
    code = "degenerate_vector"


class ContractError(QAFloraError, ValueError):
    code = "contract"


class CapacityError(QAFloraError):
    code = "capacity"


class VocabularyError(QAFloraError, ValueError):
    code = "vocabulary"


class AdapterBindingError(QAFloraError):
    """Raised when adapter targets do not resolve against a model.

    ``problems`` maps each offending target name to a description.
    """

    code = "adapter_binding"

    def __init__(self, problems):
        self.problems = dict(problems)
        detail = "; ".join(f"{t}: {msg}" for t, msg in self.problems.items())
        super().__init__(f"adapter binding failed for {len(self.problems)} target(s): {detail}")


class InputError(QAFloraError, ValueError):
    code = "input"


class FormatError(QAFloraError):
    """Malformed container or export file; ``field`` names the offending field."""

    code = "format"

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")
