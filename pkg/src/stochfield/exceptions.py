"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the CLI can map it
to an exit status and a JSON error record.
"""


class FieldError(Exception):
    """Base class for all library errors."""

    code = "field-error"
    exit_status = 4

    def __init__(self, message, path=None):
        super().__init__(message)
        self.message = message
        self.path = path

    def to_dict(self):
        out = {"code": self.code, "message": self.message}
        if self.path is not None:
            out["path"] = self.path
        return out


class InvalidSpaceError(FieldError):
    code = "invalid-space"


class ShapeError(FieldError):
    code = "shape-mismatch"


class DomainError(FieldError):
    """Input outside the operator's domain, e.g. a vector that is not sum-zero."""

    code = "domain-error"


class SingularSolveError(FieldError):
    """A linear solve that requires ergodicity or nonsingularity failed."""

    code = "singular-solve"


class NotErgodicError(SingularSolveError):
    code = "not-ergodic"


class ConstraintError(FieldError):
    """A structural constraint (generator sign pattern, zero diagonal, ...) is violated."""

    code = "constraint-violation"


class TopologyError(FieldError):
    code = "invalid-topology"


class PreconditionError(FieldError):
    code = "precondition"


class StepError(FieldError):
    """Finite-difference step would leave the feasible rate region."""

    code = "step-error"


class UnsupportedError(FieldError):
    code = "unsupported"


class SpecError(FieldError):
    """Field-spec file failed to parse or validate."""

    code = "spec-error"
    exit_status = 3


class SpecParseError(SpecError):
    code = "spec-parse-error"
