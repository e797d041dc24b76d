"""Exception types shared across the package."""


class BlockStructureError(ValueError):
    """Operator/vector block metadata is inconsistent."""


class SingularBlockError(ValueError):
    """A diagonal block that must be positive definite is (numerically) singular."""

    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or "diagonal block %d is singular or not positive definite" % index)


class IndefiniteOperatorError(ValueError):
    """An operator declared PSD produced a significantly negative quadratic form."""


class UnsupportedMetricError(ValueError):
    """A proximal step was requested with a metric the function cannot handle in closed form."""


class InnerSolverContractError(RuntimeError):
    """An inner solver returned a certificate that violates its declared tolerance."""


class CertificateError(RuntimeError):
    """A recorded subgradient certificate violates its theoretical bound."""


class DivergenceError(RuntimeError):
    """The outer iteration residual blew up."""

    def __init__(self, message, state=None):
        self.state = state
        super().__init__(message)
