"""Exception hierarchy shared by all sisei modules."""


class SiseiError(Exception):
    """Base class for all errors raised by sisei."""


class OrientationViolation(SiseiError):
    """A deformation gradient with non-positive determinant or stretch."""


class ConcentrationOutOfRange(SiseiError):
    """Normalised concentration outside [0, 1]."""


class PlasticSingularity(SiseiError):
    """Plastic deformation gradient is singular."""


class SpectralFailure(SiseiError):
    """Eigen-decomposition failed or the argument is not positive definite."""


class NonconvexChemistry(SiseiError):
    """The derivative of the chemical potential is not positive."""


class ViscoplasticSolveFailure(SiseiError):
    """The scalar viscoplastic equation could not be bracketed."""


class JacobianNonFinite(SiseiError):
    """Finite-difference Jacobian contains NaN or inf entries."""


class SampleOutOfDomain(SiseiError):
    """Requested sampling radius lies outside the computational domain."""


class QuadraturePointFailure(SiseiError):
    """Constitutive evaluation failed at one or more quadrature points.

    Attributes
    ----------
    domain : str
        ``"particle"`` or ``"sei"``.
    element : int
        Index of the first failing element within its subdomain.
    point : int
        Index of the first failing quadrature point within that element.
    """

    def __init__(self, domain, element, point):
        super().__init__(f"{domain} element {element}, point {point}: non-finite state")
        self.domain = domain
        self.element = element
        self.point = point


class NewtonFailure(SiseiError):
    """Newton iteration did not converge.

    ``reason`` is one of ``"max-iterations"``, ``"non-finite"``,
    ``"backtrack-exhausted"`` or ``"diverging"`` (contraction rate >= 1).
    """

    def __init__(self, reason, iterations=0, detail=""):
        super().__init__(f"Newton failure ({reason}) after {iterations} iterations {detail}".strip())
        self.reason = reason
        self.iterations = iterations
        self.detail = detail


class ConfigError(SiseiError):
    """Invalid scenario configuration; ``field`` holds the dotted path."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
