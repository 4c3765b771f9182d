"""Exception hierarchy.  Every error raised on purpose derives from OteError."""


class OteError(Exception):
    pass


class ConstraintViolation(OteError, ValueError):
    """A structural constraint on the atoms failed (ladder rule, resonance)."""


class DomainError(OteError, ValueError):
    """An argument lies outside the domain of a formula."""


class UnphysicalAlpha(OteError, ValueError):
    """A field response would produce non-real or negative local rates."""


class NonHermitianNonlocal(OteError):
    """The non-local rates carry an imaginary part; no Gibbs kernel exists."""


class DegenerateSteadyState(OteError):
    pass


class SolverFailure(OteError):
    pass


class StepTooLarge(OteError, ValueError):
    pass


class FormMismatch(OteError):
    """Closed-form and trace-form evaluations of a flux disagree."""


class KernelUnavailable(OteError):
    pass


class AuditFailure(OteError):
    pass


class NotRefrigerating(OteError):
    pass


class CarnotUnavailable(OteError):
    """The Carnot bound was not derived for this operating point."""


class OrderingViolation(CarnotUnavailable):
    pass


class NonlocalFluxSign(CarnotUnavailable):
    """The bound is only derived for a negative non-local heat current."""


class NoRefrigerationWindow(OteError):
    pass


class ConfigError(OteError):
    pass
