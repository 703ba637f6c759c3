"""Exception hierarchy shared across the package."""


class HybridLPFError(Exception):
    """Base class for all package errors."""


class FeederError(HybridLPFError):
    """Malformed feeder description (topology, phases, file schema)."""


class SingularSystem(HybridLPFError):
    """The load-node admittance block cannot be inverted."""


class NonConvergence(HybridLPFError):
    """The fixed-point power-flow iteration failed.

    ``sample_index`` is set when the failure happened while generating a
    specific operating sample.
    """

    def __init__(self, message, iterations=None, sample_index=None):
        super().__init__(message)
        self.iterations = iterations
        self.sample_index = sample_index


class UnidentifiableAnchors(HybridLPFError):
    """Anchor voltages coincide, so the blend coefficients cannot be learned."""


class TrainingError(HybridLPFError):
    """Coefficient fitting failed (unidentifiable element, IRLS stall)."""


class InfeasibleError(HybridLPFError):
    """A linear system of inequalities has no feasible point."""


class BudgetExceeded(HybridLPFError):
    """Fourier-Motzkin elimination was asked to handle too many variables."""
