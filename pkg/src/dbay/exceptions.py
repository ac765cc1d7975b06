"""Exception hierarchy shared by the solver modules."""


class DBayError(Exception):
    """Base class for all solver errors."""


class InvalidInstance(DBayError, ValueError):
    pass


class DisconnectedGraph(DBayError):
    """The constraint graph splits into independent components.

    Solve each component separately (see ``dbay.dcop.build_pseudo_forest``).
    """

    def __init__(self, components):
        self.components = components
        super().__init__(f"constraint graph has {len(components)} components: {components}")


class ScopeNotOnBranch(DBayError):
    pass


class IncompleteAssignment(DBayError, ValueError):
    pass


class DuplicateInput(DBayError, ValueError):
    pass


class OutOfDomain(DBayError, ValueError):
    pass


class InsufficientObservations(DBayError, ValueError):
    pass


class SingularGramian(DBayError, ValueError):
    pass


class ZeroLipschitz(DBayError, ValueError):
    pass


class LipschitzViolated(DBayError):
    pass


class ConvergedFlat(DBayError):
    """Expected improvement vanishes on the whole domain."""


class BudgetExhausted(DBayError):
    pass


class MissingAncestorSample(DBayError, KeyError):
    pass


class UnknownParentSample(DBayError, KeyError):
    pass


class ChildTimeout(DBayError):
    pass


class UnknownRecipient(DBayError, KeyError):
    pass


class CapExceeded(DBayError):
    pass


class GridMismatch(DBayError, ValueError):
    pass


class SeparatorTooLarge(DBayError):
    pass


class ZeroReference(DBayError, ZeroDivisionError):
    pass


class AgentError(DBayError):
    """Wraps an error raised inside an agent handler with the agent id."""

    def __init__(self, agent, module, cause):
        self.agent = agent
        self.module = module
        self.cause = cause
        super().__init__(f"[{module}] agent {agent}: {type(cause).__name__}: {cause}")


class InvalidEnvelope(DBayError, ValueError):
    """Message that cannot travel along a tree edge (for example a self-send)."""
