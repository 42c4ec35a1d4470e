"""Exception hierarchy shared by every adaptsim module."""


class AdaptSimError(Exception):
    """Base class for all adaptsim errors."""


class DuplicateNode(AdaptSimError):
    pass


class UnknownNode(AdaptSimError):
    pass


class WrongLevel(AdaptSimError):
    """A transformation received a graph at the wrong abstraction level."""


class OutOfDomain(AdaptSimError):
    pass


class InvalidProfile(AdaptSimError):
    pass


class MissingContext(AdaptSimError):
    pass


class InvalidParam(AdaptSimError):
    pass


class EmptyTrace(AdaptSimError):
    pass


class ScenarioError(AdaptSimError):
    """A scenario failed to parse or validate."""


class IncomparableTraces(AdaptSimError):
    pass
