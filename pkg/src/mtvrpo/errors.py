"""Exception hierarchy shared by every module of the solver."""


class MTVRPOError(Exception):
    """Base class for all solver errors."""


class ParseError(MTVRPOError):
    pass


class InvalidMap(MTVRPOError):
    pass


class ValidationError(MTVRPOError):
    pass


class PointInObstacle(MTVRPOError):
    pass


class Unreachable(MTVRPOError):
    pass


class GenerationFailed(MTVRPOError):
    pass


class ConfigError(MTVRPOError):
    pass


class TourInfeasible(MTVRPOError):
    pass


class DegenerateFit(MTVRPOError):
    pass


class ResourceExhausted(MTVRPOError):
    pass


class NotIntegral(MTVRPOError):
    pass


class NoFractionalEdge(MTVRPOError):
    pass
