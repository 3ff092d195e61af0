"""Exception hierarchy shared by all stages."""


class MangaLayoutError(Exception):
    """Base class for every error raised by this package."""


class PointAtInfinity(MangaLayoutError):
    pass


class DegenerateConfiguration(MangaLayoutError):
    pass


class NoModel(MangaLayoutError):
    """RANSAC found no model with enough support.

    This is a verdict ("these pages do not correspond"), not a crash.
    """


class ParseError(MangaLayoutError):
    pass


class NoFrames(MangaLayoutError):
    pass


class UnassignedScene(MangaLayoutError):
    pass


class TaggerUnavailable(MangaLayoutError):
    pass


class EmptyMask(MangaLayoutError):
    pass


class NoSeparatingCut(MangaLayoutError):
    pass


class PageMismatch(MangaLayoutError):
    pass


class EngineFailure(MangaLayoutError):
    pass


class EmptyOutput(MangaLayoutError):
    pass


class DoesNotFit(MangaLayoutError):
    pass


class RasterizerFailure(MangaLayoutError):
    pass


class ConfigError(MangaLayoutError):
    pass
