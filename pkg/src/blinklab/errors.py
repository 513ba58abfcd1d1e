"""Exception types raised across the pipeline.

Everything derives from BlinkLabError so callers (and the CLI) can catch
domain failures in one place and keep genuine bugs loud.
"""


class BlinkLabError(Exception):
    pass


# --- ingestion ---

class MissingFile(BlinkLabError):
    pass


class MalformedManifest(BlinkLabError):
    pass


class InvariantViolation(BlinkLabError):
    pass


class NonMonotonicTimestamps(BlinkLabError):
    pass


class NegativeBandPower(BlinkLabError):
    pass


class NegativeTime(BlinkLabError):
    pass


# --- candidate labeling ---

class EmptyTrace(BlinkLabError):
    pass


class WindowOutOfBounds(BlinkLabError):
    pass


class InsufficientNegativeFootage(BlinkLabError):
    def __init__(self, requested: int, achievable: int):
        super().__init__(
            f"requested {requested} negative windows but only {achievable} fit"
        )
        self.requested = requested
        self.achievable = achievable


# --- eye extraction ---

class NoFaceFound(BlinkLabError):
    pass


class AdapterFailure(BlinkLabError):
    pass


class DegenerateBox(BlinkLabError):
    pass


class EmptyIntersection(BlinkLabError):
    pass


# --- classifier ---

class ConfigViolation(BlinkLabError):
    pass


class SingleClassDataset(BlinkLabError):
    pass


class EmptyDataset(BlinkLabError):
    pass


class ShapeMismatch(BlinkLabError):
    pass


# --- scoring / calibration ---

class EmptyScores(BlinkLabError):
    pass


class EmptyClass(BlinkLabError):
    pass


# --- attention analysis ---

class WindowLongerThanTrace(BlinkLabError):
    pass


class InsufficientOverlap(BlinkLabError):
    pass


class ZeroVariance(BlinkLabError):
    pass


# --- synthetic data ---

class OverlappingBlinks(BlinkLabError):
    pass


# --- evaluation ---

class MalformedSample(BlinkLabError):
    pass
