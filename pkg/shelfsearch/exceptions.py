from typing import List, Optional


class ShelfSearchError(Exception):
    """Base class for every error raised by the simulator"""


class GeometryError(ShelfSearchError, ValueError):
    """Degenerate or non-convex polygons, or interpenetrating sweep inputs"""


class SceneGenerationError(ShelfSearchError):
    def __init__(self, constraint: str, attempts: int):
        self.constraint = constraint
        self.attempts = attempts
        super().__init__(f"Scene generation failed after {attempts} attempts: could not satisfy {constraint}")


class SceneFormatError(ShelfSearchError, ValueError):
    def __init__(self, message: str, location: Optional[str] = None):
        self.location = location
        detail = f"{location}: {message}" if location else message
        super().__init__(f"Malformed scene document at {detail}")


class SceneValidationError(ShelfSearchError, ValueError):
    def __init__(self, violations: List[str]):
        self.violations = violations
        super().__init__("Invalid scene: " + "; ".join(violations))


class RenderError(ShelfSearchError, ValueError):
    pass


class BeliefError(ShelfSearchError, ValueError):
    pass


class PushPreconditionError(ShelfSearchError):
    pass


class NodeBudgetExceeded(ShelfSearchError):
    def __init__(self, budget: int):
        self.budget = budget
        super().__init__(f"Lookahead search exceeded its node budget of {budget} oracle evaluations")


class BenchConfigError(ShelfSearchError, ValueError):
    pass
