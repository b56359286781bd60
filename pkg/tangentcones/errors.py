class DomainError(ValueError):
    """A chart point or profile argument lies outside its valid range."""


class StepSizeError(DomainError):
    """A finite-difference stencil leaves the chart."""


class InfeasibleCutoffError(ValueError):
    """The derivative bound does not integrate to enough rise over the ramp."""


class EmptyRegionError(ValueError):
    """A sampling region contains no admissible point."""


class EmptyBallError(ValueError):
    """A metric ball contains no sample point."""


class PopulationError(ValueError):
    """Too few sample points to evaluate an average or regression."""


class DisconnectedGraphError(ValueError):
    """The neighbour graph splits into several components."""

    def __init__(self, component_sizes):
        self.component_sizes = sorted(
            (int(size) for size in component_sizes), reverse=True
        )
        super().__init__(
            f"Graph is disconnected into {len(self.component_sizes)} "
            f"components of sizes {self.component_sizes}! Increase the "
            "neighbour count or the sample size."
        )


class OvershootError(ValueError):
    """A gradient-flow step is at least as long as the distance to p."""


class SizeError(ValueError):
    """A space is too large for the exact Gromov-Hausdorff oracle."""


class ScaleError(ValueError):
    """A parabolic approximation scale is outside the admissible range."""


class ConfigError(ValueError):
    """A configuration file violates the expected schema."""

    def __init__(self, message, filepath=None, line=None):
        self.filepath = filepath
        self.line = line
        location = ""
        if filepath is not None:
            location = f"{filepath}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class IntegrationError(RuntimeError):
    """An ODE integration along a geodesic failed."""
