"""Exception hierarchy shared by all numerical kernels."""

from typing import Optional, Sequence


class SimulationError(Exception):
    """Base class for every failure raised by the simulation kernels."""


class ConfigurationError(SimulationError, ValueError):
    """Invalid scenario, solver or noise configuration."""

    def __init__(self, message: str, field_path: Optional[str] = None):
        self.field_path = field_path
        if field_path:
            message = f"{field_path}: {message}"
        super().__init__(message)


class ParabolicityError(ConfigurationError):
    """Declared or frozen coefficients violate stochastic parabolicity."""

    def __init__(self, nu_hat: float, nu: float, time: Optional[float] = None):
        self.nu_hat = nu_hat
        self.nu = nu
        self.time = time
        where = f" at t={time:.6g}" if time is not None else ""
        super().__init__(f"parabolicity violated{where}: nu_hat={nu_hat:.6g} < nu={nu:.6g}")


class NonFiniteFieldError(SimulationError):
    """A field operation produced NaN or infinite values."""


class FlowDegeneracyError(SimulationError):
    """The stochastic flow stopped being an orientation preserving diffeomorphism."""

    def __init__(self, node: int, point: Sequence[float], time: float, reason: str):
        self.node = node
        self.point = tuple(float(p) for p in point)
        self.time = time
        super().__init__(f"flow degenerate at node {node} {self.point}, t={time:.6g}: {reason}")


class InversionFailureError(SimulationError):
    """Newton / fixed-point inversion of the flow did not reach tolerance."""

    def __init__(self, node: int, residual: float, iterations: int):
        self.node = node
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"flow inversion failed at node {node} after {iterations} iterations (residual {residual:.3e})"
        )


class TransformationError(SimulationError):
    """Assembly of the transformed coefficients produced non-finite values."""

    def __init__(self, node: int, quantity: str):
        self.node = node
        self.quantity = quantity
        super().__init__(f"non-finite {quantity} at node {node}")


class DegenerateCoefficientsError(SimulationError):
    """The transformed diffusion lost positivity on some nodes."""

    def __init__(self, count: int, time: float):
        self.count = count
        self.time = time
        super().__init__(f"{count} degenerate nodes in the transformed diffusion at t={time:.6g}")


class LinearSolveError(SimulationError):
    """The sparse linear solve did not converge."""

    def __init__(self, info: int, time: float):
        self.info = info
        self.time = time
        super().__init__(f"linear solve failed (info={info}) at t={time:.6g}")


class CFLViolationError(ConfigurationError):
    """Explicit transport noise step exceeds the configured CFL ratio."""


class BlowUpError(SimulationError):
    """Sup norm of the solution exceeded the configured guard."""

    def __init__(self, time: float, sup_norm: float, bound: float):
        self.time = time
        self.sup_norm = sup_norm
        self.bound = bound
        super().__init__(f"blow-up guard tripped at t={time:.6g}: |u|_inf={sup_norm:.6g} > {bound:.6g}")


class OutputError(SimulationError):
    """Writing or reading a result file failed."""

    def __init__(self, path, reason: str):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}")


class PathFailedError(SimulationError):
    """A Monte Carlo path failed while fail-fast was requested."""

    def __init__(self, index: int, error_type: str, message: str):
        self.index = index
        self.error_type = error_type
        super().__init__(f"path {index} failed with {error_type}: {message}")
