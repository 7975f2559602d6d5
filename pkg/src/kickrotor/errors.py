"""Exception hierarchy shared by the simulator, the fitters and the CLI."""


class KickRotorError(Exception):
    """Base class for all package errors."""


class ConfigError(KickRotorError, ValueError):
    """Invalid or inconsistent input parameters (CLI exit code 2)."""

    def __init__(self, message, problems=None):
        self.problems = list(problems or [])
        if self.problems:
            message = message + ":\n" + "\n".join(f"  - {p}" for p in self.problems)
        super().__init__(message)


class DomainError(ConfigError):
    """Argument outside the mathematical domain of an operation."""


class NumericalError(KickRotorError, ArithmeticError):
    """A numerical procedure failed or a guard tripped (CLI exit code 3)."""


class LeakageError(NumericalError):
    """Population reached the top of the truncated rotational basis."""

    def __init__(self, kick_index, population, member=None):
        self.kick_index = kick_index
        self.population = population
        self.member = member
        where = f"after kick {kick_index}"
        if member is not None:
            where += f" (ensemble member {member})"
        super().__init__(
            f"basis leakage {where}: population {population:.3e} in the top two "
            "lattice sites exceeds 1e-6; increase j_max"
        )


class PoleError(NumericalError):
    """tan(phi) evaluated at a pole, i.e. exactly on a lattice resonance."""


class FitError(NumericalError):
    """A line-shape fit could not be performed on the given data."""


class GenerationError(NumericalError):
    """Random pulse-train generation could not satisfy its constraints."""
