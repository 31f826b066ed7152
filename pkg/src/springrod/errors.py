"""Exception types raised by the engine and the identification layer."""


class SpringRodError(Exception):
    """Base class for all package errors."""


class TopologyError(SpringRodError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DegenerateSpring(SpringRodError):
    def __init__(self, message="coincident spring endpoints", spring=None, step=None, trajectory=None):
        self.spring = spring
        self.step = step
        self.trajectory = trajectory
        super().__init__(message)

    def __str__(self):
        parts = [self.args[0]]
        for name in ("spring", "step", "trajectory"):
            val = getattr(self, name)
            if val is not None:
                parts.append(f"{name}={val}")
        return ", ".join(parts)


class NonFiniteState(SpringRodError):
    def __init__(self, step, trajectory=None):
        self.step = step
        self.trajectory = trajectory
        msg = f"non-finite state at step {step}"
        if trajectory is not None:
            msg += f" (trajectory {trajectory})"
        super().__init__(msg)


class NonSmoothPoint(SpringRodError):
    """A cable sits exactly on its slack/taut boundary."""


class InconsistentTrajectory(SpringRodError):
    pass


class SingularProblem(SpringRodError):
    def __init__(self, message, condition_number=float("inf"), block=None):
        self.condition_number = condition_number
        self.block = block
        super().__init__(message)


class Diverged(SpringRodError):
    pass


class NoExcitation(SpringRodError):
    pass


class ParseError(SpringRodError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SchemaError(SpringRodError):
    pass
