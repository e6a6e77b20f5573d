"""Exception hierarchy. Numerical failures map to CLI exit code 2."""


class NumericalError(ArithmeticError):
    """A computation could not produce a trustworthy result."""


class RankDeficiencyError(NumericalError):
    pass


class PreconditionerError(NumericalError):
    def __init__(self, message, condition):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class EspritError(NumericalError):
    pass
