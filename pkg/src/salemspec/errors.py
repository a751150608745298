"""
Exception base classes shared by every salemspec module.
"""


class SalemspecError(ValueError):
    """A violated precondition or an invalid parameter.

    The command-line program reports these with exit code 2.
    """


class NumericalFailure(ArithmeticError):
    """A computation that cannot produce a meaningful number, for example a
    decay fit over a sequence that vanishes everywhere.

    The command-line program reports these with exit code 3.
    """
