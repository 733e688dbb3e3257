"""Exception hierarchy shared across the package."""


class MechbandError(Exception):
    """Base class for every error raised by mechband."""


class ShapeMismatch(MechbandError, ValueError):
    pass


class NonFiniteInput(MechbandError, ValueError):
    pass


class NonPositiveStep(MechbandError, ValueError):
    pass


class UnderDetermined(MechbandError, ValueError):
    pass


class NotPositiveDefinite(MechbandError, ArithmeticError):
    """Cholesky of a diagonal block failed.

    ``block`` is the 0-based time index of the failing block and
    ``batch_index`` the position inside the batch (``None`` when unbatched).
    """

    def __init__(self, block: int, batch_index: tuple[int, ...] | None = None):
        self.block = block
        self.batch_index = batch_index
        where = f"block t={block}"
        if batch_index:
            where += f" (batch item {batch_index})"
        super().__init__(f"NotPositiveDefinite: Cholesky failed at {where}")


class MissingCache(MechbandError, RuntimeError):
    pass


class SingularNormalMatrix(MechbandError, ArithmeticError):
    pass


class OracleTooLarge(MechbandError, ValueError):
    pass


class Diverged(MechbandError, FloatingPointError):
    pass


class NonFiniteState(MechbandError, FloatingPointError):
    pass
