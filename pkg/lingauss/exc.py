"""Errors raised by lingauss.

Each error keeps its payload in ``args`` and exposes it by name, such that
errors survive pickling (e.g. across a process pool) and remain
introspectable by callers.

"""


class LinGaussError(Exception):
    """Base class of all lingauss errors."""

    __slots__ = ()


#
# problem definition
#

class ProblemError(LinGaussError, ValueError):
    """Invalid constraint or problem definition."""

    __slots__ = ()

    def __init__(self, message, field=None):
        super().__init__(message, field)

    @property
    def message(self):
        return self.args[0]

    @property
    def field(self):
        return self.args[1]

    def __str__(self):
        if self.field is None:
            return self.message

        return f'{self.field}: {self.message}'


class DimensionError(ProblemError):
    """Shapes of points, constraints or parameters disagree."""

    __slots__ = ()


class ProblemFormatError(ProblemError):
    """Problem (or sequence) file could not be parsed.

    The location is either a field path (e.g. ``A[3][1]``) or a position
    in the document (line, column and byte offset).

    """
    __slots__ = ()

    def __init__(self, message, field=None, path=None, line=None, column=None, offset=None):
        LinGaussError.__init__(self, message, field, None if path is None else str(path),
                               line, column, offset)

    @property
    def path(self):
        return self.args[2]

    @property
    def line(self):
        return self.args[3]

    @property
    def column(self):
        return self.args[4]

    @property
    def offset(self):
        return self.args[5]

    def __str__(self):
        if self.offset is not None:
            if self.line is None:
                return f'{self.path}: byte {self.offset}: {self.message}'

            return (f'{self.path}: line {self.line} column {self.column} '
                    f'(byte {self.offset}): {self.message}')

        if self.path is None:
            return super().__str__()

        return f'{self.path}: {super().__str__()}'


#
# contract
#

class InfeasibleStateError(LinGaussError, ValueError):
    """A chain was started outside of its (shifted) domain."""

    __slots__ = ()

    def __init__(self, min_slack, gamma):
        super().__init__(min_slack, gamma)

    @property
    def min_slack(self):
        return self.args[0]

    @property
    def gamma(self):
        return self.args[1]

    @property
    def message(self):
        return (f'initial state must lie inside the domain: '
                f'min slack {self.min_slack!r} + shift {self.gamma!r} <= 0')

    def __str__(self):
        return self.message


#
# numerical
#

class NumericalError(LinGaussError, ArithmeticError):
    """Base class of numerical failures."""

    __slots__ = ()


class CholeskyError(NumericalError):
    """Matrix is not (numerically) positive definite."""

    __slots__ = ()

    def __init__(self, minor):
        super().__init__(minor)

    @property
    def minor(self):
        """Order of the leading minor which is not positive definite."""
        return self.args[0]

    @property
    def message(self):
        return f'leading minor of order {self.minor} is not positive definite'

    def __str__(self):
        return f'Cholesky factorization failed: {self.message}'


class StallError(NumericalError):
    """Nesting construction made no progress."""

    __slots__ = ()

    def __init__(self, level, reason):
        super().__init__(level, reason)

    @property
    def level(self):
        return self.args[0]

    @property
    def reason(self):
        return self.args[1]

    def __str__(self):
        return (f'subset simulation stalled at level {self.level}: {self.reason} '
                f'(is the domain empty?)')


class LevelLimitError(StallError):
    """Nesting construction exceeded its level cap."""

    __slots__ = ()

    def __str__(self):
        return f'subset simulation exceeded {self.level} levels: {self.reason}'


class ZeroCountError(NumericalError):
    """No sample of a nesting fell into the next nested domain."""

    __slots__ = ()

    def __init__(self, level, total):
        super().__init__(level, total)

    @property
    def level(self):
        return self.args[0]

    @property
    def total(self):
        return self.args[1]

    def __str__(self):
        return (f'none of {self.total} samples at nesting {self.level} fell into the '
                f'next domain; rebuild the shift sequence with more samples per nesting')


class EstimationError(NumericalError):
    """Every run of a repeated estimation failed."""

    __slots__ = ()

    def __init__(self, failures):
        super().__init__(tuple(failures))

    @property
    def failures(self):
        return self.args[0]

    def __str__(self):
        (_index, first) = self.failures[0]
        return f'all {len(self.failures)} runs failed; first: {first}'
