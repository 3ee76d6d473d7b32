'''
Error hierarchy shared by the model, analysis, simulation and CLI layers.

Each error class maps to one CLI exit status (see `EXIT_CODES` in helpers/wrappers.py).
'''


class DtdError(Exception):
    '''Base class for all errors raised by dtd_exact.'''


class StructuralError(DtdError):
    '''Raised when array dimensions are inconsistent or entries are not finite.'''


class ScenarioParseError(DtdError):
    '''Raised when a scenario file cannot be parsed or lacks required keys.'''


class ScenarioValidationError(DtdError):
    '''
    Raised when a structurally sound scenario fails one or more invariant checks.

    The full ValidationReport is attached so callers can list every failed check.
    '''

    def __init__(self, report, path=None):
        self.report = report
        self.path = path
        failed = ', '.join(c.name for c in report.failed)
        where = f' in {path}' if path else ''
        super().__init__(f'scenario validation failed{where}: {failed}')


class ReducibleChainError(DtdError):
    '''Raised when a transition matrix has no unique, strictly positive stationary distribution.'''


class AssumptionViolationError(DtdError):
    '''Raised when the mean dynamics matrix is singular or not Hurwitz.'''


class UnstableSystemError(DtdError):
    '''Raised when the lifted second-moment system is not Schur stable.'''

    def __init__(self, message, sr_h22=None):
        self.sr_h22 = sr_h22
        super().__init__(message)


class MomentBlowupError(UnstableSystemError):
    '''Raised when the moment recursion produces non-finite or exploding entries.'''

    def __init__(self, step, sr_h22=None, threshold=1e12):
        self.step = step
        self.threshold = threshold
        msg = f'moment recursion diverged at step {step} (entries exceed {threshold:g})'
        if sr_h22 is not None:
            msg += f'; spectral radius of H22 is {sr_h22:.6g}'
        super().__init__(msg, sr_h22=sr_h22)


class SizeGuardError(DtdError):
    '''Raised when an explicit lifted matrix is required but only the operator form exists.'''


class InsufficientDataError(DtdError):
    '''Raised when a rate fit has too few usable samples.'''


class PathBudgetError(DtdError):
    '''Raised when path enumeration would exceed the path budget.'''
