"""Exception hierarchy shared by every module.

Each class carries an ``exit_code`` so the command-line front end can map
failures onto its documented exit statuses without a lookup table.
"""


class CqlsError(Exception):
    """Base class for all package errors."""

    exit_code = 4


class InputFormatError(CqlsError):
    exit_code = 3


class PedigreeError(InputFormatError):
    """Malformed or inconsistent pedigree."""


class DanglingParentError(PedigreeError):
    pass


class DuplicateIndividualError(PedigreeError):
    pass


class PedigreeCycleError(PedigreeError):
    pass


class IbdInconsistencyError(InputFormatError):
    """Pairwise IBD states that no chromosome labeling can satisfy."""


class GenotypeConsistencyError(CqlsError):
    """Genotypes that cannot be produced by the founder-chromosome labeling."""


class UnsupportedTopologyError(CqlsError):
    pass


class CoverageError(CqlsError):
    """A phenotyped member has neither hard labels nor descent probabilities."""


class NumericError(CqlsError):
    pass


class BracketError(NumericError):
    pass


class QuadratureError(NumericError):
    pass


class MonomorphicError(NumericError):
    """Estimated allele frequency is 0 or 1; the statistic is undefined."""


class DegenerateDesignError(NumericError):
    """Zero score variance (e.g. every chromosome has the same score weight)."""


class RangeError(NumericError):
    """Requested calibration target is outside the attainable range."""
