"""Exception hierarchy.

Every error carries a short machine-readable ``code`` so the job service can
persist failure reasons without string matching on messages.
"""

from __future__ import annotations


class ADSError(Exception):
    code = "error"

    def __init__(self, message: str = "", **details):
        super().__init__(message or self.code)
        self.details = details

    def reason(self) -> dict:
        return {"code": self.code, "message": str(self), **self.details}


# -- data ingestion ----------------------------------------------------------


class MissingColumn(ADSError):
    code = "missing_column"

    def __init__(self, name: str):
        super().__init__(f"column {name!r} not found", column=name)


class TimeParseError(ADSError):
    code = "time_parse_error"

    def __init__(self, row: int, value: str, fmt: str):
        super().__init__(f"row {row}: cannot parse {value!r} with format {fmt!r}", row=row)


class DuplicateTimestamp(ADSError):
    code = "duplicate_timestamp"

    def __init__(self, row: int):
        super().__init__(f"row {row}: duplicate timestamp", row=row)


class NonNumericValue(ADSError):
    code = "non_numeric_value"

    def __init__(self, row: int, column: str, value: str = ""):
        super().__init__(f"row {row}, column {column!r}: {value!r} is not numeric", row=row, column=column)


class BadLabel(ADSError):
    code = "bad_label"


class EmptyFitRange(ADSError):
    code = "empty_fit_range"


class SeriesTooShort(ADSError):
    code = "series_too_short"


class AllColumnsDropped(ADSError):
    code = "all_columns_dropped"


class UnknownSplitValue(ADSError):
    code = "unknown_split_value"

    def __init__(self, row: int, value: str):
        super().__init__(f"row {row}: unknown split tag {value!r}", row=row)


# -- detectors ---------------------------------------------------------------


class TooFewRows(ADSError):
    code = "too_few_rows"


class NonFiniteLoss(ADSError):
    code = "non_finite_loss"


class SchemaMismatch(ADSError):
    code = "schema_mismatch"


class SingularSystem(ADSError):
    code = "singular_system"


class DegenerateComponent(ADSError):
    code = "degenerate_component"


class BadSplit(ADSError):
    code = "bad_split"


class NoFailuresInValidation(ADSError):
    code = "no_failures_in_validation"


class TrainContainsFailures(ADSError):
    code = "train_contains_failures"


class LengthMismatch(ADSError):
    code = "length_mismatch"


class IncompatibleEstimator(ADSError):
    code = "incompatible_estimator"


class DeadlineExceeded(ADSError):
    """Raised from inside long fits when a cooperative deadline has passed."""

    code = "deadline_exceeded"


# -- scoring -----------------------------------------------------------------


class NonFiniteScore(ADSError):
    code = "non_finite_score"


class SpecMismatch(ADSError):
    code = "spec_mismatch"


class TooFewNormalRows(ADSError):
    code = "too_few_normal_rows"


class ModelNotFitted(ADSError):
    code = "model_not_fitted"


class InsufficientRecentData(ADSError):
    code = "insufficient_recent_data"


# -- evaluation --------------------------------------------------------------


class MissingAssetFiles(ADSError):
    code = "missing_asset_files"


class BudgetExceeded(ADSError):
    code = "budget_exceeded"


class NoAnomaliesInTruth(ADSError):
    code = "no_anomalies_in_truth"


# -- service -----------------------------------------------------------------


class ValidationFailed(ADSError):
    code = "validation_failed"

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations), violations=list(violations))
        self.violations = list(violations)


class CapacityExceeded(ADSError):
    code = "capacity_exceeded"


class NotFound(ADSError):
    code = "not_found"


class NotReady(ADSError):
    code = "not_ready"


class LimitExceeded(ADSError):
    code = "limit_exceeded"


class AuthFailed(ADSError):
    code = "auth_failed"


class ObjectNotFound(ADSError):
    code = "object_not_found"


class TooLarge(ADSError):
    code = "too_large"


class NetworkError(ADSError):
    code = "network_error"


class NoResults(ADSError):
    code = "no_results"


# -- modeler -----------------------------------------------------------------


class ClientUnavailable(ADSError):
    code = "client_unavailable"


class UnparseableResponse(ADSError):
    code = "unparseable_response"

    def __init__(self, stage: str, raw: str, subject: str | None = None):
        where = f"{stage}[{subject}]" if subject else stage
        super().__init__(f"could not parse response for {where}", stage=stage, subject=subject)
        self.stage = stage
        self.subject = subject
        self.raw = raw


class EmptyMapping(ADSError):
    code = "empty_mapping"
