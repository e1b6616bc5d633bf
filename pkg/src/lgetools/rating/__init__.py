from .model import (
    CONSENSUS_RATER,
    CaseAssignment,
    CaseEntry,
    ComparisonChoice,
    Method,
    RatingCategory,
    RatingEvent,
    SessionPlan,
    TargetClass,
    assign_case,
)
from .analysis import (
    aggregate_proportions,
    comparison_eligible,
    patient_contingency_from_ratings,
    preference_summary,
    rater_agreement,
)
from .store import (
    SessionData,
    SessionStore,
    export_session_csvs,
    export_session_zip,
    import_session_csvs,
    import_session_zip,
    make_plan,
)
from .service import create_app

__all__ = [
    "CONSENSUS_RATER",
    "CaseAssignment",
    "CaseEntry",
    "ComparisonChoice",
    "Method",
    "RatingCategory",
    "RatingEvent",
    "SessionPlan",
    "TargetClass",
    "assign_case",
    "aggregate_proportions",
    "comparison_eligible",
    "patient_contingency_from_ratings",
    "preference_summary",
    "rater_agreement",
    "SessionData",
    "SessionStore",
    "export_session_csvs",
    "export_session_zip",
    "import_session_csvs",
    "import_session_zip",
    "make_plan",
    "create_app",
]
