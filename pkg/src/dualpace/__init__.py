"""Budget-constrained online allocation toolkit.

Dual bid pricing over temporal arrival-value series, budget pacing from
consumption spectra, window forecasting with shape repair, and a seeded
closed-loop simulator with brute-force certification for small instances.
"""

from .errors import (
    DimensionMismatch,
    DualpaceError,
    InsufficientHistory,
    InvalidRegimeParams,
    InvalidStep,
    LengthMismatch,
    NegativeBudget,
    NegativeCost,
    NoBracket,
    NonFiniteValue,
    ParseError,
    ProtocolError,
    ServiceUnavailable,
    ShapeMismatch,
    TooLarge,
    TooShort,
    ValidationError,
)
from .model import (
    AllocationInstance,
    ArrivalVectorSeries,
    BudgetPlan,
    LambdaGrid,
    TreatmentCatalog,
    UserResponse,
    build_grid,
    check_plan,
    check_series,
    check_series_row,
    read_instance,
    validate_instance,
    write_instance,
)
from .solver import (
    BestResponse,
    DualSolution,
    arrival_series,
    arrival_value,
    best_response,
    default_lambda_max,
    dual_objective,
    dual_subgradient,
    ogd_step,
    solve_bisect,
    solve_grid,
)
from .oracle import OracleResult, brute_force_ip, certify, dense_dual_min
from .pacing import (
    ConsumptionHistory,
    SpectrumReport,
    periodogram,
    read_history_csv,
    replan_remaining,
    temporal_plan,
    uniform_plan,
    write_plan_csv,
)
from .forecasting import (
    METHODS,
    BuiltinForecaster,
    ForecastResult,
    RemoteForecaster,
    SlidingWindow,
    forecast,
    mae,
    mse,
    remote_forecast,
    repair_row,
    window_push,
)

__version__ = "0.1.0"

__all__ = [
    "METHODS",
    "AllocationInstance",
    "ArrivalVectorSeries",
    "BestResponse",
    "BudgetPlan",
    "BuiltinForecaster",
    "ConsumptionHistory",
    "DimensionMismatch",
    "DualSolution",
    "DualpaceError",
    "ForecastResult",
    "InsufficientHistory",
    "InvalidRegimeParams",
    "InvalidStep",
    "LambdaGrid",
    "LengthMismatch",
    "NegativeBudget",
    "NegativeCost",
    "NoBracket",
    "NonFiniteValue",
    "OracleResult",
    "ParseError",
    "ProtocolError",
    "RemoteForecaster",
    "ServiceUnavailable",
    "ShapeMismatch",
    "SlidingWindow",
    "SpectrumReport",
    "TooLarge",
    "TooShort",
    "TreatmentCatalog",
    "UserResponse",
    "ValidationError",
    "arrival_series",
    "arrival_value",
    "best_response",
    "brute_force_ip",
    "build_grid",
    "certify",
    "check_plan",
    "check_series",
    "check_series_row",
    "default_lambda_max",
    "dense_dual_min",
    "dual_objective",
    "dual_subgradient",
    "forecast",
    "mae",
    "mse",
    "ogd_step",
    "periodogram",
    "read_history_csv",
    "read_instance",
    "remote_forecast",
    "repair_row",
    "replan_remaining",
    "solve_bisect",
    "solve_grid",
    "temporal_plan",
    "uniform_plan",
    "validate_instance",
    "window_push",
    "write_instance",
    "write_plan_csv",
]
