"""Compile a metric mapping into detection requests."""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

from ..errors import EmptyMapping
from .catalog import FailureModeCatalog
from .mapping import MetricMapping

SPIKE, SUSTAINED, BOTH = "spike", "sustained_high", "spike_or_sustained"

# behavior class -> list of (detector, labeling) pairs for univariate requests
UNIVARIATE_RECIPES = {
    SPIKE: [("ReconstructAD", "DNN_AutoEncoder", "pvalue_threshold", 0.01)],
    SUSTAINED: [("PredAD", "WindowedLinear", "std_multiple", 3.0)],
}
UNIVARIATE_RECIPES[BOTH] = UNIVARIATE_RECIPES[SPIKE] + UNIVARIATE_RECIPES[SUSTAINED]


class UnknownBehavior(UserWarning):
    pass


def behavior_class(text: str) -> str:
    t = text.lower()
    spike = "spike" in t
    sustained = "sustained high" in t
    if spike and sustained:
        return BOTH
    if spike:
        return SPIKE
    if sustained:
        return SUSTAINED
    warnings.warn(UnknownBehavior(f"no known behavior keyword in {text!r}; monitoring both patterns"), stacklevel=2)
    return BOTH


@dataclass
class PlanEntry:
    component: str
    concept: str
    column: str
    behavior_class: str
    endpoint: str
    detectors: list[dict]


@dataclass
class MonitoringPlan:
    entries: list[PlanEntry]
    requests: list[dict] = field(default_factory=list)

    def to_json(self) -> str:
        doc = {"version": 1, "entries": [asdict(e) for e in self.entries], "requests": self.requests}
        return json.dumps(doc, indent=1) + "\n"


def compile_plan(
    mapping: MetricMapping,
    catalog: FailureModeCatalog,
    data_file="data.csv",
    time_column: str = "timestamp",
    time_format: str | None = None,
) -> MonitoringPlan:
    """Turn mapped metrics into univariate requests plus one multivariate request per component.

    Each element of ``requests`` is ``{"endpoint": ..., "body": ...}`` with a
    body ready for the service. ``data_file`` is copied into every body.
    """
    if not mapping.pairs:
        raise EmptyMapping("no metric concept matched any column")
    owner = {concept: (comp, behavior) for comp, concept, behavior in catalog.concepts()}
    base = {"data_file": data_file, "time_column": time_column}
    if time_format:
        base["time_format"] = time_format

    entries, requests = [], []
    by_component: dict[str, list[str]] = {}
    for concept, column, _ in mapping.pairs:
        comp, behavior = owner[concept]
        cls = behavior_class(behavior)
        recipes = UNIVARIATE_RECIPES[cls]
        entries.append(
            PlanEntry(
                comp, concept, column, cls, "univariate",
                [{"algorithm_type": a, "anomaly_estimator": e, "labeling_method": m, "labeling_threshold": t}
                 for a, e, m, t in recipes],
            )
        )
        for a, e, m, t in recipes:
            body = {**base, "target_columns": [column], "algorithm_type": a, "anomaly_estimator": e,
                    "labeling_method": m, "labeling_threshold": t, "series_id": f"{comp}/{column}"}
            requests.append({"endpoint": "univariate", "body": body})
        cols = by_component.setdefault(comp, [])
        if column not in cols:
            cols.append(column)

    for comp, cols in by_component.items():
        if len(cols) >= 2:
            body = {**base, "target_columns": cols, "algorithm_type": "ReconstructAD",
                    "anomaly_estimator": "DNN_AutoEncoder", "labeling_method": "pvalue_threshold",
                    "labeling_threshold": 0.01, "series_id": comp}
            requests.append({"endpoint": "multivariate", "body": body})
    return MonitoringPlan(entries, requests)
