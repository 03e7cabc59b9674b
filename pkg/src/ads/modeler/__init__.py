"""Knowledge-assisted anomaly modelling: catalog generation, column mapping and plan compilation."""

from .catalog import Component, FailureMode, FailureModeCatalog, MetricConcept, generate_catalog
from .clients import HttpClient, ReplayClient
from .mapping import MetricMapping, check_llm_mapping, map_metrics, similarity, tokens
from .plan import MonitoringPlan, PlanEntry, behavior_class, compile_plan

__all__ = [
    "Component",
    "FailureMode",
    "FailureModeCatalog",
    "MetricConcept",
    "generate_catalog",
    "HttpClient",
    "ReplayClient",
    "MetricMapping",
    "check_llm_mapping",
    "map_metrics",
    "similarity",
    "tokens",
    "MonitoringPlan",
    "PlanEntry",
    "behavior_class",
    "compile_plan",
]
