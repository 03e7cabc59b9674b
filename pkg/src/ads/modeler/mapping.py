"""Deterministic lexical matching of metric concepts to dataset columns."""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..errors import UnparseableResponse
from .catalog import FailureModeCatalog, bullets, template

CUTOFF = 0.5
PREFIXES = ("ibm_is_instance_", "ibm_is_", "ibm_")
SYNONYMS = {
    "processor": "cpu",
    "net": "network",
    "utilization": "usage",
    "utilisation": "usage",
    "util": "usage",
    "traffic": "usage",
    "throughput": "usage",
    "byte": "usage",
    "volume": "disk",
    "storage": "disk",
    "db": "database",
    "conn": "connection",
    "err": "error",
    "mem": "memory",
}
NOISE = frozenset(
    {"average", "avg", "mean", "percentage", "percent", "pct", "in", "out", "read", "write",
     "total", "count", "rate", "per", "sec", "second", "the", "of", "and", "instance"}
)


def _singular(tok: str) -> str:
    if len(tok) > 4 and tok.endswith("ies"):
        return tok[:-3] + "y"
    if len(tok) > 3 and tok.endswith("s") and not tok.endswith("ss"):
        return tok[:-1]
    return tok


def tokens(name: str) -> frozenset[str]:
    """Normalized token set of a concept or column name."""
    text = name.strip().lower()
    for prefix in PREFIXES:
        if text.startswith(prefix):
            text = text[len(prefix):]
            break
    out = set()
    for raw in re.split(r"[^a-z0-9]+", text):
        if not raw or raw in NOISE:
            continue
        tok = _singular(raw)
        tok = SYNONYMS.get(tok, tok)
        if tok not in NOISE:
            out.add(tok)
    return frozenset(out)


def similarity(a: str, b: str) -> float:
    ta, tb = tokens(a), tokens(b)
    union = ta | tb
    return len(ta & tb) / len(union) if union else 0.0


@dataclass
class MetricMapping:
    pairs: list[tuple[str, str, float]]
    unmapped: list[str] = field(default_factory=list)

    def columns_for(self, concept: str) -> list[str]:
        return [col for c, col, _ in self.pairs if c == concept]

    def to_dict(self) -> dict:
        return {
            "pairs": [{"concept": c, "column": col, "score": s} for c, col, s in self.pairs],
            "unmapped": list(self.unmapped),
        }

    def report(self) -> str:
        lines = [f"mapped   {c} -> {col} ({s:.2f})" for c, col, s in self.pairs]
        lines += [f"unmapped {c}" for c in self.unmapped]
        return "\n".join(lines) + "\n"


def map_metrics(catalog: FailureModeCatalog, columns, cutoff: float = CUTOFF) -> MetricMapping:
    """Assign each column to its best-scoring concept when that score reaches ``cutoff``.

    Ties between concepts go to the lexicographically smaller concept name.
    Pairs come out grouped by concept in catalog order, columns sorted.
    """
    columns = list(columns)
    if not columns:
        raise ValueError("map_metrics needs at least one column")
    concepts = [c for _, c, _ in catalog.concepts()]
    best: dict[str, tuple[str, float]] = {}
    for col in sorted(set(columns)):
        scored = [(similarity(concept, col), concept) for concept in concepts]
        if not scored:
            break
        top = max(s for s, _ in scored)
        if top >= cutoff:
            best[col] = (min(c for s, c in scored if s == top), top)
    pairs = []
    for concept in concepts:
        for col in sorted(c for c, (k, _) in best.items() if k == concept):
            pairs.append((concept, col, best[col][1]))
    mapped = {c for c, _, _ in pairs}
    return MetricMapping(pairs, [c for c in concepts if c not in mapped])


def llm_mapping_prompt(catalog: FailureModeCatalog, columns) -> str:
    concepts = "\n".join(f"- {c}" for _, c, _ in catalog.concepts())
    cols = "\n".join(f"- {c}" for c in columns)
    return template("step4_mapping").format(concepts=concepts, columns=cols)


def parse_llm_mapping(text: str) -> list[tuple[str, str]]:
    pairs = []
    for item in bullets(text):
        concept, sep, rest = item.partition(":")
        if not sep:
            raise UnparseableResponse("step4_mapping", text)
        pairs += [(concept.strip(), c.strip()) for c in rest.split(",") if c.strip()]
    return pairs


def check_llm_mapping(client, catalog: FailureModeCatalog, columns, deterministic: MetricMapping | None = None) -> dict:
    """Ask the model for a mapping and compare it with the lexical one.

    Returns ``agreed`` pairs plus the pairs only the model proposed and only
    the lexical matcher found. The lexical mapping stays authoritative.
    """
    deterministic = deterministic or map_metrics(catalog, columns)
    raw = client.complete("step4_mapping", catalog.domain, llm_mapping_prompt(catalog, columns))
    proposed = set(parse_llm_mapping(raw))
    lexical = {(c, col) for c, col, _ in deterministic.pairs}
    return {
        "agreed": sorted(proposed & lexical),
        "model_only": sorted(proposed - lexical),
        "lexical_only": sorted(lexical - proposed),
    }
