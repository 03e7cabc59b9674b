"""Failure-mode catalog and the three-stage prompt chain that builds it."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..errors import UnparseableResponse

PROMPTS = Path(__file__).parent / "prompts"
STAGES = ("step1_components", "step2_failure_modes", "step3_metrics", "step4_mapping")

_BULLET = re.compile(r"^\s*(?:[-*•]|\d+[.)])\s+(.*\S)\s*$")
_SUBS = re.compile(r"^(.*?)\s*\(subcomponents?:\s*(.*)\)\s*$", re.IGNORECASE)


@dataclass(frozen=True)
class MetricConcept:
    name: str
    behavior: str


@dataclass(frozen=True)
class FailureMode:
    name: str
    metrics: tuple[MetricConcept, ...] = ()


@dataclass(frozen=True)
class Component:
    name: str
    subcomponents: tuple[str, ...] = ()
    failure_modes: tuple[FailureMode, ...] = ()


@dataclass
class FailureModeCatalog:
    domain: str
    components: list[Component]
    errors: list[dict] = field(default_factory=list)

    def __post_init__(self):
        for comp in self.components:
            if not comp.name.strip():
                raise ValueError("component names must be non-empty")
            for fm in comp.failure_modes:
                if not fm.name.strip():
                    raise ValueError(f"empty failure-mode name under {comp.name}")
                names = [m.name for m in fm.metrics]
                if any(not n.strip() for n in names):
                    raise ValueError(f"empty metric name under {comp.name} / {fm.name}")
                if len(set(names)) != len(names):
                    raise ValueError(f"duplicate metric under {comp.name} / {fm.name}")

    def concepts(self) -> list[tuple[str, str, str]]:
        """``(component, concept, behavior)`` for each distinct concept, first occurrence wins."""
        seen, out = set(), []
        for comp in self.components:
            for fm in comp.failure_modes:
                for m in fm.metrics:
                    if m.name not in seen:
                        seen.add(m.name)
                        out.append((comp.name, m.name, m.behavior))
        return out

    def to_dict(self) -> dict:
        return {"version": 1, **asdict(self)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "FailureModeCatalog":
        comps = [
            Component(
                c["name"],
                tuple(c.get("subcomponents", ())),
                tuple(
                    FailureMode(f["name"], tuple(MetricConcept(m["name"], m["behavior"]) for m in f.get("metrics", ())))
                    for f in c.get("failure_modes", ())
                ),
            )
            for c in d["components"]
        ]
        return cls(d.get("domain", ""), comps, list(d.get("errors", [])))

    @classmethod
    def load(cls, path) -> "FailureModeCatalog":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def template(stage: str) -> str:
    lines = (PROMPTS / f"{stage}.txt").read_text(encoding="utf-8").splitlines()
    return "\n".join(ln for ln in lines if not ln.startswith("# ")) + "\n"


def bullets(text: str) -> list[str]:
    """Items of a bulleted or numbered list; any other non-blank line makes the reply unparseable."""
    items = []
    for line in (text or "").splitlines():
        if not line.strip():
            continue
        m = _BULLET.match(line)
        if m is None:
            return []
        items.append(m.group(1))
    return items


def parse_components(text: str) -> list[tuple[str, tuple[str, ...]]]:
    out = []
    for item in bullets(text):
        m = _SUBS.match(item)
        if m:
            subs = tuple(s.strip() for s in m.group(2).split(",") if s.strip())
            out.append((m.group(1).strip(), subs))
        else:
            out.append((item.strip(), ()))
    return out


def parse_metrics(text: str) -> list[MetricConcept]:
    out, seen = [], set()
    for item in bullets(text):
        name, sep, behavior = item.partition(":")
        if not sep or not name.strip() or not behavior.strip():
            return []
        name = name.strip().strip("*").strip()
        if name not in seen:
            seen.add(name)
            out.append(MetricConcept(name, behavior.strip()))
    return out


def generate_catalog(client, domain: str) -> FailureModeCatalog:
    """Run the component, failure-mode and metric prompts and assemble the replies.

    A stage whose reply cannot be parsed is recorded in ``errors`` (with the
    raw reply) and its subtree is left empty. Only an unusable component list
    aborts, since nothing else can be asked without it.
    """
    raw = client.complete(STAGES[0], domain, template(STAGES[0]).format(domain=domain))
    components = parse_components(raw)
    if not components:
        raise UnparseableResponse(STAGES[0], raw, domain)

    errors: list[dict] = []
    built = []
    for name, subs in components:
        raw = client.complete(STAGES[1], name, template(STAGES[1]).format(domain=domain, component=name))
        modes = [m.strip() for m in bullets(raw)]
        if not modes:
            errors.append({"stage": STAGES[1], "subject": name, "raw": raw})
        fms = []
        for mode in modes:
            subject = f"{name}|{mode}"
            prompt = template(STAGES[2]).format(domain=domain, component=name, failure_mode=mode)
            raw = client.complete(STAGES[2], subject, prompt)
            metrics = parse_metrics(raw)
            if not metrics:
                errors.append({"stage": STAGES[2], "subject": subject, "raw": raw})
            fms.append(FailureMode(mode, tuple(metrics)))
        built.append(Component(name, subs, tuple(fms)))
    return FailureModeCatalog(domain, built, errors)
