# tools/schema.py
"""
Normalized tool descriptions.

Parameters use a small constraint language in ``constraint`` text, e.g.
``enum:metric|imperial``, ``min:1``, ``max:10``, ``maxlen:200``,
``pattern:^[A-Z]{3}$``; several constraints are separated by ``;``.
They are compiled to JSON Schema and checked with ``jsonschema``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping

from core.errors import InvalidSchemaError
from core.trace import ErrorClass


class Category(str, Enum):
    FILE_MANAGEMENT = "file_management"
    INFORMATION_RETRIEVAL = "information_retrieval"
    IMAGE_GENERATION = "image_generation"
    DATA_ANALYSIS = "data_analysis"
    OTHER = "other"


class CostClass(str, Enum):
    CHEAP = "cheap"
    EXPENSIVE = "expensive"


SEMANTIC_TYPES = {
    "string": {"type": "string"},
    "text": {"type": "string"},
    "url": {"type": "string", "pattern": r"^https?://\S+$"},
    "date": {"type": "string", "pattern": r"^\d{4}-\d{2}-\d{2}$"},
    "city": {"type": "string", "minLength": 1},
    "path": {"type": "string", "minLength": 1},
    "integer": {"type": "integer"},
    "number": {"type": "number"},
    "boolean": {"type": "boolean"},
    "list": {"type": "array"},
}


# ── Tool failures raised by executors ────────────────────────────────────────

class ToolFailure(Exception):
    error_class = ErrorClass.TOOL_CRASH


class TransientNetworkFailure(ToolFailure):
    error_class = ErrorClass.TRANSIENT_NETWORK


class ToolTimeoutFailure(ToolFailure):
    error_class = ErrorClass.TIMEOUT


class InvalidArgumentsFailure(ToolFailure):
    error_class = ErrorClass.INVALID_ARGUMENTS


class ToolNotFoundFailure(ToolFailure):
    error_class = ErrorClass.TOOL_NOT_FOUND


class ToolCrashFailure(ToolFailure):
    error_class = ErrorClass.TOOL_CRASH


FAILURE_TYPES = {
    cls.error_class: cls
    for cls in (
        TransientNetworkFailure,
        ToolTimeoutFailure,
        InvalidArgumentsFailure,
        ToolNotFoundFailure,
        ToolCrashFailure,
    )
}


# ── Schema types ─────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Parameter:
    name: str
    semantic_type: str = "string"
    required: bool = True
    constraint: str = ""

    def json_schema(self) -> dict:
        if self.semantic_type not in SEMANTIC_TYPES:
            raise InvalidSchemaError(f"parameter {self.name!r}: unknown type {self.semantic_type!r}")
        schema = dict(SEMANTIC_TYPES[self.semantic_type])
        for clause in filter(None, (c.strip() for c in self.constraint.split(";"))):
            key, _, value = clause.partition(":")
            key = key.strip().lower()
            try:
                if key == "enum":
                    schema["enum"] = [v.strip() for v in value.split("|")]
                elif key == "min":
                    schema["minimum"] = float(value)
                elif key == "max":
                    schema["maximum"] = float(value)
                elif key == "maxlen":
                    schema["maxLength"] = int(value)
                elif key == "minlen":
                    schema["minLength"] = int(value)
                elif key == "pattern":
                    schema["pattern"] = value.strip()
                else:
                    raise InvalidSchemaError(f"parameter {self.name!r}: unknown constraint {key!r}")
            except ValueError:
                raise InvalidSchemaError(f"parameter {self.name!r}: bad {key} value {value.strip()!r}") from None
        return schema

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "type": self.semantic_type,
            "required": self.required,
            "constraint": self.constraint,
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "Parameter":
        return cls(
            name=str(rec["name"]),
            semantic_type=str(rec.get("type", "string")),
            required=bool(rec.get("required", True)),
            constraint=str(rec.get("constraint", "")),
        )


@dataclass(frozen=True)
class ToolSchema:
    tool_name: str
    category: Category
    description: str
    enriched_description: str = ""
    parameters: tuple[Parameter, ...] = ()
    output_description: str = ""
    cost_class: CostClass = CostClass.CHEAP
    preconditions: str = ""
    confirmation_prompt: str = ""
    keywords: tuple[str, ...] = ()
    metadata: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        try:
            object.__setattr__(self, "category", Category(self.category))
            object.__setattr__(self, "cost_class", CostClass(self.cost_class))
        except ValueError as exc:
            raise InvalidSchemaError(f"{self.tool_name}: {exc}") from None
        # canonical form: required parameters first, otherwise stable
        params = tuple(self.parameters)
        ordered = tuple(p for p in params if p.required) + tuple(p for p in params if not p.required)
        object.__setattr__(self, "parameters", ordered)
        object.__setattr__(self, "keywords", tuple(k.lower() for k in self.keywords))

    def validate(self) -> None:
        if not self.tool_name or not self.tool_name.strip():
            raise InvalidSchemaError("tool_name must be nonempty")
        if not self.description.strip():
            raise InvalidSchemaError(f"{self.tool_name}: description must be nonempty")
        names = [p.name for p in self.parameters]
        if len(names) != len(set(names)):
            raise InvalidSchemaError(f"{self.tool_name}: duplicate parameter names")
        if self.cost_class is CostClass.EXPENSIVE and not self.confirmation_prompt.strip():
            raise InvalidSchemaError(f"{self.tool_name}: expensive tools need a confirmation prompt")
        for p in self.parameters:
            p.json_schema()

    @property
    def is_expensive(self) -> bool:
        return self.cost_class is CostClass.EXPENSIVE

    def consumes_urls(self) -> list[str]:
        return [p.name for p in self.parameters if p.semantic_type == "url"]

    def embedding_text(self) -> str:
        """Name + enriched description + category label, the text the index embeds."""
        return " ".join([
            self.tool_name.replace("_", " "),
            self.enriched_description or self.description,
            self.category.value.replace("_", " "),
        ])

    def input_schema(self) -> dict:
        return {
            "type": "object",
            "properties": {p.name: p.json_schema() for p in self.parameters},
            "required": [p.name for p in self.parameters if p.required],
            "additionalProperties": False,
        }

    def signature(self) -> str:
        args = ", ".join(
            f"{p.name}: {p.semantic_type}" + ("" if p.required else " = None") for p in self.parameters
        )
        return f"{self.tool_name}({args})"

    def to_record(self) -> dict:
        return {
            "tool_name": self.tool_name,
            "category": self.category.value,
            "description": self.description,
            "enriched_description": self.enriched_description,
            "parameters": [p.to_record() for p in self.parameters],
            "output_description": self.output_description,
            "cost_class": self.cost_class.value,
            "preconditions": self.preconditions,
            "confirmation_prompt": self.confirmation_prompt,
            "keywords": list(self.keywords),
        }

    @classmethod
    def from_record(cls, rec: Mapping) -> "ToolSchema":
        try:
            return cls(
                tool_name=str(rec["tool_name"]),
                category=rec.get("category", "other"),
                description=str(rec.get("description", "")),
                enriched_description=str(rec.get("enriched_description", "")),
                parameters=tuple(Parameter.from_record(p) for p in rec.get("parameters") or ()),
                output_description=str(rec.get("output_description", "")),
                cost_class=rec.get("cost_class", "cheap"),
                preconditions=str(rec.get("preconditions", "")),
                confirmation_prompt=str(rec.get("confirmation_prompt", "")),
                keywords=tuple(rec.get("keywords") or ()),
                metadata={k: rec[k] for k in ("executor", "concurrency_safe") if k in rec},
            )
        except KeyError as exc:
            raise InvalidSchemaError(f"tool record missing {exc}") from None
