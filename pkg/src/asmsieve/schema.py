"""Feature document schema: validation, canonical text, and field-level diffs.

A feature document is a flat JSON object describing one binary function in
human-readable terms. The core schema is a closed set of 21 fields grouped
into five sections (type signature, logic/operations, notable constants,
side effects, categorization). Unknown keys are preserved verbatim in an
extensions map so new features can be added without invalidating stored
documents.

Canonical form rules:
  * fields serialized in the fixed order of ``FIELD_ORDER``;
  * ``int_consts`` and ``float_consts`` sorted lexicographically;
  * ``dominant_operation_categories`` sorted in declaration order;
  * ``in_param_types`` kept positional (argument order is meaningful);
  * extension keys appended after core fields, sorted, with nested object
    keys sorted recursively;
  * no insignificant whitespace.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping

from .errors import SchemaError

SECTIONS = (
    "TypeSignature",
    "LogicOperations",
    "NotableConstants",
    "SideEffects",
    "Categorization",
)

PARAM_TYPES = ("Integer", "Pointer")
RET_TYPES = ("Integer", "Pointer", "Float", "None")
OPERATION_CATEGORIES = (
    "Arithmetic",
    "Bitwise",
    "DataMovement",
    "ConditionalBranching",
    "SubroutineCall",
    "MemoryAccess",
)
ALGO_CATEGORIES = (
    "SystemOsInteraction",
    "MemoryManagement",
    "DataProcessing",
    "ControlFlowDispatch",
    "Initialization",
    "ErrorHandling",
    "UtilityHelper",
    "CryptographicHashing",
    "InterfacingWrapper",
    "Undetermined",
)

MAX_INT_CONSTS = 15

# Values excluded from int_consts: 0, 1, and -1 at common register widths.
TRIVIAL_CONSTANTS = frozenset({0, 1} | {(1 << w) - 1 for w in (8, 16, 32, 64, 128)})


@dataclass(frozen=True)
class FieldSpec:
    name: str
    section: str
    kind: str  # count | bool | enum | param_types | cat_array | hex_array | dec_array
    values: tuple[str, ...] = ()
    hint: str = ""  # one-line request text used by the prompt builder


FIELDS: tuple[FieldSpec, ...] = (
    FieldSpec("in_param_cnt", "TypeSignature", "count",
              hint="integer >= 0: how many distinct conceptual inputs the routine consumes"),
    FieldSpec("in_param_types", "TypeSignature", "param_types", PARAM_TYPES,
              hint='array with one entry per input, each "Integer" or "Pointer", in argument order'),
    FieldSpec("ret_type", "TypeSignature", "enum", RET_TYPES,
              hint='"Integer", "Pointer", "Float", or "None" when nothing is returned'),
    FieldSpec("dominant_operation_categories", "LogicOperations", "cat_array", OPERATION_CATEGORIES,
              hint="non-empty array naming the kinds of work that dominate the body"),
    FieldSpec("loop", "LogicOperations", "bool",
              hint="true when a branch targets an earlier instruction or an iterative construct is present"),
    FieldSpec("jump_table", "LogicOperations", "bool",
              hint="true when control transfers through a computed/indirect jump over a table"),
    FieldSpec("indexed_addr", "LogicOperations", "bool",
              hint="true when memory is addressed as base + index (optionally scaled)"),
    FieldSpec("simd", "LogicOperations", "bool",
              hint="true when vector instructions or wide vector registers are used"),
    FieldSpec("subcall_targets", "LogicOperations", "count",
              hint="integer >= 0: how many distinct routines are called"),
    FieldSpec("int_consts", "NotableConstants", "hex_array",
              hint='array of at most 15 distinctive integer literals as lowercase hex strings ("0x1f2e"); '
                   "leave out 0, 1, -1 and other unremarkable values"),
    FieldSpec("float_consts", "NotableConstants", "dec_array",
              hint="array of floating-point literals as decimal strings"),
    FieldSpec("imm_values_cnt", "NotableConstants", "count",
              hint="integer >= 0: how many distinct literal values appear in the body"),
    FieldSpec("string_literals", "NotableConstants", "bool",
              hint="true when the code references identifiable text strings"),
    FieldSpec("mutates_inputs", "SideEffects", "bool",
              hint="true when memory reached through an input pointer is written"),
    FieldSpec("mutates_globals", "SideEffects", "bool",
              hint="true when fixed or global addresses are written"),
    FieldSpec("mem_alloc", "SideEffects", "bool",
              hint="true when dynamic memory is acquired or released"),
    FieldSpec("io_ops", "SideEffects", "bool",
              hint="true when the routine appears to read or write external data"),
    FieldSpec("block_mem_ops", "SideEffects", "bool",
              hint="true when large memory regions are copied or filled"),
    FieldSpec("error_handling", "SideEffects", "bool",
              hint="true when results of calls are checked and failure paths taken"),
    FieldSpec("interrupts_syscalls", "SideEffects", "count",
              hint="integer >= 0: how many instructions trap into the kernel"),
    FieldSpec("inferred_algo", "Categorization", "enum", ALGO_CATEGORIES,
              hint="one label for the routine's overall purpose: " + ", ".join(ALGO_CATEGORIES)),
)

FIELD_ORDER: tuple[str, ...] = tuple(f.name for f in FIELDS)
FIELD_BY_NAME: dict[str, FieldSpec] = {f.name: f for f in FIELDS}
SECTION_FIELDS: dict[str, tuple[str, ...]] = {
    s: tuple(f.name for f in FIELDS if f.section == s) for s in SECTIONS
}

_CANON_STRIP = re.compile(r"[^a-z0-9]+")


def _canon_key(text: str) -> str:
    return _CANON_STRIP.sub("", text.lower())


def _alias_table(values: Iterable[str], extra: Mapping[str, str]) -> dict[str, str]:
    table = {_canon_key(v): v for v in values}
    for alias, target in extra.items():
        table[_canon_key(alias)] = target
    return table

# Tolerated input spellings, normalized to canonical casing on validation.
PARAM_TYPE_ALIASES = _alias_table(PARAM_TYPES, {"ptr": "Pointer", "int": "Integer"})
RET_TYPE_ALIASES = _alias_table(
    RET_TYPES, {"ptr": "Pointer", "int": "Integer", "void": "None", "null": "None"}
)
CATEGORY_ALIASES = _alias_table(OPERATION_CATEGORIES, {})
ALGO_ALIASES = _alias_table(
    ALGO_CATEGORIES,
    {
        "system/OS interaction": "SystemOsInteraction",
        "data processing or transformation": "DataProcessing",
        "control-flow or dispatch": "ControlFlowDispatch",
        "control flow": "ControlFlowDispatch",
        "dispatch": "ControlFlowDispatch",
        "utility/helper": "UtilityHelper",
        "cryptographic or hashing": "CryptographicHashing",
        "hashing": "CryptographicHashing",
        "interfacing/wrapper": "InterfacingWrapper",
        "wrapper": "InterfacingWrapper",
    },
)

_HEX_STRING = re.compile(r"^(0[xX])?0*([0-9a-fA-F]+)$")


def normalize_hex_constant(value: Any) -> str:
    """Normalize an integer literal to lowercase ``0x`` hex without leading zeros."""
    if isinstance(value, bool):
        raise SchemaError(f"integer constant may not be a boolean: {value!r}")
    if isinstance(value, int):
        if value < 0:
            raise SchemaError(f"integer constant may not be negative: {value}")
        n = value
    elif isinstance(value, str):
        m = _HEX_STRING.match(value.strip())
        if not m:
            raise SchemaError(f"not a hexadecimal constant: {value!r}")
        n = int(m.group(2), 16)
    else:
        raise SchemaError(f"integer constant must be a string or integer: {value!r}")
    return f"0x{n:x}"


def is_trivial_constant(value: int) -> bool:
    return value in TRIVIAL_CONSTANTS


def _require_bool(name: str, value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str):
        key = _canon_key(value)
        if key == "true":
            return True
        if key == "false":
            return False
    raise SchemaError(f"field {name!r} must be a boolean, got {value!r}")


def _require_count(name: str, value: Any) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"field {name!r} must be an integer, got {value!r}")
    if value < 0:
        raise SchemaError(f"field {name!r} must be >= 0, got {value}")
    return value


def _require_enum(name: str, value: Any, aliases: Mapping[str, str]) -> str:
    if value is None and name == "ret_type":
        return "None"
    if not isinstance(value, str):
        raise SchemaError(f"field {name!r} must be a string, got {value!r}")
    canonical = aliases.get(_canon_key(value))
    if canonical is None:
        raise SchemaError(f"field {name!r} has unknown value {value!r}")
    return canonical


def _validate_field(name: str, value: Any) -> Any:
    spec = FIELD_BY_NAME[name]
    if spec.kind == "bool":
        return _require_bool(name, value)
    if spec.kind == "count":
        return _require_count(name, value)
    if spec.kind == "enum":
        aliases = RET_TYPE_ALIASES if name == "ret_type" else ALGO_ALIASES
        return _require_enum(name, value, aliases)
    if not isinstance(value, (list, tuple)):
        raise SchemaError(f"field {name!r} must be an array, got {value!r}")
    if spec.kind == "param_types":
        return tuple(_require_enum(name, v, PARAM_TYPE_ALIASES) for v in value)
    if spec.kind == "cat_array":
        cats = [_require_enum(name, v, CATEGORY_ALIASES) for v in value]
        if not cats:
            raise SchemaError(f"field {name!r} must not be empty")
        if len(set(cats)) != len(cats):
            raise SchemaError(f"field {name!r} contains duplicates: {value!r}")
        order = {c: i for i, c in enumerate(OPERATION_CATEGORIES)}
        return tuple(sorted(cats, key=order.__getitem__))
    if spec.kind == "hex_array":
        seen: dict[str, int] = {}
        for v in value:
            text = normalize_hex_constant(v)
            n = int(text, 16)
            if is_trivial_constant(n):
                raise SchemaError(f"field {name!r} contains trivial constant {text}")
            seen.setdefault(text, n)
        if len(seen) > MAX_INT_CONSTS:
            raise SchemaError(
                f"field {name!r} holds {len(seen)} constants, limit is {MAX_INT_CONSTS}"
            )
        return tuple(sorted(seen))
    if spec.kind == "dec_array":
        out: list[str] = []
        for v in value:
            if isinstance(v, bool):
                raise SchemaError(f"field {name!r} entries must be numbers or strings")
            if isinstance(v, (int, float)):
                text = json.dumps(v)
            elif isinstance(v, str):
                text = v.strip()
                try:
                    float(text)
                except ValueError:
                    raise SchemaError(f"field {name!r} entry is not numeric: {v!r}") from None
            else:
                raise SchemaError(f"field {name!r} entries must be numbers or strings")
            if text not in out:
                out.append(text)
        return tuple(sorted(out))
    raise AssertionError(f"unhandled field kind {spec.kind}")


@dataclass(frozen=True)
class FeatureSet:
    """A validated feature document. ``fields`` holds normalized core fields
    (possibly a subset, for partial documents); unknown keys live in
    ``extensions`` untouched."""

    fields: dict[str, Any]
    extensions: dict[str, Any] = field(default_factory=dict)

    def __getitem__(self, name: str) -> Any:
        return self.fields[name]

    def get(self, name: str, default: Any = None) -> Any:
        return self.fields.get(name, default)

    def __contains__(self, name: str) -> bool:
        return name in self.fields

    @property
    def present_fields(self) -> tuple[str, ...]:
        return tuple(n for n in FIELD_ORDER if n in self.fields)

    def as_dict(self) -> dict[str, Any]:
        """Plain JSON-ready dict in canonical key order (tuples become lists)."""
        out: dict[str, Any] = {}
        for name in FIELD_ORDER:
            if name in self.fields:
                value = self.fields[name]
                out[name] = list(value) if isinstance(value, tuple) else value
        for key in sorted(self.extensions):
            out[key] = self.extensions[key]
        return out


def validate(doc: Mapping[str, Any], required_fields: Iterable[str] | None = None) -> FeatureSet:
    """Validate a parsed JSON object into a FeatureSet.

    ``required_fields`` defaults to the full core schema; pass a subset to
    validate partial documents (e.g. when prompt sections are disabled).
    Unknown keys are kept as extensions. Raises SchemaError on any missing
    field, type mismatch, or invariant violation.
    """
    if not isinstance(doc, Mapping):
        raise SchemaError(f"feature document must be a JSON object, got {type(doc).__name__}")
    if required_fields is None:
        required = set(FIELD_ORDER)
    else:
        required = set(required_fields)
        unknown = required - set(FIELD_ORDER)
        if unknown:
            raise SchemaError(f"unknown required field(s): {sorted(unknown)}")

    fields: dict[str, Any] = {}
    extensions: dict[str, Any] = {}
    for key, value in doc.items():
        if key in FIELD_BY_NAME:
            fields[key] = _validate_field(key, value)
        else:
            extensions[key] = value

    missing = sorted(required - fields.keys())
    if missing:
        raise SchemaError(f"missing required field(s): {', '.join(missing)}")

    if "in_param_cnt" in fields and "in_param_types" in fields:
        cnt, types = fields["in_param_cnt"], fields["in_param_types"]
        if len(types) != cnt:
            raise SchemaError(
                f"in_param_types has {len(types)} entries but in_param_cnt is {cnt}"
            )
    return FeatureSet(fields=fields, extensions=extensions)


def _sorted_json(value: Any) -> Any:
    if isinstance(value, dict):
        return {k: _sorted_json(value[k]) for k in sorted(value)}
    if isinstance(value, (list, tuple)):
        return [_sorted_json(v) for v in value]
    return value


def canonicalize(fs: FeatureSet) -> str:
    """Byte-deterministic serialization; a fixpoint under validate+canonicalize."""
    out: dict[str, Any] = {}
    for name in FIELD_ORDER:
        if name in fs.fields:
            value = fs.fields[name]
            out[name] = list(value) if isinstance(value, tuple) else value
    for key in sorted(fs.extensions):
        out[key] = _sorted_json(fs.extensions[key])
    return json.dumps(out, separators=(",", ":"))


@dataclass(frozen=True)
class FieldDiff:
    """One differing field. For array fields ``added``/``removed`` carry the
    set difference (right minus left / left minus right)."""

    field: str
    left: Any = None
    right: Any = None
    left_present: bool = True
    right_present: bool = True
    added: tuple = ()
    removed: tuple = ()

    def as_dict(self) -> dict[str, Any]:
        def plain(v: Any) -> Any:
            return list(v) if isinstance(v, tuple) else v

        out: dict[str, Any] = {
            "field": self.field,
            "left": plain(self.left) if self.left_present else None,
            "right": plain(self.right) if self.right_present else None,
        }
        if not self.left_present:
            out["left_present"] = False
        if not self.right_present:
            out["right_present"] = False
        if self.added or self.removed:
            out["added"] = list(self.added)
            out["removed"] = list(self.removed)
        return out


_ARRAY_KINDS = {"param_types", "cat_array", "hex_array", "dec_array"}


def diff(a: FeatureSet, b: FeatureSet) -> list[FieldDiff]:
    """Field-level differences in fixed order; empty iff canonical texts match."""
    out: list[FieldDiff] = []
    ext_keys = sorted(set(a.extensions) | set(b.extensions))
    for name in FIELD_ORDER + tuple(ext_keys):
        if name in FIELD_BY_NAME:
            in_a, in_b = name in a.fields, name in b.fields
            va = a.fields.get(name)
            vb = b.fields.get(name)
        else:
            in_a, in_b = name in a.extensions, name in b.extensions
            va = a.extensions.get(name)
            vb = b.extensions.get(name)
        if in_a == in_b and va == vb:
            continue
        added: tuple = ()
        removed: tuple = ()
        if (
            name in FIELD_BY_NAME
            and FIELD_BY_NAME[name].kind in _ARRAY_KINDS
            and in_a
            and in_b
        ):
            sa, sb = set(va), set(vb)
            added = tuple(sorted(sb - sa))
            removed = tuple(sorted(sa - sb))
        out.append(
            FieldDiff(
                field=name,
                left=va,
                right=vb,
                left_present=in_a,
                right_present=in_b,
                added=added,
                removed=removed,
            )
        )
    return out


def load_features(path) -> dict[str, FeatureSet]:
    """Read a features file (JSON lines of ``{"id": ..., "features": {...}}``)."""
    out: dict[str, FeatureSet] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict) or "id" not in obj or "features" not in obj:
                raise SchemaError(f"{path}:{line_no}: expected keys 'id' and 'features'")
            fs = validate(obj["features"], required_fields=obj.get("present") or None)
            out[obj["id"]] = fs
    return out


def save_features(path, features: Mapping[str, FeatureSet]) -> None:
    """Write a features file. Partial documents record their present fields so
    they re-validate on load."""
    with open(path, "w", encoding="utf-8") as fh:
        for fid, fs in features.items():
            record: dict[str, Any] = {"id": fid}
            if fs.present_fields != FIELD_ORDER:
                record["present"] = list(fs.present_fields)
            prefix = json.dumps(record, separators=(",", ":"))
            fh.write(prefix[:-1] + ',"features":' + canonicalize(fs) + "}\n")
