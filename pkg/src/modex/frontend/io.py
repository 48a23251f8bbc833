"""JSON structure files (format tag ``modex/1``).

A structure file looks like::

    {"format": "modex/1", "domain": ["a", "b"], "vocab": {"Edge": 2},
     "atoms": {"Edge(a,b)": "t", "Edge(b,a)": "f"}}

Atoms not listed are ``u``.  The ``format`` field is always written and
optional on input.  Files are validated against a JSON schema
and errors carry a JSON pointer to the offending field.
"""
from __future__ import annotations

import json
from typing import IO, Iterable

import jsonschema

from ..lattice import PartialStructure, Signature, SignatureError, TruthValue

FORMAT = "modex/1"

_VALUE = {"enum": ["t", "f", "u", "i"]}

STRUCTURE_SCHEMA = {
    "type": "object",
    "required": ["domain", "vocab"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": FORMAT},
        "domain": {"type": "array", "items": {"type": "string", "minLength": 1}, "minItems": 1},
        "vocab": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
        "atoms": {"type": "object", "additionalProperties": _VALUE},
    },
}

MODELS_SCHEMA = {
    "type": "object",
    "required": ["format", "domain", "vocab", "models"],
    "additionalProperties": False,
    "properties": {
        "format": {"const": FORMAT},
        "domain": STRUCTURE_SCHEMA["properties"]["domain"],
        "vocab": STRUCTURE_SCHEMA["properties"]["vocab"],
        "models": {"type": "array", "items": {"type": "object", "additionalProperties": _VALUE}},
    },
}


class StructureFormatError(ValueError):
    def __init__(self, msg: str, pointer: str = ""):
        self.pointer = pointer
        super().__init__(f"{pointer or '/'}: {msg}")


def _pointer(path: Iterable) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


def _validate(obj, schema) -> None:
    validator = jsonschema.Draft202012Validator(schema)
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise StructureFormatError(err.message, _pointer(err.absolute_path))


def structure_from_json(obj, sig: Signature | None = None) -> PartialStructure:
    """Build a structure from a decoded JSON object.

    With ``sig`` given, the file's domain and vocabulary must match it and
    the structure is built over ``sig``.
    """
    _validate(obj, STRUCTURE_SCHEMA)
    try:
        own = Signature(obj["domain"], list(obj["vocab"].items()))
    except SignatureError as exc:
        raise StructureFormatError(str(exc), "/domain") from None
    if sig is not None:
        if tuple(obj["domain"]) != sig.domain:
            raise StructureFormatError(f"domain {obj['domain']} does not match the problem domain {list(sig.domain)}", "/domain")
        if dict(obj["vocab"]) != dict(sig.vocab):
            raise StructureFormatError("vocabulary does not match the problem vocabulary", "/vocab")
        own = sig
    buf = bytearray(len(own))
    for text, v in obj.get("atoms", {}).items():
        try:
            k = own.parse_atom(text)
        except SignatureError as exc:
            raise StructureFormatError(str(exc), _pointer(["atoms", text])) from None
        buf[k] = TruthValue.parse(v)
    return PartialStructure(own, bytes(buf))


def read_structure(src: str | IO[str], sig: Signature | None = None) -> PartialStructure:
    if isinstance(src, str):
        with open(src, encoding="utf-8") as fh:
            text = fh.read()
    else:
        text = src.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise StructureFormatError(f"invalid JSON: {exc}") from None
    return structure_from_json(obj, sig)


def _header(sig: Signature) -> dict:
    return {"format": FORMAT, "domain": list(sig.domain), "vocab": dict(sig.vocab)}


def _atoms(b: PartialStructure) -> dict:
    return {b.sig.format_atom(k): TruthValue(v).symbol for k, v in enumerate(b.data) if v}


def structure_to_json(b: PartialStructure) -> dict:
    obj = _header(b.sig)
    obj["atoms"] = _atoms(b)
    return obj


def dumps_structure(b: PartialStructure) -> str:
    """Canonical text: atoms in index order, unknown atoms omitted."""
    return json.dumps(structure_to_json(b), indent=2) + "\n"


def write_structure(b: PartialStructure, dst: str | IO[str]) -> None:
    text = dumps_structure(b)
    if isinstance(dst, str):
        with open(dst, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        dst.write(text)


def dumps_models(models: list[PartialStructure], sig: Signature) -> str:
    obj = _header(sig)
    obj["models"] = [_atoms(m) for m in models]
    return json.dumps(obj, indent=2) + "\n"


def write_models(models: list[PartialStructure], sig: Signature, dst: str | IO[str]) -> None:
    text = dumps_models(models, sig)
    if isinstance(dst, str):
        with open(dst, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        dst.write(text)


def read_models(src: str | IO[str], sig: Signature) -> list[PartialStructure]:
    if isinstance(src, str):
        with open(src, encoding="utf-8") as fh:
            obj = json.load(fh)
    else:
        obj = json.load(src)
    _validate(obj, MODELS_SCHEMA)
    out = []
    for j, atoms in enumerate(obj["models"]):
        out.append(structure_from_json({**_header(sig), "atoms": atoms}, sig))
    return out


def format_model(m: PartialStructure) -> str:
    """One-line text form listing every assigned atom."""
    sig = m.sig
    return "{" + ", ".join(f"{sig.format_atom(k)}={TruthValue(v).symbol}" for k, v in enumerate(m.data) if v) + "}"
