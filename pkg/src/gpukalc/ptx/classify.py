"""Opcode classification: map an opcode root plus suffixes to (class, resource).

The mapping lives in a versioned data file so users can override it without
touching code. Memory ops pick their class from the state-space suffix,
double-precision compute ops move to the DPU, and everything unknown lands in
Miscellaneous with a warning.
"""

from __future__ import annotations

import json
import logging
from functools import lru_cache
from importlib import resources as importlib_resources
from pathlib import Path

from gpukalc.errors import PtxParseError
from gpukalc.ptx.types import InstClass, Resource

log = logging.getLogger(__name__)

FLOAT_SUFFIXES = {".f16", ".f16x2", ".f32", ".f64", ".bf16"}
DOUBLE_SUFFIX = ".f64"


class OpcodeTable:
    """Loaded classification rules; immutable after construction."""

    def __init__(self, raw: dict):
        for key in ("version", "fallback", "memory_roots", "memory_spaces", "roots"):
            if key not in raw:
                raise PtxParseError(f"opcode table missing '{key}'")
        self.version = raw["version"]
        self.fallback = self._pair(raw["fallback"])
        self.memory_roots = frozenset(raw["memory_roots"])
        self.memory_spaces = {k: self._pair(v) for k, v in raw["memory_spaces"].items()}
        self.double_resource = Resource(raw.get("double_resource", "DPU"))
        self.double_exempt = frozenset(raw.get("double_exempt", ()))
        self.branch_roots = frozenset(raw.get("branch_roots", ("bra",)))
        self.roots = {k: self._pair(v) for k, v in raw["roots"].items()}

    @staticmethod
    def _pair(entry: dict) -> tuple[InstClass, Resource]:
        return InstClass(entry["class"]), Resource(entry["resource"])


@lru_cache(maxsize=None)
def _load_table(path: str | None) -> OpcodeTable:
    if path is None:
        text = (
            importlib_resources.files("gpukalc.data")
            .joinpath("opcodes.json")
            .read_text(encoding="utf-8")
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    return OpcodeTable(json.loads(text))


def default_table() -> OpcodeTable:
    return _load_table(None)


def load_opcode_table(path: str | Path) -> OpcodeTable:
    return _load_table(str(path))


def classify(
    opcode: str,
    suffixes: list[str] | tuple[str, ...],
    *,
    table: OpcodeTable | None = None,
    strict: bool = False,
) -> tuple[InstClass, Resource]:
    """Classify one opcode root given its type/space suffixes.

    Raises PtxParseError for unknown roots only when strict is set;
    otherwise they classify as the fallback with a one-time warning.
    """
    table = table or default_table()
    if opcode in table.memory_roots:
        for suf in suffixes:
            space = suf.lstrip(".")
            if space in table.memory_spaces:
                return table.memory_spaces[space]
        return table.memory_spaces[""]
    if opcode in table.roots:
        klass, resource = table.roots[opcode]
        if (
            klass is InstClass.COMPUTE
            and DOUBLE_SUFFIX in suffixes
            and opcode not in table.double_exempt
        ):
            resource = table.double_resource
        return klass, resource
    if strict:
        raise PtxParseError(f"unknown opcode '{opcode}'")
    log.warning("unknown opcode '%s': classified as %s", opcode, table.fallback[0].value)
    return table.fallback


def is_branch(opcode: str, *, table: OpcodeTable | None = None) -> bool:
    table = table or default_table()
    return opcode in table.branch_roots
