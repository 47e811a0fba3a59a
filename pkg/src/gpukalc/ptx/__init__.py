"""PTX frontend: parsing, classification, and graph construction."""

from gpukalc.ptx.classify import OpcodeTable, classify, default_table, load_opcode_table
from gpukalc.ptx.parser import build_dfg, parse_instruction, parse_ptx
from gpukalc.ptx.types import (
    BasicBlock,
    InstClass,
    KernelGraph,
    PtxInstruction,
    Resource,
    batches,
)

__all__ = [
    "BasicBlock",
    "InstClass",
    "KernelGraph",
    "OpcodeTable",
    "PtxInstruction",
    "Resource",
    "batches",
    "build_dfg",
    "classify",
    "default_table",
    "load_opcode_table",
    "parse_instruction",
    "parse_ptx",
]
