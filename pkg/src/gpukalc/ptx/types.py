"""Core IR types: classified instructions, basic blocks, and the kernel CFG."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from gpukalc.errors import ScheduleError


class InstClass(str, Enum):
    COMPUTE = "Compute"
    GLOBAL = "GlobalMemory"
    SHARED = "SharedMemory"
    MISC = "Miscellaneous"


class Resource(str, Enum):
    SP = "SP"
    SFU = "SFU"
    DPU = "DPU"
    LSU = "LSU"
    WS = "WS"


@dataclass(frozen=True)
class PtxInstruction:
    """One executable PTX statement with its classification and register sets."""

    root: str
    suffixes: tuple[str, ...]
    klass: InstClass
    resource: Resource
    defs: frozenset[str]
    uses: frozenset[str]
    predicate: str | None = None
    is_branch: bool = False
    operands: tuple[str, ...] = ()
    line: int = field(default=0, compare=False)

    @property
    def opcode(self) -> str:
        return self.root + "".join(self.suffixes)

    def text(self) -> str:
        head = f"@{self.predicate} " if self.predicate else ""
        ops = ", ".join(self.operands)
        return f"{head}{self.opcode} {ops};" if ops else f"{head}{self.opcode};"


@dataclass
class BasicBlock:
    """A straight-line instruction run plus its register def-use DAG."""

    label: str
    instructions: list[PtxInstruction] = field(default_factory=list)
    # DFG edges as (producer index, consumer index); filled by build_dfg.
    dfg_edges: list[tuple[int, int]] = field(default_factory=list)
    in_loop: bool = False

    def topo_order(self) -> list[int]:
        # Program order is a valid topological order: def-use edges only
        # point forward inside a block.
        return list(range(len(self.instructions)))


@dataclass
class KernelGraph:
    """CFG of basic blocks with back edges annotated by iteration counts."""

    name: str
    blocks: list[BasicBlock] = field(default_factory=list)
    edges: list[tuple[int, int]] = field(default_factory=list)
    # (src block index, dst block index) -> iteration count or None if unset.
    back_edges: dict[tuple[int, int], int | None] = field(default_factory=dict)
    entry: int = 0

    @property
    def exit_blocks(self) -> list[int]:
        with_out = {u for u, _ in self.edges}
        return [i for i in range(len(self.blocks)) if i not in with_out]

    def forward_preds(self, idx: int) -> list[int]:
        return [u for u, v in self.edges if v == idx]

    def topo_order(self) -> list[int]:
        """Topological order of the forward CFG, index order among ready blocks."""
        n = len(self.blocks)
        indeg = [0] * n
        for _, v in self.edges:
            indeg[v] += 1
        order: list[int] = []
        ready = sorted(i for i in range(n) if indeg[i] == 0)
        while ready:
            u = ready.pop(0)
            order.append(u)
            opened = []
            for a, b in self.edges:
                if a == u:
                    indeg[b] -= 1
                    if indeg[b] == 0:
                        opened.append(b)
            ready = sorted(ready + opened)
        if len(order) != n:
            raise ScheduleError("control-flow graph is cyclic after removing back edges")
        return order

    def loop_multipliers(self) -> list[int]:
        """Per-block product of iteration counts over every loop containing it.

        A back edge (src, dst) marks blocks dst..src (program order) as one
        loop body; nested loops multiply. Back edges without a count raise.
        """
        mult = [1] * len(self.blocks)
        for (src, dst), n_loop in self.back_edges.items():
            if n_loop is None:
                raise ScheduleError(
                    f"back edge into block '{self.blocks[dst].label}' has no "
                    "iteration count; supply one per loop"
                )
            for i in range(dst, src + 1):
                mult[i] *= n_loop
        return mult

    def pretty(self) -> str:
        """Reconstruct a parseable listing of the kernel body."""
        out = [f".visible .entry {self.name}()", "{"]
        for idx, block in enumerate(self.blocks):
            out.append(f"{block.label}:")
            for inst in block.instructions:
                out.append("\t" + inst.text())
        out.append("}")
        return "\n".join(out) + "\n"

    def structurally_equal(self, other: "KernelGraph") -> bool:
        if self.name != other.name or len(self.blocks) != len(other.blocks):
            return False
        for a, b in zip(self.blocks, other.blocks):
            if a.label != b.label or a.instructions != b.instructions:
                return False
            if sorted(a.dfg_edges) != sorted(b.dfg_edges):
                return False
        return (
            sorted(self.edges) == sorted(other.edges)
            and self.back_edges == other.back_edges
        )


def batches(n_threads: int, units: int) -> int:
    """How many issue rounds a resource needs for n_threads concurrent threads."""
    return math.ceil(n_threads / units)
