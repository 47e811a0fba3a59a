"""PTX parsing: kernel extraction, block splitting, def-use graph construction.

Only executable statements, labels, predicated branches, and ret are modeled.
Directives are skipped. Predicated instructions count as unconditionally
executed; the predicate register is a plain use.
"""

from __future__ import annotations

import re

from gpukalc.errors import PtxParseError
from gpukalc.ptx.classify import OpcodeTable, classify, default_table, is_branch
from gpukalc.ptx.types import BasicBlock, KernelGraph, PtxInstruction

ENTRY_RE = re.compile(r"\.entry\s+([A-Za-z_$][\w$]*)")
LABEL_RE = re.compile(r"^([A-Za-z_$][\w$]*):")
PRED_RE = re.compile(r"^@(!?)(%[A-Za-z_$][\w$]*)\s+")
REG_RE = re.compile(r"%[A-Za-z_$][\w$]*(?:\.[xyzw])?")

# Read-only hardware registers; they appear as sources and never as producers.
SPECIAL_REGS = frozenset(
    "%tid %ntid %ctaid %nctaid %laneid %warpid %nwarpid %smid %nsmid "
    "%gridid %clock %clock64 %clock_hi %lanemask_eq %lanemask_le "
    "%lanemask_lt %lanemask_ge %lanemask_gt %WARP_SZ".split()
)

# Roots whose first operand is not a destination register.
NO_DEF_ROOTS = frozenset(
    "st bra bar ret call exit red membar fence trap nop prefetch".split()
)


def _strip_comments(text: str) -> str:
    # Preserve newlines so reported line numbers match the input.
    def _blank(m: re.Match) -> str:
        return "\n" * m.group(0).count("\n")

    text = re.sub(r"/\*.*?\*/", _blank, text, flags=re.S)
    return re.sub(r"//[^\n]*", "", text)


def _extract_body(text: str, kernel_name: str) -> tuple[str, int]:
    """Return the brace-delimited body of the named kernel and its start line."""
    names = []
    for m in ENTRY_RE.finditer(text):
        names.append(m.group(1))
        if m.group(1) != kernel_name:
            continue
        i = text.index("{", m.end())
        depth = 0
        for j in range(i, len(text)):
            if text[j] == "{":
                depth += 1
            elif text[j] == "}":
                depth -= 1
                if depth == 0:
                    body = text[i + 1 : j]
                    return body, text.count("\n", 0, i) + 1
        raise PtxParseError(f"unbalanced braces in kernel '{kernel_name}'")
    found = ", ".join(names) if names else "none"
    raise PtxParseError(f"kernel '{kernel_name}' not found (entries: {found})")


def _split_operands(s: str) -> list[str]:
    """Split on top-level commas; brackets, braces, and parens nest."""
    parts, depth, start = [], 0, 0
    for i, ch in enumerate(s):
        if ch in "[{(":
            depth += 1
        elif ch in "]})":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(s[start:i].strip())
            start = i + 1
    tail = s[start:].strip()
    if tail:
        parts.append(tail)
    return parts


def _is_special(reg: str) -> bool:
    return reg.split(".")[0] in SPECIAL_REGS


def parse_instruction(
    stmt: str,
    line: int,
    *,
    table: OpcodeTable | None = None,
    strict: bool = False,
) -> PtxInstruction:
    """Parse one statement (no trailing semicolon) into a classified instruction."""
    table = table or default_table()
    stmt = stmt.strip()
    predicate = None
    m = PRED_RE.match(stmt)
    if m:
        predicate = ("!" if m.group(1) else "") + m.group(2)
        stmt = stmt[m.end() :].strip()
    if not stmt:
        raise PtxParseError("empty statement after predicate", line)
    parts = stmt.split(None, 1)
    head, rest = parts[0], (parts[1] if len(parts) > 1 else "")
    if not re.fullmatch(r"[A-Za-z][\w.]*", head):
        raise PtxParseError(f"unparseable instruction '{stmt}'", line)
    root, *suffix_parts = head.split(".")
    suffixes = tuple("." + s for s in suffix_parts)
    operands = tuple(_split_operands(rest))

    klass, resource = classify(root, suffixes, table=table, strict=strict)
    defs: set[str] = set()
    uses: set[str] = set()
    for i, op in enumerate(operands):
        regs = REG_RE.findall(op)
        if i == 0 and root not in NO_DEF_ROOTS:
            defs.update(r for r in regs if not _is_special(r))
            uses.update(r for r in regs if _is_special(r))
            # Address arithmetic inside a destination operand is a read.
            if op.startswith("["):
                uses.update(regs)
                defs.clear()
        else:
            uses.update(regs)
    if predicate:
        uses.add(predicate.lstrip("!"))

    return PtxInstruction(
        root=root,
        suffixes=suffixes,
        klass=klass,
        resource=resource,
        defs=frozenset(defs),
        uses=frozenset(uses),
        predicate=predicate,
        is_branch=is_branch(root, table=table),
        operands=operands,
        line=line,
    )


def build_dfg(block: BasicBlock) -> BasicBlock:
    """Add producer-to-consumer edges over register def-use, last writer wins."""
    last_writer: dict[str, int] = {}
    edges: set[tuple[int, int]] = set()
    for idx, inst in enumerate(block.instructions):
        for reg in inst.uses:
            if reg in last_writer:
                edges.add((last_writer[reg], idx))
        for reg in inst.defs:
            last_writer[reg] = idx
    block.dfg_edges = sorted(edges)
    return block


def parse_ptx(
    text: str,
    kernel_name: str,
    *,
    loop_counts: dict[str, int] | None = None,
    opcode_table: OpcodeTable | None = None,
    strict_opcodes: bool = False,
) -> KernelGraph:
    """Parse the named .entry kernel into a CFG with per-block def-use DAGs.

    loop_counts maps a loop head label (the back-edge target) to its
    iteration count; unknown labels in the map are rejected.
    """
    table = opcode_table or default_table()
    clean = _strip_comments(text)
    body, body_line = _extract_body(clean, kernel_name)

    blocks: list[BasicBlock] = []
    current = BasicBlock(label="")
    explicit_label = False

    def close_block() -> None:
        nonlocal current, explicit_label
        if current.instructions or explicit_label:
            blocks.append(current)
        current = BasicBlock(label="")
        explicit_label = False

    for offset, rawline in enumerate(body.split("\n")):
        line_no = body_line + offset
        line = rawline.strip()
        while line:
            lm = LABEL_RE.match(line)
            if lm:
                if current.instructions or explicit_label:
                    close_block()
                current.label = lm.group(1)
                explicit_label = True
                line = line[lm.end() :].strip()
                continue
            if line.startswith((".", "{", "}")):
                # Directives and scope braces carry no instructions.
                break
            stmt, semi, line = line.partition(";")
            stmt = stmt.strip()
            line = line.strip()
            if not stmt:
                continue
            if not semi:
                raise PtxParseError(f"missing ';' after '{stmt}'", line_no)
            inst = parse_instruction(stmt, line_no, table=table, strict=strict_opcodes)
            current.instructions.append(inst)
            if inst.is_branch or inst.root in ("ret", "exit"):
                close_block()
    close_block()

    if not blocks:
        raise PtxParseError(f"kernel '{kernel_name}' has an empty body")
    label_map: dict[str, int] = {}
    for i, b in enumerate(blocks):
        if not b.label:
            b.label = f"bb{i}"
        if b.label in label_map:
            raise PtxParseError(f"duplicate label '{b.label}'")
        label_map[b.label] = i

    graph = KernelGraph(name=kernel_name, blocks=blocks)
    for i, b in enumerate(blocks):
        last = b.instructions[-1] if b.instructions else None
        if last is not None and last.is_branch:
            target = last.operands[0] if last.operands else ""
            if target not in label_map:
                raise PtxParseError(
                    f"branch to unknown label '{target}'", last.line
                )
            t = label_map[target]
            if t <= i:
                graph.back_edges[(i, t)] = None
            else:
                graph.edges.append((i, t))
            if last.predicate is not None and i + 1 < len(blocks):
                graph.edges.append((i, i + 1))
        elif last is not None and last.root in ("ret", "exit") and not last.predicate:
            pass
        elif i + 1 < len(blocks):
            graph.edges.append((i, i + 1))

    counts = dict(loop_counts or {})
    for (src, dst) in graph.back_edges:
        head = blocks[dst].label
        if head in counts:
            graph.back_edges[(src, dst)] = counts.pop(head)
        for k in range(dst, src + 1):
            blocks[k].in_loop = True
    if counts:
        raise PtxParseError(
            "loop counts for labels that head no loop: " + ", ".join(sorted(counts))
        )

    for b in blocks:
        build_dfg(b)
    return graph
