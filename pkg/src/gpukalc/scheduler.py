"""Greedy list scheduler that predicts kernel execution time in cycles.

Instructions are placed in program order onto per-resource reservation
tables. An instruction becomes ready when every producer it depends on has
finished, then starts at the earliest point its functional unit has a free
span. Block delays compose across the CFG in topological order, loop bodies
multiply by their trip counts, and the kernel total adds launch overhead
plus contention penalties for global, shared, and L2 cache traffic.
"""

from __future__ import annotations

import math
from bisect import insort
from collections import defaultdict
from dataclasses import dataclass

from gpukalc.errors import ScheduleError
from gpukalc.profiles import (
    ArchProfile,
    cycles_from_us,
    global_mem_latency,
    latency_of,
    launch_overhead_us,
    mem_throughput,
    us_from_cycles,
)
from gpukalc.ptx.types import BasicBlock, InstClass, KernelGraph, Resource, batches


@dataclass(frozen=True)
class LaunchConfig:
    """Grid geometry plus the per-thread/per-block resource footprint."""

    n_blocks: int
    threads_per_block: int
    reg_per_thread: int = 0
    shmem_per_block: int = 0

    def __post_init__(self):
        if self.n_blocks < 1:
            raise ScheduleError("n_blocks must be >= 1")
        if self.threads_per_block < 1:
            raise ScheduleError("threads_per_block must be >= 1")
        if self.reg_per_thread < 0 or self.shmem_per_block < 0:
            raise ScheduleError("resource footprints must be >= 0")

    @property
    def total_threads(self) -> int:
        return self.n_blocks * self.threads_per_block


class ReservationTable:
    """Per-resource sets of reserved half-open [start, end) spans."""

    def __init__(self):
        self._spans: dict[Resource, list[tuple[float, float]]] = defaultdict(list)

    def earliest_start(self, resource: Resource, ready: float, length: float) -> float:
        """First t >= ready where [t, t+length) avoids every reserved span."""
        t = ready
        for s, e in self._spans[resource]:
            if e <= t:
                continue
            if s >= t + length:
                break
            t = e
        return t

    def reserve(self, resource: Resource, start: float, end: float) -> None:
        insort(self._spans[resource], (start, end))


@dataclass(frozen=True)
class InstSchedule:
    index: int
    opcode: str
    klass: InstClass
    resource: Resource
    start: float
    duration: float
    latency: float
    n_batches: int

    @property
    def finish(self) -> float:
        return self.start + self.duration


@dataclass(frozen=True)
class BlockSchedule:
    label: str
    rows: tuple[InstSchedule, ...]
    delay: float


@dataclass(frozen=True)
class CfgSchedule:
    blocks: tuple[BlockSchedule, ...]
    multipliers: tuple[int, ...]
    finish: tuple[float, ...]
    delay: float


@dataclass(frozen=True)
class KernelSchedule:
    kernel: str
    launch: LaunchConfig
    threads_scheduled: int
    threads_per_sm: int
    blocks_per_sm: int
    waves: int
    gm_latency: float
    cfg: CfgSchedule
    d_kernel: float
    overhead_cycles: float
    gm_penalty: float
    sm_penalty: float
    cm_penalty: float
    n_global: int
    n_shared: int

    @property
    def d_total(self) -> float:
        return (
            self.d_kernel
            + self.overhead_cycles
            + self.gm_penalty
            + self.sm_penalty
            + self.cm_penalty
        )

    def time_us(self, profile: ArchProfile) -> float:
        return us_from_cycles(profile, self.d_total)


def schedule_block(
    profile: ArchProfile,
    block: BasicBlock,
    n_tw: int,
    *,
    gm_latency: float | None = None,
) -> BlockSchedule:
    """Schedule one basic block's DFG for n_tw concurrent threads.

    An instruction occupies its resource for d = latency + pipeline *
    (batches - 1) cycles, where batches is how many issue groups the thread
    count splits into on that unit. The per-resource issue gap extends only
    the reserved span; consumers wait d cycles, not d + gap.
    """
    if n_tw < 1:
        raise ScheduleError("thread count must be >= 1")
    preds: dict[int, list[int]] = defaultdict(list)
    for u, v in block.dfg_edges:
        preds[v].append(u)

    table = ReservationTable()
    rows: list[InstSchedule] = []
    delay = 0.0
    for v in block.topo_order():
        inst = block.instructions[v]
        lat = latency_of(profile, inst, gm_latency=gm_latency)
        units = profile.resources[inst.resource]
        nb = batches(n_tw, units)
        d = lat + profile.latency.pipeline * (nb - 1)
        ready = 0.0
        for u in preds[v]:
            ready = max(ready, rows[u].finish)
        gap = profile.latency.gap(inst.resource)
        start = table.earliest_start(inst.resource, ready, d + gap)
        table.reserve(inst.resource, start, start + d + gap)
        rows.append(
            InstSchedule(
                index=v,
                opcode=inst.opcode,
                klass=inst.klass,
                resource=inst.resource,
                start=start,
                duration=d,
                latency=lat,
                n_batches=nb,
            )
        )
        delay = max(delay, start + d)
    return BlockSchedule(label=block.label, rows=tuple(rows), delay=delay)


def schedule_cfg(
    profile: ArchProfile,
    graph: KernelGraph,
    n_tw: int,
    *,
    gm_latency: float | None = None,
) -> CfgSchedule:
    """Compose block delays over the forward CFG in topological order.

    A block's finish time is the max finish of its forward predecessors plus
    its own delay scaled by the product of trip counts of every loop that
    contains it. The CFG delay is the max finish over exit blocks.
    """
    order = graph.topo_order()
    multipliers = graph.loop_multipliers()
    blocks = [
        schedule_block(profile, b, n_tw, gm_latency=gm_latency) for b in graph.blocks
    ]
    finish = [0.0] * len(graph.blocks)
    for i in order:
        d_in = max((finish[p] for p in graph.forward_preds(i)), default=0.0)
        finish[i] = d_in + blocks[i].delay * multipliers[i]
    exits = graph.exit_blocks
    delay = max(finish[i] for i in exits)
    return CfgSchedule(
        blocks=tuple(blocks),
        multipliers=tuple(multipliers),
        finish=tuple(finish),
        delay=delay,
    )


def per_sm_block_cap(profile: ArchProfile, launch: LaunchConfig) -> int:
    """How many blocks fit on one SM under thread, register, shared, and
    hardware block limits. Raises when even one block does not fit."""
    caps = [profile.nTh_sm_max // launch.threads_per_block, profile.nB_max]
    if launch.reg_per_thread > 0:
        caps.append(
            profile.reg_b_max // (launch.reg_per_thread * launch.threads_per_block)
        )
    if launch.shmem_per_block > 0:
        caps.append(profile.shm_b_max // launch.shmem_per_block)
    cap = min(caps)
    if cap < 1:
        raise ScheduleError(
            f"block of {launch.threads_per_block} threads, "
            f"{launch.reg_per_thread} regs/thread, "
            f"{launch.shmem_per_block} B shared does not fit on one SM"
        )
    return cap


def occupancy_counts(
    profile: ArchProfile, launch: LaunchConfig
) -> tuple[int, int, int]:
    """(threads_scheduled, threads_per_sm, waves) for a launch.

    threads_scheduled is the per-SM share of the grid, threads_per_sm the
    concurrent complement, and waves how many rounds it takes.
    """
    cap = per_sm_block_cap(profile, launch)
    n_schd = math.ceil(launch.n_blocks / profile.nSM) * launch.threads_per_block
    n_sm = cap * launch.threads_per_block
    waves = math.ceil(n_schd / n_sm)
    return n_schd, n_sm, waves


def static_mem_counts(graph: KernelGraph) -> tuple[int, int]:
    """(global, shared) transaction counts for one CFG traversal, with loop
    multipliers applied."""
    mult = graph.loop_multipliers()
    n_gm = n_shm = 0
    for i, b in enumerate(graph.blocks):
        for inst in b.instructions:
            if inst.klass is InstClass.GLOBAL:
                n_gm += mult[i]
            elif inst.klass is InstClass.SHARED:
                n_shm += mult[i]
    return n_gm, n_shm


def gm_contention_penalty(
    profile: ArchProfile, launch: LaunchConfig, n_global: int
) -> float:
    """Cycles lost to global-memory bandwidth saturation."""
    if n_global < 0:
        raise ScheduleError("transaction count must be >= 0")
    if n_global == 0:
        return 0.0
    tput = mem_throughput(profile, "global", n_global)
    return (
        (launch.total_threads / profile.resources[Resource.LSU])
        * (profile.access_gm_sz / tput)
        * n_global
    )


def sm_contention_penalty(
    profile: ArchProfile, launch: LaunchConfig, n_shared: int
) -> float:
    """Cycles lost to shared-memory bank contention."""
    if n_shared < 0:
        raise ScheduleError("transaction count must be >= 0")
    if n_shared == 0:
        return 0.0
    tput = mem_throughput(profile, "shared", n_shared)
    return (
        (launch.total_threads / (profile.resources[Resource.LSU] * profile.nSM))
        * (profile.access_shm_sz / tput)
        * n_shared
    )


def cm_contention_penalty(
    profile: ArchProfile,
    launch: LaunchConfig,
    n_global: int,
    waves: int,
    *,
    gm_latency: float | None = None,
) -> float:
    """Cycles lost to L2 misses: loads beyond one wave's cache lines each
    repay the full global latency."""
    if n_global < 0:
        raise ScheduleError("transaction count must be >= 0")
    if waves < 1:
        raise ScheduleError("waves must be >= 1")
    if n_global == 0:
        return 0.0
    if gm_latency is None:
        gm_latency = global_mem_latency(
            profile, launch.n_blocks, launch.threads_per_block
        )
    lines = waves * profile.L2_sz / profile.access_sz
    return (launch.total_threads * n_global) / lines * gm_latency


def schedule_kernel(
    profile: ArchProfile, graph: KernelGraph, launch: LaunchConfig
) -> KernelSchedule:
    """Predict whole-kernel delay for a launch configuration.

    The per-SM share of the grid runs in waves of the concurrent thread
    complement; every wave traverses the CFG once, so the kernel delay is
    waves times the CFG delay and memory transaction counts scale the same
    way. Contention penalties and launch overhead are added on top.
    """
    n_schd, n_sm, waves = occupancy_counts(profile, launch)
    gm_lat = global_mem_latency(profile, launch.n_blocks, launch.threads_per_block)
    cfg = schedule_cfg(profile, graph, n_sm, gm_latency=gm_lat)
    d_kernel = waves * cfg.delay
    per_gm, per_shm = static_mem_counts(graph)
    n_gm = waves * per_gm
    n_shm = waves * per_shm
    overhead = cycles_from_us(
        profile, launch_overhead_us(profile, launch.n_blocks, launch.threads_per_block)
    )
    return KernelSchedule(
        kernel=graph.name,
        launch=launch,
        threads_scheduled=n_schd,
        threads_per_sm=n_sm,
        blocks_per_sm=per_sm_block_cap(profile, launch),
        waves=waves,
        gm_latency=gm_lat,
        cfg=cfg,
        d_kernel=d_kernel,
        overhead_cycles=overhead,
        gm_penalty=gm_contention_penalty(profile, launch, n_gm),
        sm_penalty=sm_contention_penalty(profile, launch, n_shm),
        cm_penalty=cm_contention_penalty(
            profile, launch, n_gm, waves, gm_latency=gm_lat
        ),
        n_global=n_gm,
        n_shared=n_shm,
    )
