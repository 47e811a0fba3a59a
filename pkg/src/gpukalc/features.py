"""Static feature extraction for the power model.

Each kernel + launch configuration reduces to a fixed 32-feature vector:
per-class instruction and latency tallies, occupancy and wave geometry, and
the contention penalty terms. Per-SM tallies accumulate over waves; the
_kernel variants count a single CFG traversal (loop multipliers applied).
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, fields

from gpukalc.errors import ScheduleError
from gpukalc.profiles import ArchProfile, global_mem_latency, latency_of, mem_throughput
from gpukalc.ptx.types import InstClass, KernelGraph, Resource
from gpukalc.scheduler import LaunchConfig, occupancy_counts

FEATURE_ORDER = (
    "avg_comp_lat",
    "avg_glob_lat",
    "avg_misc_lat",
    "avg_shar_lat",
    "branch",
    "comp_inst_kernel",
    "comp_inst_sm",
    "comp_lat_sm",
    "glob_inst_kernel",
    "glob_inst_sm",
    "glob_lat_sm",
    "glob_load_sm",
    "glob_store_sm",
    "misc_inst_kernel",
    "misc_inst_sm",
    "misc_lat_sm",
    "shar_inst_kernel",
    "shar_inst_sm",
    "shar_lat_sm",
    "sm_active",
    "n_warps",
    "waves",
    "total_threads",
    "inst_issue_cycles",
    "cache_penalty",
    "glb_penalty",
    "sh_penalty",
    "occupancy",
    "reg_thread",
    "shmem_block",
    "block_size",
    "grid_size",
)

SELECTED_FEATURES = (
    "avg_comp_lat",
    "avg_glob_lat",
    "avg_shar_lat",
    "branch",
    "comp_inst_kernel",
    "glob_inst_kernel",
    "glob_load_sm",
    "glob_store_sm",
    "misc_inst_kernel",
    "inst_issue_cycles",
    "cache_penalty",
    "occupancy",
    "reg_thread",
    "shmem_block",
    "block_size",
)
# Selected subset kept in canonical order and restricted to FEATURE_ORDER.
SELECTED_FEATURES = tuple(f for f in FEATURE_ORDER if f in SELECTED_FEATURES)
assert len(SELECTED_FEATURES) == 15


@dataclass(frozen=True)
class FeatureVector:
    avg_comp_lat: float
    avg_glob_lat: float
    avg_misc_lat: float
    avg_shar_lat: float
    branch: float
    comp_inst_kernel: float
    comp_inst_sm: float
    comp_lat_sm: float
    glob_inst_kernel: float
    glob_inst_sm: float
    glob_lat_sm: float
    glob_load_sm: float
    glob_store_sm: float
    misc_inst_kernel: float
    misc_inst_sm: float
    misc_lat_sm: float
    shar_inst_kernel: float
    shar_inst_sm: float
    shar_lat_sm: float
    sm_active: float
    n_warps: float
    waves: float
    total_threads: float
    inst_issue_cycles: float
    cache_penalty: float
    glb_penalty: float
    sh_penalty: float
    occupancy: float
    reg_thread: float
    shmem_block: float
    block_size: float
    grid_size: float

    def as_dict(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in FEATURE_ORDER}

    def as_row(self) -> tuple[float, ...]:
        return tuple(getattr(self, name) for name in FEATURE_ORDER)


assert tuple(f.name for f in fields(FeatureVector)) == FEATURE_ORDER


def theoretical_occupancy(profile: ArchProfile, launch: LaunchConfig) -> float:
    """Active warps over the hardware warp limit, from block-level caps."""
    wpb = math.ceil(launch.threads_per_block / profile.Sz_w)
    caps = [profile.wSM_max // wpb, profile.nB_max]
    if launch.reg_per_thread > 0:
        caps.append(
            profile.reg_b_max // (launch.reg_per_thread * launch.threads_per_block)
        )
    if launch.shmem_per_block > 0:
        caps.append(profile.shm_b_max // launch.shmem_per_block)
    blocks = min(caps)
    if blocks < 1:
        raise ScheduleError(
            f"block of {launch.threads_per_block} threads does not fit on one SM"
        )
    return blocks * wpb / profile.wSM_max


def instruction_issue_cycles(
    profile: ArchProfile, total_threads: int, total_inst: float
) -> float:
    """Cycles the schedulers spend issuing: thread groups per warp-scheduler
    round times instructions per dispatch unit."""
    return (total_threads / (profile.nWS * profile.Sz_w)) * (total_inst / profile.nDU)


def extract_features(
    profile: ArchProfile, graph: KernelGraph, launch: LaunchConfig
) -> FeatureVector:
    """Compute the 32-feature vector for one kernel launch."""
    _, n_sm, waves = occupancy_counts(profile, launch)
    gm_lat = global_mem_latency(profile, launch.n_blocks, launch.threads_per_block)
    mult = graph.loop_multipliers()

    counts = {k: 0 for k in InstClass}
    lat_sums = {k: 0.0 for k in InstClass}
    branches = 0
    loads = stores = 0
    for i, block in enumerate(graph.blocks):
        m = mult[i]
        for inst in block.instructions:
            counts[inst.klass] += m
            lat_sums[inst.klass] += m * latency_of(profile, inst, gm_latency=gm_lat)
            if inst.is_branch:
                branches += m
            if inst.klass is InstClass.GLOBAL:
                if inst.root in ("ld", "ldu"):
                    loads += m
                elif inst.root == "st":
                    stores += m

    def sm_count(klass: InstClass) -> float:
        return float(waves * counts[klass])

    def sm_lat(klass: InstClass) -> float:
        return waves * lat_sums[klass]

    def avg(klass: InstClass) -> float:
        n = sm_count(klass)
        return sm_lat(klass) / n if n else 0.0

    glob_inst_sm = sm_count(InstClass.GLOBAL)
    shar_inst_sm = sm_count(InstClass.SHARED)
    total_inst = (
        sm_count(InstClass.COMPUTE)
        + glob_inst_sm
        + shar_inst_sm
        + sm_count(InstClass.MISC)
    )
    total_threads = launch.total_threads
    lsu = profile.resources[Resource.LSU]

    if glob_inst_sm > 0:
        lines = waves * profile.L2_sz / profile.access_sz
        cache_penalty = (total_threads * glob_inst_sm) / lines * gm_lat
        glb_penalty = (
            (total_threads / lsu)
            * (profile.access_sz / mem_throughput(profile, "global", glob_inst_sm))
            * glob_inst_sm
        )
    else:
        cache_penalty = glb_penalty = 0.0
    if shar_inst_sm > 0:
        sh_penalty = (
            (total_threads / (lsu * profile.nSM))
            * (profile.access_sz / mem_throughput(profile, "shared", shar_inst_sm))
            * shar_inst_sm
        )
    else:
        sh_penalty = 0.0

    return FeatureVector(
        avg_comp_lat=avg(InstClass.COMPUTE),
        avg_glob_lat=avg(InstClass.GLOBAL),
        avg_misc_lat=avg(InstClass.MISC),
        avg_shar_lat=avg(InstClass.SHARED),
        branch=float(branches),
        comp_inst_kernel=float(counts[InstClass.COMPUTE]),
        comp_inst_sm=sm_count(InstClass.COMPUTE),
        comp_lat_sm=sm_lat(InstClass.COMPUTE),
        glob_inst_kernel=float(counts[InstClass.GLOBAL]),
        glob_inst_sm=glob_inst_sm,
        glob_lat_sm=sm_lat(InstClass.GLOBAL),
        glob_load_sm=float(waves * loads),
        glob_store_sm=float(waves * stores),
        misc_inst_kernel=float(counts[InstClass.MISC]),
        misc_inst_sm=sm_count(InstClass.MISC),
        misc_lat_sm=sm_lat(InstClass.MISC),
        shar_inst_kernel=float(counts[InstClass.SHARED]),
        shar_inst_sm=shar_inst_sm,
        shar_lat_sm=sm_lat(InstClass.SHARED),
        sm_active=float(min(launch.n_blocks, profile.nSM)),
        n_warps=float(math.ceil(n_sm / profile.Sz_w)),
        waves=float(waves),
        total_threads=float(total_threads),
        inst_issue_cycles=instruction_issue_cycles(profile, total_threads, total_inst),
        cache_penalty=cache_penalty,
        glb_penalty=glb_penalty,
        sh_penalty=sh_penalty,
        occupancy=theoretical_occupancy(profile, launch),
        reg_thread=float(launch.reg_per_thread),
        shmem_block=float(launch.shmem_per_block),
        block_size=float(launch.threads_per_block),
        grid_size=float(launch.n_blocks),
    )


def features_to_csv(
    rows: list[tuple[str, FeatureVector]], *, selected: bool = False
) -> str:
    """Render (kernel, vector) pairs as CSV with a 'kernel' id column."""
    names = SELECTED_FEATURES if selected else FEATURE_ORDER
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(("kernel",) + names)
    for kernel, vec in rows:
        d = vec.as_dict()
        w.writerow([kernel] + [format(d[n], ".17g") for n in names])
    return out.getvalue()


def features_from_csv(text: str) -> list[dict[str, float | str]]:
    """Parse a feature CSV back into per-row dicts; 'kernel' stays a string."""
    reader = csv.DictReader(io.StringIO(text))
    rows: list[dict[str, float | str]] = []
    for rec in reader:
        row: dict[str, float | str] = {}
        for k, v in rec.items():
            row[k] = v if k == "kernel" else float(v)
        rows.append(row)
    return rows
