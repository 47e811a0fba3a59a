"""Architecture profiles: resource counts, device attributes, latencies, and
the fitted empirical sub-models (piecewise global latency, exponential
throughput, linear launch overhead).

Profiles are immutable after load and freely shareable. All latencies are in
GPU cycles, launch overhead in microseconds, clocks in MHz; the only unit
conversion lives in cycles_from_us / us_from_cycles.
"""

from __future__ import annotations

import bisect
import json
import logging
import math
import os
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path

from gpukalc.errors import ProfileError
from gpukalc.ptx.types import InstClass, PtxInstruction, Resource

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1

FLOAT_KINDS = frozenset("f16 f16x2 f32 f64 bf16".split())
INT_KINDS = frozenset(
    "s8 s16 s32 s64 u8 u16 u32 u64 b8 b16 b32 b64 pred".split()
)
# Unmeasured roots that borrow a measured row.
LATENCY_ALIASES = {"cvta": "cvt", "rsqrt": "sqrt", "rcp": "divf", "madf": "fma"}

SHIPPED_ALIASES = {
    "k20": "tesla_k20",
    "k4200": "quadro_k4200",
    "m60": "tesla_m60",
    "1050": "gtx1050",
}


@dataclass(frozen=True)
class PiecewiseLinearModel:
    """Segments over [lo, hi) intervals; the last segment extends to infinity."""

    breakpoints: tuple[float, ...]
    segments: tuple[tuple[float, float], ...]  # (slope, intercept) per segment

    def __post_init__(self):
        if len(self.segments) != len(self.breakpoints) + 1:
            raise ProfileError(
                "piecewise model needs exactly one more segment than breakpoints"
            )
        if any(b2 <= b1 for b1, b2 in zip(self.breakpoints, self.breakpoints[1:])):
            raise ProfileError("piecewise breakpoints must be strictly increasing")

    def evaluate(self, x: float) -> float:
        i = bisect.bisect_right(self.breakpoints, x)
        slope, intercept = self.segments[i]
        return slope * x + intercept


@dataclass(frozen=True)
class ExpGrowthModel:
    """Saturating growth a*(b - exp(-c*x)); strictly increasing for c > 0."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        if self.a <= 0 or self.c <= 0:
            raise ProfileError("exponential growth model needs a > 0 and c > 0")

    def evaluate(self, x: float) -> float:
        return self.a * (self.b - math.exp(-self.c * x))


@dataclass(frozen=True)
class LinearOverheadModel:
    slope: float  # us per launched thread (nB*nT_b)
    intercept: float  # us

    def __post_init__(self):
        if self.intercept < 0:
            raise ProfileError("launch overhead intercept must be >= 0")

    def evaluate(self, x: float) -> float:
        return self.slope * x + self.intercept


@dataclass(frozen=True)
class LatencyTable:
    pipeline: float
    issue_gap: dict[Resource, float]
    instructions: dict[str, float]
    class_defaults: dict[InstClass, float]

    def gap(self, resource: Resource) -> float:
        return self.issue_gap.get(resource, 0.0)


@dataclass(frozen=True)
class ArchProfile:
    name: str
    display_name: str
    architecture: str
    compute_capability: str
    resources: dict[Resource, int]
    nSM: int
    nu_gpu: float  # MHz, i.e. cycles per microsecond
    nu_mem: float
    L2_sz: int
    nTh_sm_max: int
    reg_b_max: int
    shm_b_max: int
    nB_max: int
    wSM_max: int
    Sz_w: int
    Sz_gl: int
    access_sz: int
    access_gm_sz: int
    access_shm_sz: int
    nWS: int
    nDU: int
    bandwidth_gbs: float | None
    latency: LatencyTable
    tp_global: ExpGrowthModel
    tp_shared: ExpGrowthModel
    overhead: LinearOverheadModel
    gm_latency_model: PiecewiseLinearModel
    peakwarps: dict[str, dict] = field(default_factory=dict)
    tp_floor: float = 1e-6
    notes: tuple[str, ...] = ()


def cycles_from_us(p: ArchProfile, us: float) -> float:
    return us * p.nu_gpu


def us_from_cycles(p: ArchProfile, cycles: float) -> float:
    return cycles / p.nu_gpu


def global_mem_latency(p: ArchProfile, nB: int, nT_b: int) -> float:
    """Global load/store latency in cycles at stride nT_b*nB."""
    if nB < 1 or nT_b < 1:
        raise ProfileError("nB and nT_b must be >= 1")
    return p.gm_latency_model.evaluate(nT_b * nB)


def launch_overhead_us(p: ArchProfile, nB: int, nT_b: int) -> float:
    if nB < 1 or nT_b < 1:
        raise ProfileError("nB and nT_b must be >= 1")
    return p.overhead.evaluate(nB * nT_b)


def mem_throughput(p: ArchProfile, space: str, n_trans: float) -> float:
    """Fitted throughput at a transaction count, clamped to a small floor.

    Units are whatever the fitted measurement series used (GB/s for the
    shipped models); the penalty equations only ever divide by this value.
    """
    if n_trans < 0:
        raise ProfileError("transaction count must be >= 0")
    if space == "global":
        value = p.tp_global.evaluate(n_trans)
    elif space == "shared":
        value = p.tp_shared.evaluate(n_trans)
    else:
        raise ProfileError(f"unknown memory space '{space}'")
    if value <= 0:
        log.warning(
            "throughput model for %s at %s transactions gave %g; clamped to %g",
            space,
            n_trans,
            value,
            p.tp_floor,
        )
        return p.tp_floor
    return value


def latency_of(
    p: ArchProfile, inst: PtxInstruction, *, gm_latency: float | None = None
) -> float:
    """Resolve one instruction's latency in cycles.

    GlobalMemory latency comes from the caller (the stride-dependent model);
    a fixed "global" table entry is the fallback. SharedMemory uses the
    per-architecture constant. Everything else tries the suffixed key, the
    bare root, a measured alias, then the class default.
    """
    table = p.latency.instructions
    if inst.klass is InstClass.GLOBAL:
        if gm_latency is not None:
            return gm_latency
        if "global" in table:
            return table["global"]
        raise ProfileError(
            "global-memory latency unresolved: pass gm_latency or add a "
            "'global' latency entry"
        )
    if inst.klass is InstClass.SHARED:
        return table["shared"]

    kind = None
    for suf in inst.suffixes:
        stem = suf.lstrip(".")
        if stem in FLOAT_KINDS:
            kind = "f"
            break
        if stem in INT_KINDS:
            kind = "s"
            break
    candidates = []
    if kind:
        candidates.append(inst.root + kind)
    candidates.append(inst.root)
    for cand in candidates:
        if cand in table:
            return table[cand]
        if cand in LATENCY_ALIASES and LATENCY_ALIASES[cand] in table:
            return table[LATENCY_ALIASES[cand]]
    if inst.klass in p.latency.class_defaults:
        return p.latency.class_defaults[inst.klass]
    raise ProfileError(f"no latency entry or class default for '{inst.opcode}'")


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ProfileError(message)


def profile_from_dict(raw: dict) -> ArchProfile:
    _require(isinstance(raw, dict), "profile must be a JSON object")
    _require(
        raw.get("schema_version") == SCHEMA_VERSION,
        f"schema_version: expected {SCHEMA_VERSION}, got {raw.get('schema_version')!r}",
    )
    for section in (
        "name",
        "resources",
        "attributes",
        "latencies",
        "throughput_models",
        "penalty_models",
    ):
        _require(section in raw, f"missing section '{section}'")

    res_raw = raw["resources"]
    resources = {}
    for r in Resource:
        _require(r.value in res_raw, f"resources.{r.value}: missing")
        count = res_raw[r.value]
        _require(
            isinstance(count, int) and count >= 1,
            f"resources.{r.value}: must be a positive integer",
        )
        resources[r] = count

    att = raw["attributes"]

    def posint(key: str) -> int:
        _require(key in att, f"attributes.{key}: missing")
        v = att[key]
        _require(isinstance(v, int) and v >= 1, f"attributes.{key}: must be >= 1")
        return v

    def posnum(key: str) -> float:
        _require(key in att, f"attributes.{key}: missing")
        v = att[key]
        _require(
            isinstance(v, (int, float)) and v > 0, f"attributes.{key}: must be > 0"
        )
        return float(v)

    access_sz = posint("access_sz")

    lat_raw = raw["latencies"]
    _require("instructions" in lat_raw, "latencies.instructions: missing")
    instructions = {k: float(v) for k, v in lat_raw["instructions"].items()}
    _require(
        "shared" in instructions,
        "latencies.instructions.shared: missing (shared memory constant)",
    )
    defaults_raw = lat_raw.get("class_defaults", {})
    class_defaults = {InstClass(k): float(v) for k, v in defaults_raw.items()}
    for needed in (InstClass.COMPUTE, InstClass.MISC):
        _require(
            needed in class_defaults,
            f"latencies.class_defaults.{needed.value}: missing",
        )
    issue_gap = {
        Resource(k): float(v) for k, v in lat_raw.get("issue_gap", {}).items()
    }
    latency = LatencyTable(
        pipeline=float(lat_raw.get("pipeline", 1)),
        issue_gap=issue_gap,
        instructions=instructions,
        class_defaults=class_defaults,
    )

    tp_raw = raw["throughput_models"]
    models = {}
    for space in ("global", "shared"):
        _require(space in tp_raw, f"throughput_models.{space}: missing")
        m = tp_raw[space]
        models[space] = ExpGrowthModel(
            a=float(m["a"]), b=float(m["b"]), c=float(m["c"])
        )

    pen = raw["penalty_models"]
    _require("launch_overhead" in pen, "penalty_models.launch_overhead: missing")
    ov = pen["launch_overhead"]
    overhead = LinearOverheadModel(
        slope=float(ov["slope_us"]), intercept=float(ov["intercept_us"])
    )
    _require(
        "global_latency_piecewise" in pen,
        "penalty_models.global_latency_piecewise: missing",
    )
    pw = pen["global_latency_piecewise"]
    gm_model = PiecewiseLinearModel(
        breakpoints=tuple(float(b) for b in pw["breakpoints"]),
        segments=tuple(
            (float(s["slope"]), float(s["intercept"])) for s in pw["segments"]
        ),
    )

    return ArchProfile(
        name=raw["name"],
        display_name=raw.get("display_name", raw["name"]),
        architecture=raw.get("architecture", ""),
        compute_capability=raw.get("compute_capability", ""),
        resources=resources,
        nSM=posint("nSM"),
        nu_gpu=posnum("nu_gpu_mhz"),
        nu_mem=posnum("nu_mem_mhz"),
        L2_sz=posint("L2_sz"),
        nTh_sm_max=posint("nTh_sm_max"),
        reg_b_max=posint("reg_b_max"),
        shm_b_max=posint("shm_b_max"),
        nB_max=posint("nB_max"),
        wSM_max=posint("wSM_max"),
        Sz_w=int(att.get("Sz_w", 32)),
        Sz_gl=int(att.get("Sz_gl", 128)),
        access_sz=access_sz,
        access_gm_sz=int(att.get("accessGm_sz", access_sz)),
        access_shm_sz=int(att.get("accessShm_sz", access_sz)),
        nWS=posint("nWS"),
        nDU=posint("nDU"),
        bandwidth_gbs=att.get("bandwidth_gbs"),
        latency=latency,
        tp_global=models["global"],
        tp_shared=models["shared"],
        overhead=overhead,
        gm_latency_model=gm_model,
        peakwarps=raw.get("peakwarps", {}),
        tp_floor=float(pen.get("throughput_floor", 1e-6)),
        notes=tuple(raw.get("notes", ())),
    )


def profile_to_dict(p: ArchProfile) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "name": p.name,
        "display_name": p.display_name,
        "architecture": p.architecture,
        "compute_capability": p.compute_capability,
        "notes": list(p.notes),
        "resources": {r.value: n for r, n in p.resources.items()},
        "attributes": {
            "nSM": p.nSM,
            "nu_gpu_mhz": p.nu_gpu,
            "nu_mem_mhz": p.nu_mem,
            "L2_sz": p.L2_sz,
            "nTh_sm_max": p.nTh_sm_max,
            "reg_b_max": p.reg_b_max,
            "shm_b_max": p.shm_b_max,
            "nB_max": p.nB_max,
            "wSM_max": p.wSM_max,
            "Sz_w": p.Sz_w,
            "Sz_gl": p.Sz_gl,
            "access_sz": p.access_sz,
            "accessGm_sz": p.access_gm_sz,
            "accessShm_sz": p.access_shm_sz,
            "nWS": p.nWS,
            "nDU": p.nDU,
            "bandwidth_gbs": p.bandwidth_gbs,
        },
        "latencies": {
            "pipeline": p.latency.pipeline,
            "issue_gap": {r.value: g for r, g in p.latency.issue_gap.items()},
            "instructions": dict(p.latency.instructions),
            "class_defaults": {
                k.value: v for k, v in p.latency.class_defaults.items()
            },
        },
        "throughput_models": {
            "global": {"a": p.tp_global.a, "b": p.tp_global.b, "c": p.tp_global.c},
            "shared": {"a": p.tp_shared.a, "b": p.tp_shared.b, "c": p.tp_shared.c},
        },
        "peakwarps": p.peakwarps,
        "penalty_models": {
            "launch_overhead": {
                "slope_us": p.overhead.slope,
                "intercept_us": p.overhead.intercept,
            },
            "global_latency_piecewise": {
                "breakpoints": list(p.gm_latency_model.breakpoints),
                "segments": [
                    {"slope": s, "intercept": b}
                    for s, b in p.gm_latency_model.segments
                ],
            },
            "throughput_floor": p.tp_floor,
        },
    }


def load_profile(path: str | Path) -> ArchProfile:
    path = Path(path)
    if not path.exists():
        raise ProfileError(f"profile file not found: {path}")
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ProfileError(f"{path}: invalid JSON: {exc}") from exc
    return profile_from_dict(raw)


def dump_profile(p: ArchProfile, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(profile_to_dict(p), indent=2) + "\n", encoding="utf-8"
    )


def shipped_profile_dir() -> Path:
    return Path(str(importlib_resources.files("gpukalc.data").joinpath("profiles")))


def list_shipped_profiles() -> list[str]:
    return sorted(
        f.stem
        for f in shipped_profile_dir().glob("*.json")
        if not f.stem.endswith("_latencies")
    )


def resolve_profile(name_or_path: str) -> ArchProfile:
    """Load a profile by file path or by name.

    Names resolve against GPUKALC_PROFILE_DIR first, then the shipped set.
    """
    candidate = Path(name_or_path)
    if candidate.exists() and candidate.is_file():
        return load_profile(candidate)
    name = SHIPPED_ALIASES.get(name_or_path, name_or_path)
    search: list[Path] = []
    env_dir = os.environ.get("GPUKALC_PROFILE_DIR")
    if env_dir:
        search.append(Path(env_dir))
    search.append(shipped_profile_dir())
    for base in search:
        for fname in (name, f"{name}.json"):
            path = base / fname
            if path.exists():
                return load_profile(path)
    raise ProfileError(
        f"profile '{name_or_path}' not found; shipped profiles: "
        + ", ".join(list_shipped_profiles())
    )
