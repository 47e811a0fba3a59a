"""Command-line interface.

Machine-readable results go to stdout; diagnostics and progress go to
stderr. Exit codes: 0 on success, 1 on domain errors (bad PTX, bad profile,
infeasible launch), 2 on usage errors.
"""

from __future__ import annotations

import functools
import json
import re
import sys
from pathlib import Path

import click

from gpukalc.errors import GpukalcError
from gpukalc.features import extract_features, features_to_csv
from gpukalc.modelfit import (
    MICROBENCH_KINDS,
    MeasurementSeries,
    detect_peakwarps,
    fit_exponential,
    fit_linear,
    fit_piecewise_linear,
    generate_microbench,
)
from gpukalc.power import EnergyReport, load_ensemble, predict_power
from gpukalc.profiles import (
    dump_profile,
    list_shipped_profiles,
    profile_from_dict,
    profile_to_dict,
    resolve_profile,
)
from gpukalc.ptx.parser import parse_ptx
from gpukalc.scheduler import KernelSchedule, LaunchConfig, schedule_kernel

_ENTRY_SCAN = re.compile(r"\.entry\s+([A-Za-z_$][\w$]*)")


def _domain_errors(f):
    @functools.wraps(f)
    def wrapper(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except GpukalcError as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(1)

    return wrapper


def _pick_kernel(text: str, requested: str | None) -> str:
    if requested:
        return requested
    names = _ENTRY_SCAN.findall(text)
    if len(names) == 1:
        return names[0]
    if not names:
        raise GpukalcError("no kernel entry found in PTX")
    raise GpukalcError(
        "PTX defines several kernels, pick one with --kernel: " + ", ".join(names)
    )


def _parse_loops(values: tuple[str, ...]) -> dict[str, int]:
    out: dict[str, int] = {}
    for v in values:
        name, sep, num = v.partition("=")
        if not sep or not name:
            raise click.BadParameter(f"expected LABEL=COUNT, got {v!r}", param_hint="--loops")
        try:
            count = int(num)
        except ValueError:
            raise click.BadParameter(f"trip count in {v!r} is not an integer", param_hint="--loops")
        if count < 1:
            raise click.BadParameter(f"trip count in {v!r} must be >= 1", param_hint="--loops")
        out[name] = count
    return out


def _zip_launches(blocks: tuple[int, ...], tpbs: tuple[int, ...]) -> list[tuple[int, int]]:
    if len(blocks) == len(tpbs):
        return list(zip(blocks, tpbs))
    if len(blocks) == 1:
        return [(blocks[0], t) for t in tpbs]
    if len(tpbs) == 1:
        return [(b, tpbs[0]) for b in blocks]
    raise click.UsageError(
        "--blocks and --tpb must be given the same number of times "
        "(or one of them exactly once)"
    )


def _launch_options(f):
    opts = [
        click.option("--profile", "-p", "profile_name", required=True,
                      help="Profile name (e.g. k20) or path to a profile JSON."),
        click.option("--ptx", "ptx_path", required=True,
                      type=click.Path(exists=True, dir_okay=False),
                      help="PTX file to analyze."),
        click.option("--kernel", "-k", default=None,
                      help="Kernel entry name; optional when the file has exactly one."),
        click.option("--blocks", "-b", "blocks", multiple=True, required=True,
                      type=click.IntRange(min=1), help="Grid size; repeatable."),
        click.option("--tpb", "-t", "tpbs", multiple=True, required=True,
                      type=click.IntRange(min=1), help="Threads per block; repeatable."),
        click.option("--regs", type=click.IntRange(min=0), default=0,
                      help="Registers per thread (occupancy limits)."),
        click.option("--shmem", type=click.IntRange(min=0), default=0,
                      help="Shared memory bytes per block (occupancy limits)."),
        click.option("--loops", "loops", multiple=True, metavar="LABEL=COUNT",
                      help="Trip count for the loop headed by LABEL; repeatable."),
    ]
    for opt in reversed(opts):
        f = opt(f)
    return f


@click.group()
@click.version_option(package_name="gpukalc")
def main():
    """Static execution-time, power, and energy prediction for CUDA kernels."""


def _result_dict(profile, ks: KernelSchedule) -> dict:
    return {
        "kernel": ks.kernel,
        "n_blocks": ks.launch.n_blocks,
        "threads_per_block": ks.launch.threads_per_block,
        "waves": ks.waves,
        "threads_per_sm": ks.threads_per_sm,
        "blocks_per_sm": ks.blocks_per_sm,
        "gm_latency_cycles": ks.gm_latency,
        "d_kernel_cycles": ks.d_kernel,
        "overhead_cycles": ks.overhead_cycles,
        "gm_penalty_cycles": ks.gm_penalty,
        "sm_penalty_cycles": ks.sm_penalty,
        "cm_penalty_cycles": ks.cm_penalty,
        "d_total_cycles": ks.d_total,
        "time_us": ks.time_us(profile),
    }


def _trace_rows(ks: KernelSchedule) -> list[dict]:
    rows = []
    for bs in ks.cfg.blocks:
        for r in bs.rows:
            rows.append(
                {
                    "block": bs.label,
                    "index": r.index,
                    "opcode": r.opcode,
                    "class": r.klass.value,
                    "resource": r.resource.value,
                    "start": r.start,
                    "duration": r.duration,
                    "finish": r.finish,
                }
            )
    return rows


@main.command()
@_launch_options
@click.option("--model", "model_path", default=None,
              type=click.Path(exists=True, dir_okay=False),
              help="Tree-ensemble JSON; adds power and energy to the output.")
@click.option("--format", "fmt", type=click.Choice(["table", "json", "csv"]),
              default="table", show_default=True)
@click.option("--trace", is_flag=True, help="Include the per-instruction schedule.")
@_domain_errors
def predict(profile_name, ptx_path, kernel, blocks, tpbs, regs, shmem, loops,
            model_path, fmt, trace):
    """Predict execution time (and power/energy with --model) per launch."""
    profile = resolve_profile(profile_name)
    text = Path(ptx_path).read_text()
    kname = _pick_kernel(text, kernel)
    graph = parse_ptx(text, kname, loop_counts=_parse_loops(loops) or None)
    ensemble = load_ensemble(model_path) if model_path else None

    results = []
    for n_b, tpb in _zip_launches(blocks, tpbs):
        launch = LaunchConfig(n_b, tpb, reg_per_thread=regs, shmem_per_block=shmem)
        ks = schedule_kernel(profile, graph, launch)
        row = _result_dict(profile, ks)
        if ensemble is not None:
            vec = extract_features(profile, graph, launch)
            power = predict_power(ensemble, vec.as_dict())
            rep = EnergyReport.build(kname, row["time_us"], power)
            row["power_w"] = rep.power_w
            row["energy_uj"] = rep.energy_uj
        if trace:
            row["trace"] = _trace_rows(ks)
        results.append(row)

    if fmt == "json":
        click.echo(json.dumps({"profile": profile.name, "results": results}, indent=2))
        return
    if fmt == "csv":
        cols = [c for c in results[0] if c != "trace"]
        click.echo(",".join(cols))
        for row in results:
            click.echo(",".join(_csv_cell(row[c]) for c in cols))
        return
    for row in results:
        click.echo(f"kernel {row['kernel']} on {profile.display_name}: "
                   f"{row['n_blocks']} blocks x {row['threads_per_block']} threads")
        click.echo(f"  waves {row['waves']}, {row['threads_per_sm']} threads/SM, "
                   f"{row['blocks_per_sm']} blocks/SM")
        click.echo(f"  cycles: kernel {row['d_kernel_cycles']:.1f} "
                   f"+ overhead {row['overhead_cycles']:.1f} "
                   f"+ gm {row['gm_penalty_cycles']:.1f} "
                   f"+ sm {row['sm_penalty_cycles']:.1f} "
                   f"+ cm {row['cm_penalty_cycles']:.1f} "
                   f"= {row['d_total_cycles']:.1f}")
        click.echo(f"  time: {row['time_us']:.3f} us")
        if "power_w" in row:
            click.echo(f"  power: {row['power_w']:.3f} W")
            click.echo(f"  energy: {row['energy_uj']:.3f} uJ")
        if trace:
            click.echo("  schedule:")
            for r in row["trace"]:
                click.echo(f"    {r['block']:>8} [{r['index']:>3}] "
                           f"{r['opcode']:<24} {r['resource']:<4} "
                           f"start {r['start']:>10.1f} dur {r['duration']:>8.1f}")


def _csv_cell(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


@main.command()
@_launch_options
@click.option("--selected", is_flag=True,
              help="Emit only the pruned feature subset used by shipped models.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None,
              help="Write CSV here instead of stdout.")
@_domain_errors
def features(profile_name, ptx_path, kernel, blocks, tpbs, regs, shmem, loops,
             selected, output):
    """Emit the static feature vector CSV for each launch configuration."""
    profile = resolve_profile(profile_name)
    text = Path(ptx_path).read_text()
    kname = _pick_kernel(text, kernel)
    graph = parse_ptx(text, kname, loop_counts=_parse_loops(loops) or None)
    rows = []
    for n_b, tpb in _zip_launches(blocks, tpbs):
        launch = LaunchConfig(n_b, tpb, reg_per_thread=regs, shmem_per_block=shmem)
        rows.append((f"{kname}[{n_b}x{tpb}]", extract_features(profile, graph, launch)))
    csv_text = features_to_csv(rows, selected=selected)
    if output:
        Path(output).write_text(csv_text)
        click.echo(f"wrote {len(rows)} rows to {output}", err=True)
    else:
        click.echo(csv_text, nl=False)


@main.command("gen-microbench")
@click.option("--kind", required=True, type=click.Choice(MICROBENCH_KINDS))
@click.option("--ilp", type=click.IntRange(min=1, max=3), default=1, show_default=True,
              help="Independent chains in the compute-throughput kernel.")
@click.option("--output", "-o", type=click.Path(dir_okay=False), default=None)
def gen_microbench(kind, ilp, output):
    """Emit CUDA source for one measurement kernel."""
    src = generate_microbench(kind, ilp=ilp)
    if output:
        Path(output).write_text(src)
        click.echo(f"wrote {output}", err=True)
    else:
        click.echo(src, nl=False)


@main.command()
@click.option("--kind", required=True,
              type=click.Choice(["linear", "piecewise", "exponential", "peakwarps"]))
@click.option("--csv", "csv_path", required=True,
              type=click.Path(exists=True, dir_okay=False),
              help="Measurement CSV with an 'x,y' header.")
@click.option("--segments", type=click.IntRange(min=1), default=4, show_default=True,
              help="Segment count for --kind piecewise.")
@click.option("--epsilon", type=float, default=None,
              help="Peak tolerance for --kind peakwarps (default: 2% of max).")
@_domain_errors
def fit(kind, csv_path, segments, epsilon):
    """Fit an empirical model to a measurement series; prints JSON."""
    series = MeasurementSeries.from_csv(Path(csv_path).read_text())
    if kind == "linear":
        res = fit_linear(series)
        doc = {"kind": kind, "slope": res.model.slope,
               "intercept": res.model.intercept, "r2": res.r2, "rmse": res.rmse}
    elif kind == "piecewise":
        res = fit_piecewise_linear(series, segments)
        doc = {"kind": kind,
               "breakpoints": list(res.model.breakpoints),
               "segments": [{"slope": a, "intercept": b} for a, b in res.model.segments],
               "r2": res.r2, "rmse": res.rmse}
    elif kind == "exponential":
        res = fit_exponential(series)
        doc = {"kind": kind, "a": res.a, "b": res.b, "c": res.c,
               "r2": res.r2, "rmse": res.rmse, "converged": res.converged}
        if not res.converged:
            click.echo("warning: fit did not converge; parameters are best-so-far",
                       err=True)
    else:
        doc = {"kind": kind, "peakwarps": detect_peakwarps(series, epsilon)}
    click.echo(json.dumps(doc, indent=2))


@main.command()
@click.option("--base", "base_name", required=True,
              help="Profile (name or path) to start from.")
@click.option("--output", "-o", required=True, type=click.Path(dir_okay=False))
@click.option("--name", "new_name", default=None, help="Name for the new profile.")
@click.option("--gm-latency-csv", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Global-latency sweep (x=threads, y=cycles).")
@click.option("--gm-segments", type=click.IntRange(min=1), default=4, show_default=True)
@click.option("--overhead-csv", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Launch-overhead sweep (x=total threads, y=us).")
@click.option("--tp-global-csv", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Global-throughput sweep (x=transactions).")
@click.option("--tp-shared-csv", type=click.Path(exists=True, dir_okay=False),
              default=None, help="Shared-throughput sweep (x=transactions).")
@click.option("--latency", "latencies", multiple=True, metavar="NAME=CYCLES",
              help="Override one instruction latency; repeatable.")
@_domain_errors
def setup(base_name, output, new_name, gm_latency_csv, gm_segments, overhead_csv,
          tp_global_csv, tp_shared_csv, latencies):
    """Build a profile JSON from a base profile plus measurement fits."""
    base = resolve_profile(base_name)
    doc = profile_to_dict(base)
    if new_name:
        doc["name"] = new_name
        doc["display_name"] = new_name

    def _series(path: str) -> MeasurementSeries:
        return MeasurementSeries.from_csv(Path(path).read_text())

    if gm_latency_csv:
        res = fit_piecewise_linear(_series(gm_latency_csv), gm_segments)
        doc["penalty_models"]["global_latency_piecewise"] = {
            "breakpoints": list(res.model.breakpoints),
            "segments": [{"slope": a, "intercept": b} for a, b in res.model.segments],
        }
        click.echo(f"global latency: {gm_segments} segments, r2={res.r2:.4f}", err=True)
    if overhead_csv:
        res = fit_linear(_series(overhead_csv))
        doc["penalty_models"]["launch_overhead"] = {
            "slope_us": res.model.slope, "intercept_us": res.model.intercept,
        }
        click.echo(f"launch overhead: r2={res.r2:.4f}", err=True)
    for key, path in (("global", tp_global_csv), ("shared", tp_shared_csv)):
        if not path:
            continue
        res = fit_exponential(_series(path))
        if not res.converged:
            raise GpukalcError(f"{key} throughput fit did not converge")
        doc["throughput_models"][key] = {"a": res.a, "b": res.b, "c": res.c}
        click.echo(f"{key} throughput: r2={res.r2:.4f}", err=True)
    for spec_str in latencies:
        name, sep, num = spec_str.partition("=")
        if not sep or not name:
            raise click.BadParameter(f"expected NAME=CYCLES, got {spec_str!r}",
                                     param_hint="--latency")
        doc["latencies"]["instructions"][name] = float(num)

    profile = profile_from_dict(doc)  # validate before writing
    dump_profile(profile, output)
    click.echo(f"wrote profile '{profile.name}' to {output}", err=True)


@main.command("list-profiles")
def list_profiles_cmd():
    """List profiles shipped with the package."""
    for name in list_shipped_profiles():
        click.echo(name)


if __name__ == "__main__":
    main()
