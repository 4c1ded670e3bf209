"""Command-line interface.

Subcommands: simulate, sample, reuse-sweep, kl-check, calibrate-tau,
cache, flops. Reports are JSON (stdout or -o); --csv adds a flattened
table and --plot renders figures next to the report. Exit codes: 0 on
success, 2 on validation errors, 3 on cache integrity errors.
"""

import argparse
import json
import sys
from pathlib import Path

from . import __version__, harness, metrics
from .cache import MidpointCache, decode_record, encode_record
from .codec import DEFAULT_FACTOR
from .errors import (
    CacheMissError,
    ConfigurationError,
    DomainError,
    IntegrityError,
    ValidationError,
)
from .oracle import DEFAULT_SIGMA_TARGET, SceneOracle
from .raster import write_csv, write_rmb
from .reuse import ReuseConfig, estimate_flops_saving, generate_full
from .rng import SeedStream
from .scene import load_scene
from .simulator import simulate


def _emit(report: dict, out: str | None) -> None:
    text = harness.report_to_json(report)
    if out:
        Path(out).write_text(text + "\n")
    else:
        print(text)


def _cmd_simulate(args) -> int:
    scene = load_scene(args.scene)
    rmap = simulate(scene)
    out = Path(args.output)
    if out.suffix == ".csv":
        write_csv(out, rmap)
    else:
        write_rmb(out, rmap, dtype=args.dtype)
    print(json.dumps({"written": str(out), "n": scene.n, "dtype": args.dtype}))
    return 0


def _cmd_sample(args) -> int:
    scene = load_scene(args.scene)
    oracle = SceneOracle(args.sigma_target, args.factor)
    config = ReuseConfig(T=args.T, mode="none")
    rmap, _, cplx = generate_full(oracle, scene, config, SeedStream(args.seed))
    truth = simulate(scene)
    report = metrics.evaluate(rmap, truth, r_max=args.psnr_max).to_dict()
    if args.ssim_global:
        report["ssim_global"] = metrics.ssim_global(rmap, truth, r_max=args.psnr_max)
    report["denoiser_calls"] = cplx.denoiser_calls
    if args.output:
        write_rmb(args.output, rmap)
        report["written"] = args.output
    print(json.dumps(report))
    return 0


def _cmd_reuse_sweep(args) -> int:
    spec = harness.load_spec(args.spec)
    report = harness.run_scenario(spec, cache_dir=args.cache_dir)
    _emit(report, args.output)
    if args.csv:
        csv_path = Path(args.output).with_suffix(".csv") if args.output else None
        text = harness.sweep_rows_to_csv(report)
        if csv_path:
            csv_path.write_text(text)
        else:
            sys.stdout.write(text)
    if args.plot:
        from . import plots

        outdir = Path(args.output).parent if args.output else Path.cwd()
        for path in plots.render_sweep(report, outdir):
            print(json.dumps({"figure": path}))
    return 0


def _cmd_kl_check(args) -> int:
    report = harness.run_kl_check(
        dims=args.dims, n_cases=args.cases, n_samples=args.samples, seed=args.seed
    )
    _emit(report, args.output)
    if args.plot:
        from . import plots

        outdir = Path(args.output).parent if args.output else Path.cwd()
        for path in plots.render_kl(report, outdir):
            print(json.dumps({"figure": path}))
    return 0 if report["pass_rate"] >= 0.98 else 1


def _load_pairs(path) -> tuple[list, dict]:
    from .scene import scene_from_dict

    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: not valid JSON ({e})") from None
    if not isinstance(data, dict) or "pairs" not in data:
        raise ValidationError("pairs file must be an object with a 'pairs' list")
    opt_keys = ("r_reuse", "T", "trials", "master_seed", "factor", "sigma_target")
    unknown = set(data) - {"pairs", *opt_keys}
    if unknown:
        raise ValidationError(f"unknown keys in pairs file: {sorted(unknown)}")
    pairs = []
    for i, entry in enumerate(data["pairs"]):
        if set(entry) != {"initial", "target"}:
            raise ValidationError(f"pairs[{i}] must have exactly initial and target")
        pairs.append(
            (scene_from_dict(entry["initial"]), scene_from_dict(entry["target"]))
        )
    opts = {k: data[k] for k in opt_keys if k in data}
    return pairs, opts


def _cmd_calibrate_tau(args) -> int:
    pairs, opts = _load_pairs(args.pairs)
    _, report = harness.run_calibration(
        pairs, budget=args.budget, proj_seed=args.proj_seed, **opts
    )
    _emit(report, args.output)
    if args.plot:
        from . import plots

        outdir = Path(args.output).parent if args.output else Path.cwd()
        for path in plots.render_calibration(report, outdir):
            print(json.dumps({"figure": path}))
    return 0


def _cmd_cache(args) -> int:
    cache = MidpointCache(args.dir, capacity=args.capacity)
    if args.action == "ls":
        rows = []
        for key in cache.keys():
            record = cache.peek(key)
            rows.append(
                {
                    "key": record.hex_key,
                    "t": record.t,
                    "dims": list(record.dims),
                    "dtype": record.dtype,
                    "payload_bytes": record.payload_bytes,
                    "created_at": record.created_at,
                }
            )
        print(json.dumps({"records": rows, "capacity": cache.capacity}, indent=2))
        return 0
    if args.action == "put":
        if not args.file:
            raise ValidationError("cache put requires --file")
        blob = Path(args.file).read_bytes()
        key = bytes.fromhex(args.key) if args.key else bytes.fromhex(Path(args.file).stem)
        if len(key) != 32:
            raise ValidationError("cache keys are 32-byte hex digests")
        record = decode_record(blob, key)
        cache.put(record)
        print(json.dumps({"stored": record.hex_key}))
        return 0
    if args.action == "get":
        if not args.key:
            raise ValidationError("cache get requires --key")
        record = cache.get(bytes.fromhex(args.key))
        if args.output:
            Path(args.output).write_bytes(encode_record(record))
        print(
            json.dumps(
                {
                    "key": record.hex_key,
                    "t": record.t,
                    "dims": list(record.dims),
                    "dtype": record.dtype,
                    "payload_bytes": record.payload_bytes,
                    "written": args.output,
                }
            )
        )
        return 0
    if args.action == "evict":
        key = cache.evict(bytes.fromhex(args.key) if args.key else None)
        print(json.dumps({"evicted": key.hex()}))
        return 0
    raise ValidationError(f"unknown cache action {args.action!r}")


def _cmd_flops(args) -> int:
    est = estimate_flops_saving(
        hw=args.hw,
        c_in_full=args.cin,
        c_in_static=args.cin_static,
        c_out=args.cout,
        kernel=args.k,
    )
    print(
        json.dumps(
            {
                "flops_saved": est.conv_flops_saved,
                "mflops_saved": est.conv_flops_saved / 1e6,
            }
        )
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fluxmap",
        description="Radio-map generation with diffusion midpoint reuse",
    )
    parser.add_argument("--version", action="version", version=f"fluxmap {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="render a scene's ground-truth map")
    p.add_argument("scene", help="scene JSON file")
    p.add_argument("-o", "--output", required=True, help=".rmb or .csv path")
    p.add_argument("--dtype", choices=["f32", "f16"], default="f32")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sample", help="full conditional generation for a scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--T", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sigma-target", type=float, default=DEFAULT_SIGMA_TARGET)
    p.add_argument("--factor", type=int, default=DEFAULT_FACTOR)
    p.add_argument("--psnr-max", type=float, default=1.0)
    p.add_argument("--ssim-global", action="store_true",
                   help="also report single-window SSIM over the whole raster")
    p.add_argument("-o", "--output", help="write the generated map as RMB1")
    p.set_defaults(func=_cmd_sample)

    p = sub.add_parser("reuse-sweep", help="run a scenario sweep from a spec file")
    p.add_argument("--spec", required=True)
    p.add_argument("-o", "--output", help="report JSON path (stdout if omitted)")
    p.add_argument("--csv", action="store_true", help="emit the flattened table too")
    p.add_argument("--plot", action="store_true", help="render figures next to the report")
    p.add_argument("--cache-dir", help="persistent midpoint cache directory")
    p.set_defaults(func=_cmd_reuse_sweep)

    p = sub.add_parser("kl-check", help="analytic vs Monte-Carlo divergence check")
    p.add_argument("--dims", type=int, default=16)
    p.add_argument("--cases", type=int, default=10)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=_cmd_kl_check)

    p = sub.add_parser("calibrate-tau", help="calibrate the reuse gate threshold")
    p.add_argument("--pairs", required=True, help="JSON file of scene pairs")
    p.add_argument("--budget", type=float, required=True, help="max NMSE increase")
    p.add_argument("--proj-seed", type=int, default=42)
    p.add_argument("-o", "--output")
    p.add_argument("--plot", action="store_true")
    p.set_defaults(func=_cmd_calibrate_tau)

    p = sub.add_parser("cache", help="inspect or edit a midpoint cache directory")
    p.add_argument("action", choices=["ls", "put", "get", "evict"])
    p.add_argument("--dir", required=True)
    p.add_argument("--key", help="64-char hex key")
    p.add_argument("--file", help=".mid file for put")
    p.add_argument("-o", "--output", help="destination for get")
    p.add_argument("--capacity", type=int, default=100)
    p.set_defaults(func=_cmd_cache)

    p = sub.add_parser("flops", help="condition-encoder flops saving")
    p.add_argument("--k", type=int, required=True, help="kernel size")
    p.add_argument("--cin", type=int, required=True, help="full-condition input channels")
    p.add_argument("--cin-static", type=int, required=True, help="static input channels")
    p.add_argument("--cout", type=int, required=True, help="output channels")
    p.add_argument("--hw", type=int, required=True, help="spatial side length")
    p.set_defaults(func=_cmd_flops)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except IntegrityError as e:
        print(f"integrity error: {e}", file=sys.stderr)
        return 3
    except (ValidationError, DomainError, ConfigurationError, CacheMissError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
