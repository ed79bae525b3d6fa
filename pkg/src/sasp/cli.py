"""Command line for tile pruning, simulated GEMMs, sweeps and cost lookups.

Exit codes: 0 success, 2 I/O or file-format error, 3 usage error,
4 mask-integrity violation.
"""
import argparse
import json
import re
import shutil
import sys
from pathlib import Path

from . import costmodel
from .accel import ArrayConfig, WeightFormat
from .encoder import ATTN_ROLES, FF_ROLES, EncoderConfig
from .explorer import SweepError, SweepSpec, run_sweep, to_csv, to_json
from .fileformats import FormatError, describe, read_mask, read_matrix, write_mask, write_matrix
from .fparith import FloatDomainError, QuantizedMatrix, quantize_weights
from .gemm import GemmJob, MaskIntegrityError, dense_equivalent_cycles, tiled_gemm
from .pruner import apply_mask, global_prune

EXIT_OK, EXIT_IO, EXIT_USAGE, EXIT_INTEGRITY = 0, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _csv_list(kind):
    def parse(s):
        items = [x for x in s.split(",") if x.strip()]
        try:
            return [kind(x) for x in items]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc))
    return parse


def _natural_key(p):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", p.name)]


def _array_config(size, fmt):
    try:
        return ArrayConfig(size, fmt)
    except ValueError as exc:
        raise UsageError(str(exc))


# -- prune ---------------------------------------------------------------------


def cmd_prune(args):
    if not 0.0 <= args.rate <= 1.0:
        raise UsageError(f"--rate must lie in [0, 1], got {args.rate}")
    if args.tile < 1:
        raise UsageError(f"--tile must be >= 1, got {args.tile}")
    src, dst = Path(args.input), Path(args.out)
    if not src.is_dir():
        raise FileNotFoundError(f"input directory {src} does not exist")
    roles = FF_ROLES if args.scope == "ff" else ATTN_ROLES + FF_ROLES
    layers = sorted((d for d in src.iterdir() if d.is_dir()), key=_natural_key)
    if not layers:
        raise FormatError(f"{src}: no layer subdirectories")

    prunable = []
    for d in layers:
        for role in roles:
            f = d / f"{role}.mat"
            if not f.exists():
                continue
            m = read_matrix(f)
            if isinstance(m, QuantizedMatrix):
                raise FormatError(f"{f}: pruning expects fp32 matrices")
            prunable.append((f"{d.name}/{role}", m))
    if not prunable:
        raise FormatError(f"{src}: no {'/'.join(roles)} matrices found")

    masks, report = global_prune(prunable, args.tile, args.rate)
    dst.mkdir(parents=True, exist_ok=True)
    pruned_ids = dict(prunable)
    for d in layers:
        out = dst / d.name
        out.mkdir(exist_ok=True)
        for f in sorted(d.glob("*.mat")):
            mid = f"{d.name}/{f.stem}"
            if mid in pruned_ids:
                write_matrix(out / f.name, apply_mask(pruned_ids[mid], masks[mid]))
                write_mask(out / f"{f.stem}.mask", masks[mid])
            else:
                read_matrix(f)  # validate before copying
                shutil.copyfile(f, out / f.name)
    doc = report.to_dict()
    doc["scope"] = args.scope
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.report:
        Path(args.report).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- gemm ----------------------------------------------------------------------


def cmd_gemm(args):
    fmt = WeightFormat(args.format)
    cfg = _array_config(args.size, fmt)
    w = read_matrix(args.weights)
    x = read_matrix(args.inputs)
    if isinstance(x, QuantizedMatrix):
        raise FormatError(f"{args.inputs}: inputs must be fp32")
    mask = read_mask(args.mask, w.shape) if args.mask else None
    if fmt is WeightFormat.INT8 and not isinstance(w, QuantizedMatrix):
        w = quantize_weights(w)
    elif fmt is WeightFormat.FP32 and isinstance(w, QuantizedMatrix):
        raise UsageError(f"{args.weights} holds int8 weights; use --format int8")
    if x.shape[1] != w.shape[0]:
        raise FormatError(f"shape mismatch: inputs {x.shape} x weights {w.shape}")
    if mask is not None and mask.grid.tile_size != args.size:
        raise FormatError(f"{args.mask}: tile size {mask.grid.tile_size} != --size {args.size}")
    job = GemmJob(x, w, cfg, mask)
    res = tiled_gemm(job)
    write_matrix(args.out, res.y)
    doc = res.stats.to_dict()
    doc.update(tiles_total=res.tiles_total, tiles_executed=res.tiles_executed,
               dense_equivalent_cycles=dense_equivalent_cycles(job),
               size=args.size, format=str(fmt))
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if args.stats:
        Path(args.stats).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- sweep ---------------------------------------------------------------------


def cmd_sweep(args):
    if not args.sizes or not args.formats or not args.rates:
        raise UsageError("--sizes, --formats and --rates need at least one value each")
    try:
        formats = tuple(WeightFormat(f) for f in args.formats)
        wl = EncoderConfig(n_layers=args.layers, d_model=args.dmodel, d_ff=args.dff,
                           n_heads=args.heads, seq_len=args.seqlen, seed=args.seed)
        spec = SweepSpec(tuple(args.sizes), formats, tuple(args.rates), wl,
                         scope=args.scope, qos_budget=args.budget)
    except ValueError as exc:
        raise UsageError(str(exc))
    if args.dmodel % args.heads:
        raise UsageError(f"--dmodel {args.dmodel} not divisible by --heads {args.heads}")
    if min(args.layers, args.dmodel, args.dff, args.seqlen) < 1:
        raise UsageError("workload dimensions must be positive")
    points = run_sweep(spec)
    csv_text = to_csv(points)
    if args.csv:
        Path(args.csv).write_text(csv_text)
    if args.json:
        Path(args.json).write_text(to_json(points, spec))
    if not args.csv and not args.json:
        sys.stdout.write(csv_text)
    return EXIT_OK


# -- cost / dump ---------------------------------------------------------------


def cmd_cost(args):
    cfg = _array_config(args.size, WeightFormat(args.format))
    src = costmodel.area_source(cfg)
    print(f"area_mm2 {costmodel.area_lookup(cfg):.6g} ({src})")
    print(f"rel_power {costmodel.power_model(cfg):.6g}")
    return EXIT_OK


def cmd_dump(args):
    print(describe(args.path, args.limit))
    return EXIT_OK


def build_parser():
    p = _Parser(prog="sasp", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("prune", help="tile-prune a directory of layer matrices")
    sp.add_argument("--tile", type=int, required=True)
    sp.add_argument("--rate", type=float, required=True)
    sp.add_argument("--in", dest="input", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--scope", choices=("ff", "all"), default="ff")
    sp.add_argument("--report")
    sp.set_defaults(func=cmd_prune)

    sg = sub.add_parser("gemm", help="run one GEMM on the simulated array")
    sg.add_argument("--weights", required=True)
    sg.add_argument("--inputs", required=True)
    sg.add_argument("--mask")
    sg.add_argument("--size", type=int, required=True)
    sg.add_argument("--format", choices=("fp32", "int8"), default="fp32")
    sg.add_argument("--out", required=True)
    sg.add_argument("--stats")
    sg.set_defaults(func=cmd_gemm)

    sw = sub.add_parser("sweep", help="design-space sweep on the synthetic encoder")
    sw.add_argument("--sizes", type=_csv_list(int), default=[4, 8, 16, 32])
    sw.add_argument("--formats", type=_csv_list(str), default=["fp32", "int8"])
    sw.add_argument("--rates", type=_csv_list(float), default=[0.0, 0.1, 0.2, 0.3, 0.4, 0.5])
    sw.add_argument("--layers", type=int, default=4)
    sw.add_argument("--dmodel", type=int, default=64)
    sw.add_argument("--dff", type=int, default=256)
    sw.add_argument("--seqlen", type=int, default=32)
    sw.add_argument("--heads", type=int, default=4)
    sw.add_argument("--seed", type=int, default=0)
    sw.add_argument("--scope", choices=("ff", "all"), default="ff")
    sw.add_argument("--budget", type=float, default=0.05)
    sw.add_argument("--csv")
    sw.add_argument("--json")
    sw.set_defaults(func=cmd_sweep)

    sc = sub.add_parser("cost", help="area and relative power of one configuration")
    sc.add_argument("--size", type=int, required=True)
    sc.add_argument("--format", choices=("fp32", "int8"), default="fp32")
    sc.set_defaults(func=cmd_cost)

    sd = sub.add_parser("dump", help="render a .mat or .mask file")
    sd.add_argument("path")
    sd.add_argument("--limit", type=int, default=8)
    sd.set_defaults(func=cmd_dump)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"sasp {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SweepError as exc:
        print(f"sasp {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MaskIntegrityError as exc:
        print(f"sasp {args.command}: mask integrity violation: {exc}", file=sys.stderr)
        return EXIT_INTEGRITY
    except (OSError, FormatError, FloatDomainError) as exc:
        print(f"sasp {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # remaining shape/config errors from the library layer
        print(f"sasp {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO if args.command in ("prune", "gemm", "dump") else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
