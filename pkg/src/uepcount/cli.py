"""Command-line front end: one subcommand per pipeline stage.

Every command writes its declared files and prints a one-line JSON summary.
Exit codes: 0 success, 1 data error, 2 parameter error, 3 infeasible
partition.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import formats as fmt
from .density import (KernelSpec, collect_counts, extract_local_counts, generate_density_map,
                      synth_annotations, synth_scene)
from .errors import DataError, ParameterError, UepError
from .partition import interval_stats, partition_uep
from .proxies import PROXY_METHODS, compute_proxies, derive_iph
from .quantize import decode_count_map, discretization_error, encode_class_map
from .simulate import NoiseModel, compare_strategies, fit_partition, iph_ablation, simulate_classifier

log = logging.getLogger("uepcount")

STRATEGY_CHOICES = ("uep", "uniform-len", "uniform-num")


def _pmap(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _pair(text: str, cast=float):
    try:
        a, b = text.split(",")
        return cast(a), cast(b)
    except ValueError:
        raise ParameterError(f"expected two comma-separated values, got {text!r}") from None


def _kernel(args) -> KernelSpec:
    common = {"truncate": args.truncate, "renormalize": not args.no_renormalize}
    if args.adaptive:
        k, beta = _pair(args.adaptive)
        return KernelSpec.adaptive(int(k), beta, **common)
    return KernelSpec.fixed(args.sigma, **common)


def _load_train_counts(path):
    p = Path(path)
    return collect_counts(fmt.load_local_count_maps(p)) if p.is_dir() else fmt.load_counts(p)


def cmd_synth(args):
    lo, hi = _pair(args.points, int)
    if args.layout == "uniform":
        anns = [synth_scene(int(round((lo + hi) / 2)), "uniform", args.width, args.height,
                            seed=args.seed * 100003 + i, image_id=f"img{i:04d}") for i in range(args.images)]
    else:
        anns = synth_annotations(args.images, args.seed, args.width, args.height, (lo, hi))
    fmt.save_annotations(anns, args.out, dims=args.dims)
    return {"images": len(anns), "points": sum(a.n for a in anns), "out": args.out}


def cmd_densify(args):
    if args.manifest:
        man = fmt.load_manifest(args.manifest)
        anns, spec = man.load(), man.kernel
    elif args.annotations:
        anns, spec = fmt.load_annotations(args.annotations, dims=args.dims), _kernel(args)
    else:
        raise ParameterError("densify needs an annotation file or --manifest")
    maps = _pmap(lambda a: generate_density_map(a, spec), anns, args.jobs)
    fmt.save_maps(maps, args.out, args.format)
    return {"images": len(maps), "total": float(sum(m.values.sum() for m in maps)), "out": args.out}


def cmd_counts(args):
    dens = fmt.load_density_maps(args.density)
    lcs = _pmap(lambda d: extract_local_counts(d, args.patch_size), dens, args.jobs)
    fmt.save_maps(lcs, args.out, args.format)
    t = collect_counts(lcs)
    if args.collection:
        fmt.save_counts(t, args.collection)
    return {"images": len(lcs), "K": t.K, "t_max": t.t_max, "out": args.out}


def cmd_partition(args):
    t = _load_train_counts(args.counts)
    if args.strategy == "uep":
        search = _pair(args.search) if args.search else None
        p, state = partition_uep(t, args.m, args.t0, args.epsilon, search)
        extra = {"iterations": state.iterations, "final_l_bar": p.final_l_bar, "epsilon": p.epsilon}
    else:
        p, extra = fit_partition(t, args.strategy, args.m, args.t0), {}
    fmt.save_partition(p, args.out)
    st = interval_stats(t, p)
    return {"strategy": p.strategy, "m": p.m, "t0": p.t0, "t_max": p.t_max, "nl_cv": st.nl_cv(), **extra,
            "out": args.out}


def cmd_proxies(args):
    t = _load_train_counts(args.counts)
    p = fmt.load_partition(args.partition)
    tab = compute_proxies(t, p, args.proxies, args.background_zero)
    fmt.save_proxies(tab, args.out)
    return {"method": tab.method, "m": tab.m, "empty": int(tab.empty.sum()), "out": args.out}


def cmd_iph(args):
    t = _load_train_counts(args.counts)
    p = fmt.load_partition(args.partition)
    tab = fmt.load_proxies(args.proxy_table)
    pair = derive_iph(t, (p, tab))
    fmt.save_iph(pair, args.out)
    return {"head0_m": p.m, "head1_m": pair.head1[0].m, "head1_empty": int(pair.head1[1].empty.sum()),
            "out": args.out}


def cmd_quantize(args):
    lcs = fmt.load_local_count_maps(args.counts_dir)
    p = fmt.load_partition(args.partition)
    cls = _pmap(lambda lc: encode_class_map(lc, p), lcs, args.jobs)
    fmt.save_maps(cls, args.out)
    out = {"images": len(cls), "clamped": sum(c.clamped for c in cls), "out": args.out}
    if args.decode:
        if not args.decoded_out:
            raise ParameterError("--decode needs --decoded-out")
        tab = fmt.load_proxies(args.decode)
        dec = [decode_count_map(c, tab, lc.patch_size) for c, lc in zip(cls, lcs)]
        fmt.save_maps(dec, args.decoded_out)
        out["decoded_out"] = args.decoded_out
    return out


def cmd_analyze(args):
    lcs = fmt.load_local_count_maps(args.counts_dir)
    p = fmt.load_partition(args.partition)
    if args.proxy_table:
        tab = fmt.load_proxies(args.proxy_table)
    else:
        fit = _load_train_counts(args.fit) if args.fit else collect_counts(lcs)
        tab = compute_proxies(fit, p, args.proxies, args.background_zero)
    rep = discretization_error(lcs, p, tab)
    rep.meta = {"strategy": p.strategy, "proxies": tab.method}
    fmt.save_report(rep, args.out)
    if args.csv:
        fmt.write_report_csv(rep, args.csv)
    return {**rep.summary(), "proxies": tab.method, "out": args.out}


def cmd_simulate(args):
    cls = fmt.load_class_maps(args.class_dir)
    noise = NoiseModel.parse(args.noise, args.seed)
    noisy = _pmap(lambda c: simulate_classifier(c, noise, args.stream), cls, args.jobs)
    fmt.save_maps(noisy, args.out)
    changed = sum(int((a.values != b.values).sum()) for a, b in zip(cls, noisy))
    cells = sum(c.values.size for c in cls)
    return {"images": len(noisy), "flipped_fraction": changed / cells, "out": args.out}


def cmd_compare(args):
    t = _load_train_counts(args.train)
    ev = fmt.load_local_count_maps(args.eval)
    noise = NoiseModel.parse(args.noise, args.seed)
    seeds = list(range(args.seed, args.seed + args.seeds))
    strategies = [s.strip() for s in args.strategies.split(",")]
    methods = [s.strip() for s in args.proxies.split(",")]
    for s in strategies:
        if s not in STRATEGY_CHOICES:
            raise ParameterError(f"unknown strategy {s!r}")
    for s in methods:
        if s not in PROXY_METHODS:
            raise ParameterError(f"unknown proxy method {s!r}")
    cm = compare_strategies(t, ev, args.m, noise, strategies, methods, seeds, args.t0, args.epsilon,
                            args.background_zero, args.jobs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    fmt.save_comparison(cm, out / "comparison.json")
    fmt.write_comparison_csv(cm, out / "comparison.csv")
    fmt.write_per_image_csv(cm, out / "per_image.csv")
    if args.plot_data:
        fmt.write_plot_data(cm, out / "plot_data.csv")
    summary = {f"{c.strategy}+{c.method}": (None if c.infeasible else round(c.mae, 6)) for c in cm.rows()}
    if args.iph:
        rep = iph_ablation(t, ev, args.m, noise, seeds, args.t0, args.epsilon, jobs=args.jobs)
        fmt.write_json(fmt.iph_report_to_dict(rep), out / "iph.json")
        summary["iph"] = rep.summary()
    return {"seeds": len(seeds), "mae": summary, "out": str(out)}


def cmd_report(args):
    doc = fmt.read_json(args.file)
    tag = doc.get("format", "") if isinstance(doc, dict) else ""
    lines = []
    if tag.startswith("uep-report/"):
        rep = fmt.report_from_dict(doc)
        if args.csv:
            fmt.write_report_csv(rep, args.csv)
        lines.append(f"{'class':>5} {'n':>8} {'length':>12} {'n*l':>12} {'class MAE':>12}")
        for i, (n, l, cmae) in enumerate(zip(rep.n, rep.length, rep.class_mae)):
            lines.append(f"{i:>5} {n:>8} {l:>12.6g} {n * l:>12.6g} {cmae:>12.6g}")
        lines.append(f"MAE {rep.mae:.6g}  MSE {rep.mse:.6g}  pooled {rep.pooled_abs:.6g}")
        summary = rep.summary()
    elif tag.startswith("uep-comparison/"):
        cm = fmt.comparison_from_dict(doc)
        if args.csv:
            fmt.write_comparison_csv(cm, args.csv)
        lines.append(f"{'strategy':<12} {'proxies':<14} {'MAE':>10} {'MSE':>10} {'disc':>10} {'nl CV':>8}")
        for c in cm.rows():
            if c.infeasible:
                lines.append(f"{c.strategy:<12} {c.method:<14} infeasible: {c.infeasible}")
            else:
                lines.append(f"{c.strategy:<12} {c.method:<14} {c.mae:>10.4f} {c.mse:>10.4f} "
                             f"{c.disc_error:>10.4f} {c.nl_cv:>8.3f}")
        summary = {"cells": len(cm.cells)}
    else:
        raise DataError(f"{args.file}: not a report or comparison document (format {tag!r})")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stderr.write(text)
    return {**summary, "file": args.file}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="uepcount", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def jobs(p):
        p.add_argument("--jobs", type=int, default=1, help="worker threads for per-image work")

    def quant(p, default_m=25):
        p.add_argument("--m", type=int, default=default_m, help="number of intervals (default 25)")
        p.add_argument("--t0", type=float, default=1.6e-4, help="background border (default 1.6e-4)")
        p.add_argument("--epsilon", type=float, default=None,
                       help="bisection tolerance on H-L (default 1e-6 * K * t_max)")

    p = sub.add_parser("synth", help="generate synthetic annotations")
    p.add_argument("--images", type=int, default=8)
    p.add_argument("--points", default="20,600", help="min,max heads per image")
    p.add_argument("--layout", choices=("clusters", "uniform"), default="clusters")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", help="dimensions sidecar when --out is .csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("densify", help="annotations -> density maps")
    p.add_argument("annotations", nargs="?")
    p.add_argument("--manifest")
    p.add_argument("--dims")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--sigma", type=float, default=15.0)
    g.add_argument("--adaptive", metavar="K,BETA")
    p.add_argument("--truncate", type=float, default=4.0)
    p.add_argument("--no-renormalize", action="store_true")
    p.add_argument("--format", choices=("bin", "csv"), default="bin")
    p.add_argument("--out", required=True)
    jobs(p)
    p.set_defaults(func=cmd_densify)

    p = sub.add_parser("counts", help="density maps -> local-count maps and the pooled collection")
    p.add_argument("density")
    p.add_argument("--patch-size", type=int, default=8)
    p.add_argument("--format", choices=("bin", "csv"), default="bin")
    p.add_argument("--collection", help="write the sorted count collection here")
    p.add_argument("--out", required=True)
    jobs(p)
    p.set_defaults(func=cmd_counts)

    p = sub.add_parser("partition", help="fit interval borders")
    p.add_argument("counts", help="count collection file or local-count map directory")
    p.add_argument("--strategy", choices=STRATEGY_CHOICES, default="uep")
    quant(p)
    p.add_argument("--search", metavar="L,H")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("proxies", help="compute interval proxies")
    p.add_argument("counts")
    p.add_argument("--partition", required=True)
    p.add_argument("--proxies", choices=PROXY_METHODS, default="mcp")
    p.add_argument("--background-zero", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_proxies)

    p = sub.add_parser("iph", help="derive the interleaved second head")
    p.add_argument("counts")
    p.add_argument("--partition", required=True)
    p.add_argument("--proxy-table", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_iph)

    p = sub.add_parser("quantize", help="local-count maps -> class maps")
    p.add_argument("counts_dir")
    p.add_argument("--partition", required=True)
    p.add_argument("--decode", metavar="PROXIES_JSON")
    p.add_argument("--decoded-out")
    p.add_argument("--out", required=True)
    jobs(p)
    p.set_defaults(func=cmd_quantize)

    p = sub.add_parser("analyze", help="discretization error under perfect classification")
    p.add_argument("counts_dir")
    p.add_argument("--partition", required=True)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--proxy-table")
    g.add_argument("--proxies", choices=PROXY_METHODS, default="mcp")
    p.add_argument("--fit", help="fit proxies on this collection instead of the analysed maps")
    p.add_argument("--background-zero", action="store_true")
    p.add_argument("--csv")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="perturb class maps with a noise model")
    p.add_argument("class_dir")
    p.add_argument("--noise", default="adjacent:0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--stream", type=int, default=0)
    p.add_argument("--out", required=True)
    jobs(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="strategy x proxy comparison under simulated noise")
    p.add_argument("--train", required=True)
    p.add_argument("--eval", required=True)
    quant(p)
    p.add_argument("--strategies", default=",".join(STRATEGY_CHOICES))
    p.add_argument("--proxies", default="mcp,midpoint")
    p.add_argument("--background-zero", action="store_true")
    p.add_argument("--noise", default="adjacent:0.1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--seeds", type=int, default=1)
    p.add_argument("--plot-data", action="store_true")
    p.add_argument("--iph", action="store_true", help="also run the single-head vs IPH ablation")
    p.add_argument("--out", required=True)
    jobs(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="render a report or comparison document")
    p.add_argument("file")
    p.add_argument("--csv")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        summary = args.func(args)
    except UepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps({"command": args.command, **summary}, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
