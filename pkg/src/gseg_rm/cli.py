"""Command-line interface: ``detect``, ``segment``, ``critical-values``, ``simulate``.

Every command writes one report (JSON by default, CSV with ``--format csv``)
to stdout or ``--output``.  Reports carry the seed and library version and
no timestamps, so the same arguments give byte-identical output.

Exit codes: 0 success, 1 degenerate statistics under ``--strict``,
2 invalid input or arguments.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .dataset import FAMILIES, DatasetError, load_panel_csv, generate
from .detect import ScanResult, detect_graph
from .graph import DEFAULT_K, GraphError, similarity_graph
from .moments import NullMoments, UnsupportedSizeError
from .permutation import permutation_test
from .pvalue import CHANNELS, critical_value
from .segmentation import binary_segmentation
from .study import power_study, setting_config

log = logging.getLogger("gseg_rm")

EXIT_OK, EXIT_DEGENERATE, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

def _fraction(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"expected a value in (0, 1), got {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a nonnegative integer, got {text}")
    return value


def _int_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--seed", type=int, default=0, help="seed for all randomness (default 0)")
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--output", "-o", type=Path, help="write the report here instead of stdout")
    p.add_argument("--strict", action="store_true", help="exit 1 when a statistic is degenerate")


def _add_data(p: argparse.ArgumentParser, required: bool):
    g = p.add_argument_group("data", "either --input with --n/--ell, or a generator setting")
    g.add_argument("--input", type=Path, help="panel CSV: individual_id, rep_index, features...")
    g.add_argument("--n", type=_positive_int, help="number of individuals")
    g.add_argument("--ell", type=_positive_int, help="repeated measurements per individual")
    g.add_argument("--family", choices=FAMILIES, help="generate data from this family")
    g.add_argument("--setting", type=int, choices=(1, 2, 3, 4), default=1)
    g.add_argument("--d", type=_positive_int, default=40, help="dimension of generated data")
    g.add_argument("--tau", type=int, default=None, help="change-point of generated data")
    p.set_defaults(data_required=required)


def _add_test(p: argparse.ArgumentParser):
    p.add_argument("--k", type=_positive_int, default=DEFAULT_K, help="k of the k-MST (default 9)")
    p.add_argument("--n0-frac", type=_fraction, default=0.05, help="window start fraction (default 0.05)")
    p.add_argument("--n1-frac", type=_fraction, default=0.95, help="window end fraction (default 0.95)")
    p.add_argument("--alpha", type=_fraction, default=0.05)
    p.add_argument("--correction", choices=("A1", "A2"), default="A2")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gseg-rm", description="Graph-based change-point detection for repeated measurements"
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="test for a single change-point")
    _add_data(p, required=True)
    _add_test(p)
    p.add_argument("--permutations", type=_nonneg_int, default=0, help="B permutations (0 = analytic only)")
    _add_common(p)

    p = sub.add_parser("segment", help="estimate multiple change-points by binary segmentation")
    _add_data(p, required=True)
    _add_test(p)
    p.add_argument("--min-seg", type=int, default=None, help="minimum segment length")
    p.add_argument("--bonferroni", action="store_true", help="test depth j at alpha / 2^j")
    _add_common(p)

    p = sub.add_parser("critical-values", help="A1, A2 and permutation critical values")
    _add_data(p, required=False)
    _add_test(p)
    p.add_argument("--permutations", type=_nonneg_int, default=0)
    _add_common(p)

    p = sub.add_parser("simulate", help="power study over generator settings")
    p.add_argument("--family", choices=FAMILIES, default="gaussian")
    p.add_argument("--settings", type=_int_list, default=[1, 2, 3, 4])
    p.add_argument("--dims", type=_int_list, default=[40])
    p.add_argument("--replicates", "-R", type=_nonneg_int, default=100)
    p.add_argument("--n", type=_positive_int, default=100)
    p.add_argument("--ell", type=_positive_int, default=5)
    p.add_argument("--tau", type=int, default=50)
    p.add_argument("--radius", type=_nonneg_int, default=10, help="localization radius around tau")
    p.add_argument("--checkpoint", type=Path, help="append-only CSV of finished replicates")
    _add_test(p)
    _add_common(p)
    return parser


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------

def _load_data(args):
    if args.input is not None:
        if args.family is not None:
            raise InputError("give either --input or --family, not both")
        if args.n is None or args.ell is None:
            raise InputError("--input needs --n and --ell")
        if not args.input.exists():
            raise InputError(f"input file not found: {args.input}")
        return load_panel_csv(args.input, args.n, args.ell), {"input": str(args.input)}
    if args.family is not None:
        n = args.n or 100
        ell = args.ell or 5
        cfg = setting_config(args.family, args.setting, args.tau, args.seed)
        source = {"family": args.family, "setting": args.setting, "n": n, "ell": ell, "d": args.d, "tau": args.tau}
        return generate(cfg, n, ell, args.d), source
    if args.data_required:
        raise InputError("no data: give --input (with --n, --ell) or --family")
    return None, None


def _window(args, n: int) -> tuple[int, int]:
    if not args.n0_frac < args.n1_frac:
        raise InputError(f"--n0-frac ({args.n0_frac}) must be below --n1-frac ({args.n1_frac})")
    n0 = max(1, math.ceil(args.n0_frac * n - 1e-9))
    n1 = min(n - 1, math.floor(args.n1_frac * n + 1e-9))
    if not n0 < n1:
        raise InputError(f"window [{n0}, {n1}] is empty for n={n}")
    return n0, n1


def _header(args, command: str) -> dict:
    return {"command": command, "version": __version__, "seed": args.seed}


def _round(x, digits=12):
    if x is None or (isinstance(x, float) and not math.isfinite(x)):
        return None
    return float(f"{x:.{digits}g}")


def _emit(args, report: dict, rows: list[dict]) -> None:
    if args.format == "json":
        text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    else:
        buf = io.StringIO()
        if rows:
            writer = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
        text = buf.getvalue()
    if args.output is not None:
        args.output.write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def _detect_report(res: ScanResult) -> dict:
    d = res.to_dict()
    return {k: (_round(v) if isinstance(v, float) else v) for k, v in d.items()}


def cmd_detect(args) -> tuple[dict, list[dict], bool]:
    ds, source = _load_data(args)
    g = similarity_graph(ds, args.k)
    n0, n1 = _window(args, ds.n)
    res = detect_graph(g, n0, n1, args.alpha, args.correction, args.permutations, args.seed)
    result = _detect_report(res)
    for ch in result["channels"].values():
        for key in ("at_tau", "max", "p_value"):
            ch[key] = _round(ch[key])
    report = {**_header(args, "detect"), "data": source, "k": args.k, "result": result}
    rows = [
        {
            "channel": name,
            "at_tau": ch["at_tau"],
            "max": ch["max"],
            "argmax": ch["argmax"],
            "p_value": ch["p_value"],
            "tau_hat": result["tau_hat"],
            "m_star": result["m_star"],
            "p_m": result["p_value"],
            "decision": result["decision"],
        }
        for name, ch in result["channels"].items()
    ]
    return report, rows, res.degenerate


def cmd_segment(args) -> tuple[dict, list[dict], bool]:
    ds, source = _load_data(args)
    if args.n0_frac != 1 - args.n1_frac:
        log.warning("segment uses a symmetric window; --n1-frac is ignored")
    seg = binary_segmentation(
        ds,
        alpha=args.alpha,
        min_seg=args.min_seg,
        k=args.k,
        window=args.n0_frac,
        correction=args.correction,
        bonferroni=args.bonferroni,
    )
    points = [
        {
            "position": c.position,
            "p_value": _round(c.p_value),
            "depth": c.depth,
            "channel_p_values": {k: _round(v) for k, v in c.channel_p_values.items()},
        }
        for c in seg.change_points
    ]
    tree = [
        {
            "start": s.start,
            "stop": s.stop,
            "depth": s.depth,
            "status": s.status,
            "p_value": _round(s.p_value),
            "tau_hat": s.tau_hat,
            "alpha": _round(s.alpha),
        }
        for s in seg.tree
    ]
    report = {
        **_header(args, "segment"),
        "data": source,
        "k": args.k,
        "alpha": args.alpha,
        "min_seg": seg.min_seg,
        "bonferroni": seg.bonferroni,
        "change_points": points,
        "tree": tree,
    }
    rows = [{"position": p["position"], "p_value": p["p_value"], "depth": p["depth"]} for p in points]
    return report, rows, False


def cmd_critical_values(args) -> tuple[dict, list[dict], bool]:
    ds, source = _load_data(args)
    if ds is None and args.n is None:
        raise InputError("critical-values needs --n (A1 only) or data for the A2/permutation columns")
    n = ds.n if ds is not None else args.n
    n0, n1 = _window(args, n)
    table = {"A1": {ch: _round(critical_value(args.alpha, ch, "A1", n, n0, n1), 6) for ch in CHANNELS}}
    degenerate = False
    graph_info = None
    if ds is not None:
        g = similarity_graph(ds, args.k)
        moments = NullMoments(g)
        degenerate = not moments.within_enabled
        channels = CHANNELS if moments.within_enabled else ("out_w", "out_d")
        table["A2"] = {ch: _round(critical_value(args.alpha, ch, "A2", n, n0, n1, moments), 6) for ch in channels}
        if args.permutations:
            perm = permutation_test(g, n0, n1, B=args.permutations, seed=args.seed, moments=moments)
            table["Per"] = {ch: _round(perm.critical_value(args.alpha, ch), 6) for ch in channels}
        graph_info = {"n_out": g.n_out, "n_in": g.n_in, "varrho": _round(moments.varrho())}
    report = {
        **_header(args, "critical-values"),
        "data": source,
        "n": n,
        "n0": n0,
        "n1": n1,
        "alpha": args.alpha,
        "k": args.k,
        "permutations": args.permutations,
        "graph": graph_info,
        "critical_values": table,
    }
    rows = [{"method": m, **{ch: vals.get(ch) for ch in CHANNELS}} for m, vals in table.items()]
    return report, rows, degenerate


def cmd_simulate(args) -> tuple[dict, list[dict], bool]:
    if any(s not in (1, 2, 3, 4) for s in args.settings):
        raise InputError(f"settings must be drawn from 1..4, got {args.settings}")
    if args.n0_frac != 0.05 or args.n1_frac != 0.95:
        raise InputError("simulate uses the default window; --n0-frac/--n1-frac are not supported")
    rows, _ = power_study(
        family=args.family,
        settings=args.settings,
        dims=args.dims,
        replicates=args.replicates,
        n=args.n,
        ell=args.ell,
        tau=args.tau,
        alpha=args.alpha,
        k=args.k,
        correction=args.correction,
        seed=args.seed,
        radius=args.radius,
        checkpoint=args.checkpoint,
    )
    table = [
        {
            "family": r.family,
            "setting": r.setting,
            "d": r.d,
            "replicates": r.replicates,
            "rejections": r.rejections,
            "localized": r.localized,
        }
        for r in rows
    ]
    report = {
        **_header(args, "simulate"),
        "family": args.family,
        "n": args.n,
        "ell": args.ell,
        "tau": args.tau,
        "radius": args.radius,
        "alpha": args.alpha,
        "k": args.k,
        "correction": args.correction,
        "table": table,
    }
    return report, table, False


COMMANDS = {
    "detect": cmd_detect,
    "segment": cmd_segment,
    "critical-values": cmd_critical_values,
    "simulate": cmd_simulate,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        report, rows, degenerate = COMMANDS[args.command](args)
    except (InputError, DatasetError, GraphError, UnsupportedSizeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    _emit(args, report, rows)
    if degenerate:
        log.warning("degenerate statistics (see warnings in the report)")
        if args.strict:
            return EXIT_DEGENERATE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
