"""Command-line front end.

Subcommands::

    lcdm lcdm      --mesh M.off --grid G.txt --out distances.csv
    lcdm pooled    --distances D.csv --out results/
    lcdm censor    --distances D.csv --out curves.csv
    lcdm simulate  CASE --mode {pooled,censor} --out summary.csv

Exit codes: 0 success, 2 unreadable or malformed input, 3 invalid
configuration or data constraint, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from itertools import combinations
from pathlib import Path
from typing import Callable, Sequence

from . import __version__, stats
from .censor import RosterEntry, SweepConfig, extract_ranges, sweep
from .correction import Method, adjust
from .dataset import (CensorSpec, Hemisphere, descriptives, histogram, kde, pools_by_group,
                      subject_vs_group_wrs, trim)
from .geometry import Label, compute_lcdm
from .io import (InputError, read_config, read_grid, read_off, read_subject_csv, write_csv,
                 write_manifest)
from .montecarlo import MCConfig, MonteCarloError, binomial_critical_rate, run_censor_mc, run_size_power
from .simgen import AlternativeCase, case_params, parse_generator_spec
from .stats import Alternative

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CONFIG = 3
EXIT_NUMERIC = 4


class ConfigError(Exception):
    """Invalid flag or configuration value."""


class Settings:
    """Flag values with config-file fallback; flags win."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.file = read_config(args.config) if getattr(args, "config", None) else {}

    def get(self, name: str, default=None, cast: Callable = str):
        attr = name.replace("-", "_")
        value = getattr(self.args, attr, None)
        if value is not None:
            return value
        if name in self.file:
            try:
                return cast(self.file[name])
            except (TypeError, ValueError):
                raise ConfigError(f"bad value for '{name}' in config: {self.file[name]!r}") from None
        return default

    def resolved(self, names: Sequence[str]) -> dict:
        return {n: self.get(n) for n in names}


def _split_list(text: str | None) -> list[str]:
    if text is None:
        return []
    if isinstance(text, (list, tuple)):
        return list(text)
    return [t.strip() for t in str(text).split(",") if t.strip()]


def _alternatives(text: str | None, default: str) -> list[Alternative]:
    try:
        return [Alternative.parse(a) for a in _split_list(text or default)]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _test_names(text: str | None, default: str, pairwise: bool) -> list[str]:
    if text is not None and str(text).strip().lower() in ("", "none"):
        return []
    try:
        return [stats.canonical_test_name(t, pairwise) for t in _split_list(text or default)]
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _method(text: str | None, default: str) -> Method:
    try:
        return Method.parse(text or default)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


# --------------------------------------------------------------------------
# lcdm


def cmd_lcdm(args: argparse.Namespace) -> int:
    mesh = read_off(args.mesh)
    grid = read_grid(args.grid)
    out = compute_lcdm(grid, mesh)
    rows = [(int(i), int(j), int(k), Label(int(lab)).name, d)
            for (i, j, k), lab, d in zip(out.index, out.labels, out.signed_distance)]
    write_csv(args.out, ("i", "j", "k", "label", "signed_distance_mm"), rows)
    write_manifest(args.out, "lcdm", {"mesh": args.mesh, "grid": args.grid},
                   inputs=[args.mesh, args.grid])
    return EXIT_OK


# --------------------------------------------------------------------------
# shared loading for pooled / censor


def _load_pools(settings: Settings):
    subjects = read_subject_csv(settings.args.distances)
    trim_lo = settings.get("trim-lo", -0.5, float)
    trim_hi = settings.get("trim-hi", 5.5, float)
    no_trim = bool(getattr(settings.args, "no_trim", False))
    trimmed, stats_by_subject = [], {}
    for s in subjects:
        if no_trim:
            kept, below, above = s.distances, 0, 0
        else:
            tr = trim(s.distances, trim_lo, trim_hi)
            kept, below, above = tr.kept, tr.below, tr.above
        stats_by_subject[(s.subject_id, s.hemisphere)] = (below, above)
        trimmed.append(type(s)(s.subject_id, s.group, s.hemisphere, kept))
    hemi_filter = settings.get("hemisphere")
    hemis = list(dict.fromkeys(s.hemisphere for s in trimmed))
    if hemi_filter is not None:
        try:
            wanted = Hemisphere.parse(hemi_filter)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if wanted not in hemis:
            raise ConfigError(f"no rows for hemisphere {wanted.value!r}")
        hemis = [wanted]
    order = _split_list(settings.get("groups")) or None
    by_hemi = {}
    for h in hemis:
        subs = [s for s in trimmed if s.hemisphere is h]
        if order is not None:
            subs = [s for s in subs if s.group in order]
        try:
            pools = pools_by_group(subs, order)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if len(pools) < 2:
            raise ConfigError(f"hemisphere {h.value!r}: need at least two groups, found {len(pools)}")
        empty = [p.group for p in pools if len(p) == 0]
        if empty:
            raise ConfigError(f"hemisphere {h.value!r}: group(s) {', '.join(empty)} empty after trimming")
        by_hemi[h] = (subs, pools)
    return by_hemi, stats_by_subject, (trim_lo, trim_hi, no_trim)


# --------------------------------------------------------------------------
# pooled


def cmd_pooled(args: argparse.Namespace) -> int:
    st = Settings(args)
    multi = _test_names(st.get("tests"), "BF,KW,F1,F2", pairwise=False)
    pair_tests = _test_names(st.get("pairwise-tests"), "BF,WRS,t,KS", pairwise=True)
    method = _method(st.get("correction"), "holm")
    alts = _alternatives(st.get("alternative"), "two,less,greater")
    by_hemi, trim_counts, trim_cfg = _load_pools(st)
    out = Path(args.out)

    desc_rows, omni_rows, pair_rows, summary_rows = [], [], [], []
    kde_rows, hist_rows, loo_rows = [], [], []
    for hemi, (subs, pools) in by_hemi.items():
        for p in pools:
            d = descriptives(p)
            below = sum(trim_counts[(sid, hemi)][0] for sid in p.subjects)
            above = sum(trim_counts[(sid, hemi)][1] for sid in p.subjects)
            total = d.n + below + above
            desc_rows.append((hemi.value, p.group, len(p.subjects), d.n, d.mean, d.median, d.sd,
                              below, above, below / total, above / total))
        arrays = [p.distances for p in pools]
        for t in multi:
            r = stats.MULTI_GROUP_TESTS[t](*arrays)
            df = r.df or ()
            omni_rows.append((hemi.value, t, r.statistic, *(list(df) + [None, None])[:2], r.pvalue))
        pairs = list(combinations(range(len(pools)), 2))
        for t in pair_tests:
            adjusted = {}
            for alt in alts:
                res = [stats.PAIRWISE_TESTS[t](arrays[a], arrays[b], alt) for a, b in pairs]
                padj = adjust([r.pvalue for r in res], method)
                for (a, b), r, q in zip(pairs, res, padj):
                    adjusted[(a, b, alt)] = q
                    pair_rows.append((hemi.value, pools[a].group, pools[b].group, t, alt.value,
                                      r.statistic, r.pvalue, q, method.value))
            if Alternative.LESS in alts and Alternative.GREATER in alts:
                for a, b in pairs:
                    lo, hi = adjusted[(a, b, Alternative.LESS)], adjusted[(a, b, Alternative.GREATER)]
                    tag = "l" if lo <= hi else "g"
                    summary_rows.append((hemi.value, pools[a].group, pools[b].group, t, min(lo, hi), tag))
        if args.plot_data:
            for p in pools:
                xs, ys = kde(p.distances)
                kde_rows.extend((hemi.value, p.group, x, y) for x, y in zip(xs, ys))
                lo_e, hi_e, cnt = histogram(p.distances, args.bin_width)
                hist_rows.extend((hemi.value, p.group, a, b, c) for a, b, c in zip(lo_e, hi_e, cnt))
        if args.leave_one_out:
            for s in subs:
                if s.distances.size == 0:
                    continue
                zs = subject_vs_group_wrs(s, pools, subs)
                loo_rows.extend((hemi.value, s.subject_id, s.group, p.group, z) for p, z in zip(pools, zs))

    write_csv(out / "descriptives.csv",
              ("hemisphere", "group", "n_subjects", "n", "mean", "median", "sd",
               "trimmed_below", "trimmed_above", "frac_below", "frac_above"), desc_rows)
    write_csv(out / "omnibus.csv", ("hemisphere", "test", "statistic", "df1", "df2", "p"), omni_rows)
    write_csv(out / "pairwise.csv",
              ("hemisphere", "group1", "group2", "test", "alternative", "statistic", "p",
               "p_adjusted", "method"), pair_rows)
    written = ["descriptives.csv", "omnibus.csv", "pairwise.csv"]
    if summary_rows:
        write_csv(out / "pairwise_summary.csv",
                  ("hemisphere", "group1", "group2", "test", "p_adjusted", "direction"), summary_rows)
        written.append("pairwise_summary.csv")
    if args.plot_data:
        write_csv(out / "kde.csv", ("hemisphere", "group", "x", "density"), kde_rows)
        write_csv(out / "histogram.csv", ("hemisphere", "group", "bin_lo", "bin_hi", "count"), hist_rows)
        written += ["kde.csv", "histogram.csv"]
    if args.leave_one_out:
        write_csv(out / "leave_one_out_wrs.csv",
                  ("hemisphere", "subject_id", "group", "vs_group", "z"), loo_rows)
        written.append("leave_one_out_wrs.csv")
    config = st.resolved(["tests", "pairwise-tests", "correction", "alternative", "hemisphere", "groups"])
    config.update(trim_lo=trim_cfg[0], trim_hi=trim_cfg[1], no_trim=trim_cfg[2],
                  resolved_tests=multi, resolved_pairwise=pair_tests, method=method.value)
    write_manifest(out, "pooled", config, inputs=[args.distances], outputs=[out / w for w in written])
    return EXIT_OK


# --------------------------------------------------------------------------
# censor


def _censor_spec(st: Settings, default: CensorSpec) -> CensorSpec:
    try:
        return CensorSpec(
            delta=st.get("delta", default.delta, float),
            d_max=st.get("dmax", default.d_max, float),
            analysis_lo=st.get("analysis-lo", default.analysis_lo, float),
            voxel_size=st.get("voxel-size", default.voxel_size, float),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def cmd_censor(args: argparse.Namespace) -> int:
    st = Settings(args)
    multi = _test_names(st.get("tests"), "BF,KW", pairwise=False)
    pair_tests = _test_names(st.get("pairwise-tests"), "BF,WRS", pairwise=True)
    alts = _alternatives(st.get("alternative"), "two")
    method = _method(st.get("correction"), "bh")
    alpha = st.get("alpha", 0.05, float)
    guard = st.get("guard", 10, int)
    spec = _censor_spec(st, CensorSpec())
    by_hemi, _, trim_cfg = _load_pools(st)
    if len(by_hemi) != 1:
        raise ConfigError("distances cover several hemispheres; choose one with --hemisphere")
    (hemi, (_, pools)), = by_hemi.items()
    roster = [RosterEntry(t) for t in multi]
    for a, b in combinations(range(len(pools)), 2):
        roster += [RosterEntry(t, (a, b), alt) for t in pair_tests for alt in alts]
    try:
        cfg = SweepConfig(spec, guard, method)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    curves = sweep(pools, cfg, roster, fast=bool(args.fast))

    k = len(pools)
    rows, range_rows = [], []
    for c in curves:
        for t, g in enumerate(c.gamma):
            counts = list(c.counts[t]) + [None] * (k - c.counts.shape[1])
            rows.append((g, c.test, c.alternative.value, c.p[t], c.p_adjusted[t], c.method.value, *counts))
        for kind, values in (("raw", c.p), ("adjusted", c.p_adjusted)):
            for iv in extract_ranges(c.gamma, values, alpha).intervals:
                range_rows.append((c.test, c.alternative.value, kind, alpha, iv.lo, iv.hi, iv.extremum, iv.at))
    out = Path(args.out)
    header = ["gamma_mm", "test", "alternative", "p", "p_adjusted", "method"] + [f"n_group{i + 1}" for i in range(k)]
    ranges_path = out.with_name(out.stem + ".ranges.csv")
    write_csv(out, header, rows)
    write_csv(ranges_path, ("test", "alternative", "curve", "alpha", "gamma_lo", "gamma_hi", "min_p", "at_gamma"),
              range_rows)
    config = st.resolved(["tests", "pairwise-tests", "alternative", "correction", "delta", "dmax",
                          "analysis-lo", "alpha", "guard", "hemisphere", "groups"])
    config.update(groups_resolved=[p.group for p in pools], hemisphere_resolved=hemi.value,
                  delta_resolved=spec.delta, dmax_resolved=spec.d_max,
                  analysis_lo_resolved=spec.analysis_lo, trim_lo=trim_cfg[0], trim_hi=trim_cfg[1],
                  fast=bool(args.fast))
    write_manifest(out, "censor", config, inputs=[args.distances], outputs=[out, ranges_path])
    return EXIT_OK


# --------------------------------------------------------------------------
# simulate


def _custom_case(case: AlternativeCase | None, st: Settings, censor: CensorSpec) -> AlternativeCase:
    specs = list(case.specs) if case is not None else [None, None, None]
    for i, key in enumerate(("x", "y", "z")):
        text = st.file.get(key)
        if text is None:
            continue
        fields = dict(item.split("=", 1) for item in text.split() if "=" in item)
        try:
            specs[i] = parse_generator_spec(fields)
        except ValueError as exc:
            raise ConfigError(f"generator {key}: {exc}") from None
    if any(s is None for s in specs):
        raise ConfigError("custom case needs generators x, y and z in the config file")
    cid = case.case_id if case is not None else "CUSTOM"
    return AlternativeCase(cid, specs[0], specs[1], specs[2], censor)


def cmd_simulate(args: argparse.Namespace) -> int:
    st = Settings(args)
    mode = st.get("mode", "pooled")
    if mode not in ("pooled", "censor"):
        raise ConfigError(f"unknown mode {mode!r}")
    case_id = args.case.upper()
    try:
        base = None if case_id == "CUSTOM" else case_params(case_id)
    except KeyError as exc:
        raise ConfigError(str(exc.args[0])) from None
    censor = _censor_spec(st, base.censor if base is not None else CensorSpec(0.01, 7.0, 0.0))
    case = _custom_case(base, st, censor)

    default_n = 1000 if mode == "pooled" else 10000
    sizes = st.get("sizes", None, lambda s: [int(x) for x in s.replace(",", " ").split()])
    sizes = tuple(sizes) if sizes else (default_n,) * 3
    if len(sizes) != 3:
        raise ConfigError("--sizes needs three values")
    n_mc = st.get("nmc", 2000 if mode == "pooled" else 200, int)
    seed = st.get("seed", 0, int)
    alpha = st.get("alpha", 0.05, float)
    threads = st.get("threads", 1, int)
    method = _method(st.get("correction"), "none")
    alts = _alternatives(st.get("alternative"), "less")
    if mode == "pooled":
        multi = _test_names(st.get("tests"), "BF,KW,F1,F2", pairwise=False)
        pair = _test_names(st.get("pairwise-tests"), "BF,WRS,t,KS", pairwise=True)
    else:
        multi = _test_names(st.get("tests"), "BF,KW", pairwise=False)
        pair = _test_names(st.get("pairwise-tests"), "BF,WRS", pairwise=True)
    roster = [RosterEntry(t) for t in multi]
    roster += [RosterEntry(t, p, a) for p in ((0, 1), (0, 2), (1, 2)) for t in pair for a in alts]
    if not roster:
        raise ConfigError("empty test roster")
    try:
        cfg = MCConfig(case, sizes, n_mc, alpha, tuple(roster), seed,
                       censor if mode == "censor" else None, st.get("guard", 10, int), threads)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None

    out = Path(args.out)
    outputs = [out]
    if mode == "pooled":
        summary = run_size_power(cfg)
        rows = [(lab, r, lo, hi, v.value) for lab, r, (lo, hi), v in
                zip(summary.labels, summary.rates, summary.intervals(), summary.verdicts())]
        write_csv(out, ("test", "rate", "ci_lo", "ci_hi", "verdict"), rows)
        agree = summary.agreement
        agree_path = out.with_name(out.stem + ".agreement.csv")
        write_csv(agree_path, ("test",) + summary.labels,
                  [(lab, *agree[i]) for i, lab in enumerate(summary.labels)])
        outputs.append(agree_path)
        extra = {"band_lo": summary.band[0], "band_hi": summary.band[1]}
    else:
        res = run_censor_mc(cfg)
        mean_p = res.mean_p()
        mean_adj = res.mean_adjusted(method) if method is not Method.NONE else mean_p
        lo, hi = res.band()
        rate = res.rate()
        cov = res.coverage
        rows = []
        range_rows = []
        critical = binomial_critical_rate(n_mc, alpha) if n_mc >= 1 else alpha
        for j, (lab, e) in enumerate(zip(res.labels, cfg.roster)):
            for t, g in enumerate(res.gamma):
                rows.append((g, lab, e.alternative.value, mean_p[j, t], mean_adj[j, t], method.value,
                             *res.mean_counts[t], lo[j, t], hi[j, t], rate[j, t], cov[j, t]))
            for iv in extract_ranges(res.gamma, rate[j], critical, above=True).intervals:
                range_rows.append((lab, e.alternative.value, critical, iv.lo, iv.hi, iv.extremum, iv.at))
        write_csv(out, ("gamma_mm", "test", "alternative", "p", "p_adjusted", "method",
                        "n_group1", "n_group2", "n_group3", "ci_lo", "ci_hi", "rate", "coverage"), rows)
        ranges_path = out.with_name(out.stem + ".ranges.csv")
        write_csv(ranges_path, ("test", "alternative", "rate_threshold", "gamma_lo", "gamma_hi",
                                "max_rate", "at_gamma"), range_rows)
        outputs.append(ranges_path)
        extra = {"rate_threshold": critical}
    config = {"case": case.case_id, "mode": mode, "sizes": list(sizes), "nmc": n_mc, "alpha": alpha,
              "threads": threads, "correction": method.value, "roster": cfg.labels,
              "delta": censor.delta, "dmax": censor.d_max, "analysis_lo": censor.analysis_lo,
              "generators": [repr(s) for s in case.specs], **extra}
    inputs = [args.config] if getattr(args, "config", None) else []
    write_manifest(out, "simulate", config, inputs=inputs, seed=seed, outputs=outputs)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _add_common(p: argparse.ArgumentParser, analysis: bool = True) -> None:
    p.add_argument("--config", help="key=value file; command-line flags override it")
    p.add_argument("--alpha", type=float, help="significance level (default .05)")
    p.add_argument("--correction", choices=[m.value for m in Method],
                   help="multiple-testing adjustment")
    p.add_argument("--tests", help="comma list of multi-group tests (BF,KW,F1,F2)")
    p.add_argument("--pairwise-tests", help="comma list of pairwise tests (BF,WRS,t,KS), or none")
    p.add_argument("--alternative", help="two, less or greater (comma list allowed)")
    p.add_argument("--seed", type=int, help="master random seed")
    p.add_argument("--threads", type=int, help="worker processes for Monte Carlo replicates")
    if analysis:
        p.add_argument("--distances", required=True, help="CSV: subject_id,group,hemisphere,distance_mm")
        p.add_argument("--groups", help="comma list fixing group order (default: order of appearance)")
        p.add_argument("--hemisphere", help="analyze one hemisphere only (left/right/none)")
        p.add_argument("--trim-lo", type=float, help="drop distances <= this (default -0.5)")
        p.add_argument("--trim-hi", type=float, help="drop distances > this (default 5.5)")
        p.add_argument("--no-trim", action="store_true", help="skip trimming")


def _add_censor_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--delta", type=float, help="censoring bin size in mm")
    p.add_argument("--dmax", type=float, help="largest censoring threshold in mm")
    p.add_argument("--analysis-lo", type=float, help="first reported threshold in mm")
    p.add_argument("--voxel-size", type=float, help="voxel size h; checks delta in [h/10, h]")
    p.add_argument("--guard", type=int, help="minimum censored group size (default 10)")


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors (exit 3), not input-file errors."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lcdm", description="Labeled cortical distance map analysis")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("lcdm", help="signed distances from a labeled grid to a surface mesh")
    p.add_argument("--mesh", required=True, help="ASCII OFF triangle mesh")
    p.add_argument("--grid", required=True, help="labeled voxel grid file")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_lcdm)

    p = sub.add_parser("pooled", help="descriptives and pooled tests per hemisphere")
    _add_common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--plot-data", action="store_true", help="also write KDE and histogram data")
    p.add_argument("--bin-width", type=float, default=0.1, help="histogram bin width in mm")
    p.add_argument("--leave-one-out", action="store_true",
                   help="rank-sum z of each subject against every group pool")
    p.set_defaults(func=cmd_pooled)

    p = sub.add_parser("censor", help="p-value curves over censoring thresholds")
    _add_common(p)
    _add_censor_flags(p)
    p.add_argument("--fast", action="store_true", help="prefix-sum evaluation (agrees to ~1e-12)")
    p.add_argument("--out", required=True, help="curve CSV")
    p.set_defaults(func=cmd_censor)

    p = sub.add_parser("simulate", help="Monte Carlo size/power or censoring curves")
    p.add_argument("case", help="case id (NULL_L, L1..L5, NULL_N, N1..N5, NULL_E, E1..E5) or CUSTOM")
    _add_common(p, analysis=False)
    _add_censor_flags(p)
    p.add_argument("--mode", choices=["pooled", "censor"])
    p.add_argument("--sizes", nargs=3, type=int, metavar="N", help="sample sizes of X, Y, Z")
    p.add_argument("--nmc", type=int, help="Monte Carlo replicates (default 2000 pooled, 200 censor)")
    p.add_argument("--out", required=True, help="summary CSV")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"lcdm: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"lcdm: cannot read or write file: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ArithmeticError, MonteCarloError, FloatingPointError) as exc:
        print(f"lcdm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"lcdm: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
