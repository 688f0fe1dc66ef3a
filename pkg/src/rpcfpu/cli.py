"""Command-line front end: single checks, bound sweeps, fault campaigns, MPE tables.

Exit codes: 0 success, 1 error detected or bound violated, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .corpus import CLASS_OP, class_operands
from .fault_campaign import ExperimentConfig, approximate_mpe, run_campaign
from .float_bits import FRAC_BITS, PackedFloat32, format_hex, parse_hex
from .nets import OpKind, UnknownFaultSite, format_catalog
from .oracle import (CLAIMED_IMPOSSIBLE, gen_corner_add, gen_corner_mul, search_diff4_mul,
                     trace, verify_term_bounds)
from .rpc_check import (CLASS_INDEX, CLASS_LIST, ST_ERR, ST_SUP, CheckClass, Status,
                        bounds_for, check, check_batch, checker_side_nets)
from .softfpu import fpu_batch, fpu_nets, fpu_op

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
DEFAULT_SEED = 0
OPS = [o.value for o in OpKind]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def thread_cap() -> int:
    """Worker count from RPC_FPU_THREADS (default 1)."""
    raw = os.environ.get("RPC_FPU_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"RPC_FPU_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def atomic_write(path: Path, text: str) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _int_list(text: str, name: str) -> list[int]:
    try:
        vals = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"{name} must be a comma-separated list of integers") from None
    if not vals:
        raise UsageError(f"{name} is empty")
    return vals


def _k_list(text: str) -> list[int]:
    ks = _int_list(text, "--k-list")
    for k in ks:
        if not 1 <= k <= FRAC_BITS:
            raise UsageError(f"k={k} outside [1, 23]")
    return ks


def _hex(text: str, flag: str) -> int:
    try:
        return parse_hex(text)
    except ValueError as e:
        raise UsageError(f"{flag}: {e}") from None


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=1, allow_nan=False) + "\n"


# -- check ----------------------------------------------------------------------


def cmd_check(args) -> int:
    op = OpKind.parse(args.op)
    if not 1 <= args.k <= FRAC_BITS:
        raise UsageError(f"--k {args.k} outside [1, 23]")
    if op is OpKind.SQRT:
        if (args.a is None) == (args.b is None):
            raise UsageError("sqrt takes exactly one operand (--a or --b is the radicand)")
        a, b = 0, _hex(args.a if args.a is not None else args.b, "radicand")
    else:
        if args.a is None or args.b is None:
            raise UsageError(f"{op.value} needs --a and --b")
        a, b = _hex(args.a, "--a"), _hex(args.b, "--b")
    res = fpu_op(op, a, b)
    verdict = check(op, PackedFloat32(a), PackedFloat32(b), res, args.k)
    out = {"verdict": verdict.to_dict(),
           "result": {"word": format_hex(res.word), "flags": int(res.flags)},
           "operands": {"a": format_hex(a), "b": format_hex(b)} if op is not OpKind.SQRT
           else {"radicand": format_hex(b)}}
    try:
        out["trace"] = trace(op, a, b, args.k).to_dict() if verdict.status is not \
            Status.SUPPRESSED else None
    except ValueError as e:
        out["trace"], out["trace_note"] = None, str(e)
    sys.stdout.write(_dump(out))
    return EXIT_FAIL if verdict.status is Status.ERROR_DETECTED else EXIT_OK


# -- verify-bounds ----------------------------------------------------------------


def _classes_for(op: OpKind) -> list[CheckClass]:
    return [c for c in CLASS_LIST if CLASS_OP[c][0] is op]


def verify_random(op: OpKind, k: int, n: int, seed: int, trace_n: int) -> dict:
    """Fault-free random trials: Diff histogram, bound and sign violations, and
    per-exponent-case term-bound checks on a subsample of exact traces."""
    out = {}
    for cls in _classes_for(op):
        rng = np.random.default_rng([seed, k, CLASS_INDEX[cls]])
        hist, viol, sign_bad, suppressed, done = {}, 0, 0, 0, 0
        cases: dict = {}
        traced = 0
        while done < n:
            m = min(n - done, 1 << 17)
            _, a, b = class_operands(cls, rng, m)
            r = fpu_batch(op, a, b)
            v = check_batch(op, a, b, r.words, r.flags, k)
            live = v.status != ST_SUP
            suppressed += int((~live).sum())
            d = v.diff[live]
            for val, cnt in zip(*np.unique(d, return_counts=True)):
                hist[int(val)] = hist.get(int(val), 0) + int(cnt)
            bnd = [bounds_for(c) for c in CLASS_LIST]
            lb = np.array([x.lb for x in bnd])[v.cls[live]]
            ub = np.array([x.ub for x in bnd])[v.cls[live]]
            viol += int(np.sum((d < lb) | (d > ub) | (v.status[live] == ST_ERR)))
            sign_bad += int(np.sum(~v.sign_match[live]))
            for i in np.flatnonzero(live)[: max(0, trace_n - traced)]:
                rep = verify_term_bounds(trace(op, int(a[i]), int(b[i]), k))
                row = cases.setdefault(rep.trace.exponent_case.value, {"traces": 0, "violations": 0})
                row["traces"] += 1
                row["violations"] += len(rep.violations)
                traced += 1
            done += m
        out[cls.value] = {"trials": n, "checked": n - suppressed, "suppressed": suppressed,
                          "diff_histogram": {str(d): c for d, c in sorted(hist.items())},
                          "bound_violations": viol, "sign_mismatches": sign_bad,
                          "term_bounds": dict(sorted(cases.items()))}
    return out


def cmd_verify_bounds(args) -> int:
    op = OpKind.parse(args.op)
    ks = _k_list(args.k_list)
    if args.n < 0 or args.search_diff4 < 0 or args.trace_n < 0:
        raise UsageError("--n, --trace-n and --search-diff4 must be non-negative")
    summary = {"op": op.value, "seed": args.seed, "k": {}}
    failures = 0
    for k in ks:
        entry = summary["k"][str(k)] = {}
        if args.n:
            rnd = entry["random"] = verify_random(op, k, args.n, args.seed, args.trace_n)
            for cls, row in rnd.items():
                tv = sum(c["violations"] for c in row["term_bounds"].values())
                failures += row["bound_violations"] + row["sign_mismatches"] + tv
                print(f"op={op.value} k={k} class={cls} checked={row['checked']} "
                      f"diff={row['diff_histogram']} bound_violations={row['bound_violations']} "
                      f"sign_mismatches={row['sign_mismatches']} term_violations={tv} "
                      f"cases={ {c: r['traces'] for c, r in row['term_bounds'].items()} }")
        if args.corner == "add":
            rep = gen_corner_add(k, seed=args.seed, hits=args.corner_hits)
            entry["corner"] = _corner_summary(rep)
        elif args.corner == "mul":
            if k < 2:
                entry["corner"] = {"skipped": "needs k >= 2"}
                print(f"corner=mul k={k} skipped (needs k >= 2)")
            else:
                rep = gen_corner_mul(k, seed=args.seed, hits=args.corner_hits)
                entry["corner"] = _corner_summary(rep)
        if "corner" in entry and "hits" in entry["corner"]:
            c = entry["corner"]
            failures += c["deviations"]
            print(f"corner={args.corner} k={k} hits={c['hits']} attempts={c['attempts']} "
                  f"deviations={c['deviations']} diff={c['diff_histogram']}")
            for key, row in c.get("pattern_table", {}).items():
                print(f"  pattern {key} -> {row}")
        if args.search_diff4:
            rep = search_diff4_mul(k, args.search_diff4, seed=args.seed)
            entry["search_diff4"] = rep.to_dict()
            failures += int(not rep.ok)
            print(f"search-diff4 k={k} samples={rep.samples} max_diff={rep.max_diff} "
                  f"route_mismatches={rep.route_mismatches} "
                  f"combos_claimed_impossible={ {c: rep.impossible_counts[c] for c in CLAIMED_IMPOSSIBLE} }")
    summary["violations"] = failures
    if args.json_out:
        atomic_write(Path(args.json_out), _dump(summary))
    print(f"violations={failures}")
    return EXIT_OK if failures == 0 else EXIT_FAIL


def _corner_summary(rep) -> dict:
    vals, cnts = np.unique(rep.diff, return_counts=True)
    out = {"hits": rep.hits, "attempts": rep.attempts, "deviations": rep.deviations(),
           "diff_histogram": {str(int(v)): int(c) for v, c in zip(vals, cnts)}}
    if rep.kind == "mul":
        out["pattern_table"] = {f"ab={ab} cd={cd}": {str(d): c for d, c in row.items()}
                                for (ab, cd), row in rep.pattern_table().items()}
    return out


# -- campaign --------------------------------------------------------------------


def _listify(x):
    return x if isinstance(x, list) else [x]


def _campaign_configs(args) -> list[ExperimentConfig]:
    if args.config:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as e:
            raise UsageError(f"cannot read config: {e}") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"config is not valid JSON: {e}") from None
        if not isinstance(raw, dict):
            raise UsageError("config must be a JSON object")
        base = {key: v for key, v in raw.items() if key not in ("op", "k")}
        return [ExperimentConfig.from_dict({**base, "op": op, "k": k})
                for op in _listify(raw.get("op")) for k in _listify(raw.get("k"))]
    if not args.op:
        raise UsageError("campaign needs --config or --op")
    if args.site:
        sites = list(args.site)
    elif args.sites in ("all", "none"):
        sites = args.sites
    elif args.sites == "sample":
        sites = {"sample": args.sample, "seed": args.site_seed}
    else:
        raise UsageError(f"--sites must be all, none or sample, got {args.sites!r}")
    stuck = _int_list(args.stuck_values, "--stuck-values")
    return [ExperimentConfig(op, k, sites, args.vectors, args.input_seed, tuple(stuck))
            for op in args.op.split(",") for k in _k_list(args.k_list)]


def cmd_campaign(args) -> int:
    formats = [f for f in args.format.split(",") if f]
    if not formats or set(formats) - {"json", "csv"}:
        raise UsageError("--format must be a comma-separated subset of json,csv")
    cfgs = _campaign_configs(args)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = tempfile.NamedTemporaryFile(dir=out, prefix=".probe")
        probe.close()
    except OSError as e:
        raise UsageError(f"output directory {out} is not writable: {e}") from None
    workers = args.workers if args.workers else thread_cap()
    workers = min(workers, thread_cap())
    rows = []
    for cfg in cfgs:
        rep = run_campaign(cfg, workers=workers)
        stem = out / f"campaign_{cfg.op.value}_k{cfg.k}"
        if "json" in formats:
            atomic_write(stem.with_suffix(".json"), rep.to_json())
        if "csv" in formats:
            atomic_write(stem.with_suffix(".csv"), rep.to_csv())
        print(rep.summary_line())
        rows.append((cfg.op.value, cfg.k, rep.umud_fraction))
    if len(rows) > 1:
        print("op\tk\tumud_fraction")
        for op, k, f in rows:
            print(f"{op}\t{k}\t{f:.6f}")
    return EXIT_OK


# -- mpe / sites -----------------------------------------------------------------


def mpe_table(ks: list[int]) -> list[dict]:
    return [{"k": k, "add_sub_percent": approximate_mpe(CheckClass.SSADD, k),
             "mul_div_sqrt_percent": approximate_mpe(CheckClass.MUL, k)} for k in ks]


def cmd_mpe(args) -> int:
    rows = mpe_table(_k_list(args.k_list))
    if args.json:
        sys.stdout.write(_dump(rows))
        return EXIT_OK
    print("k\tadd_sub_percent\tmul_div_sqrt_percent")
    for r in rows:
        print(f"{r['k']}\t{r['add_sub_percent']:.6g}\t{r['mul_div_sqrt_percent']:.6g}")
    return EXIT_OK


def cmd_sites(args) -> int:
    op = OpKind.parse(args.op)
    if not 1 <= args.k <= FRAC_BITS:
        raise UsageError(f"--k {args.k} outside [1, 23]")
    nets = list(fpu_nets(op)) + list(checker_side_nets(args.k, op))
    if args.count:
        print(sum(n.width for n in nets))
    else:
        sys.stdout.write(format_catalog(nets))
    return EXIT_OK


# -- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rpc-fpu", description="Soft FPU with a reduced-precision checker.")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    c = sub.add_parser("check", help="run one operation and check it")
    c.add_argument("--op", required=True, choices=OPS)
    c.add_argument("--a", help="first operand as 0xXXXXXXXX (radicand for sqrt)")
    c.add_argument("--b", help="second operand as 0xXXXXXXXX")
    c.add_argument("--k", type=int, default=7)
    c.set_defaults(func=cmd_check)

    v = sub.add_parser("verify-bounds", help="fault-free Diff and term-bound sweeps")
    v.add_argument("--op", required=True, choices=OPS)
    v.add_argument("--k-list", default="1,4,7,12,16,23")
    v.add_argument("--n", type=int, default=100000, help="random trials per class and k")
    v.add_argument("--trace-n", type=int, default=200,
                   help="exact traces per class and k for term-bound checks")
    v.add_argument("--seed", type=int, default=DEFAULT_SEED)
    v.add_argument("--corner", choices=["add", "mul", "none"], default="none")
    v.add_argument("--corner-hits", type=int, default=1000)
    v.add_argument("--search-diff4", type=int, default=0, metavar="BUDGET")
    v.add_argument("--json-out", help="write the full summary as JSON")
    v.set_defaults(func=cmd_verify_bounds)

    f = sub.add_parser("campaign", help="stuck-at fault campaign")
    f.add_argument("--config", help="campaign config JSON (op and k may be lists)")
    f.add_argument("--op", help="comma-separated ops")
    f.add_argument("--k-list", default="7")
    f.add_argument("--sites", default="sample", help="all, none or sample")
    f.add_argument("--site", action="append", help="explicit site label, repeatable")
    f.add_argument("--sample", type=int, default=200)
    f.add_argument("--site-seed", type=int, default=DEFAULT_SEED)
    f.add_argument("--vectors", type=int, default=1000)
    f.add_argument("--input-seed", type=int, default=DEFAULT_SEED)
    f.add_argument("--stuck-values", default="0,1")
    f.add_argument("--out", default="campaign_out")
    f.add_argument("--format", default="json,csv")
    f.add_argument("--workers", type=int, default=0,
                   help="worker processes (default and cap: RPC_FPU_THREADS, else 1)")
    f.set_defaults(func=cmd_campaign)

    m = sub.add_parser("mpe", help="approximate maximum percentage error table")
    m.add_argument("--k-list", default="1,4,7,10,16,23")
    m.add_argument("--json", action="store_true")
    m.set_defaults(func=cmd_mpe)

    s = sub.add_parser("sites", help="list fault-injectable nets")
    s.add_argument("--op", required=True, choices=OPS)
    s.add_argument("--k", type=int, default=7)
    s.add_argument("--count", action="store_true", help="print the number of sites only")
    s.set_defaults(func=cmd_sites)
    return p


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except (UsageError, UnknownFaultSite, ValueError) as e:
        print(f"rpc-fpu: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"rpc-fpu: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
