"""Command-line front door.

Subcommands: generate (instance files), count (the estimators and exact
oracles), verify (cross-check suites as CSV verdicts), bench (timing
CSV), oracle (exact counts), conv-selftest (convolution checks).

All machine-readable output goes to stdout as JSON or CSV; progress
notes go to stderr.  Exit codes: 0 success, 1 verification failure or
an aborted run under --strict, 2 usage error, 3 internal failure.
"""

import argparse
import csv
import itertools
import json
import math
import os
import sys
import time
from fractions import Fraction
from functools import cmp_to_key

from . import __version__
from ._rand import stream, uniform_int
from .convolution import (
    conv_exact,
    maxplus_witness_fast,
    maxplus_witness_ref,
    sum_approx_conv,
)
from .estimator import (
    estimate_dyer,
    estimate_subquadratic,
    find_popular_ell,
)
from .instance import (
    AlgoParams,
    InstanceError,
    KnapsackInstance,
    generate,
    instance_digest,
    parse_instance,
    serialize_instance,
)
from .oracle import count_band, count_dp, count_enum, count_le, empirical_tv
from .sampler import (
    leaf_cc_build,
    leaf_dp_build,
    merge_samplers,
    round_sampler,
    small_items_build,
)
from .secondphase import SecondPhaseInstance, second_phase_estimate
from .xfloat import XR_ZERO, XReal, xr_cmp

# Dyer's grid DP needs about n * (2Kn) cells; past this it is benchmarked
# as skipped instead of thrashing the machine.
_DYER_CELL_BUDGET = 2_000_000_000


def _log(msg):
    print(msg, file=sys.stderr)


def _read_instance(path):
    if path == "-":
        return parse_instance(sys.stdin.read())
    with open(path) as fh:
        return parse_instance(fh.read())


def _emit_json(obj):
    json.dump(obj, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def _emit_csv(header, rows):
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)


def _env_threads():
    try:
        return max(0, int(os.environ.get("KNAPCOUNT_THREADS", "0")))
    except ValueError:
        return 0


# ---------------------------------------------------------------------------
# generate


def _parse_classes(text):
    out = []
    for part in text.split(","):
        bits = part.split(":")
        if len(bits) != 3:
            raise InstanceError("class spec %r is not count:lo:hi" % (part,))
        out.append(tuple(int(b) for b in bits))
    return out


def cmd_generate(args):
    classes = _parse_classes(args.classes) if args.classes else None
    inst = generate(args.kind, args.n, args.T, args.seed,
                    ell=args.ell, classes=classes)
    text = serialize_instance(inst)
    _log("generated kind=%s n=%d digest=%s"
         % (args.kind, inst.n, instance_digest(inst)))
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# count


def _count_exact(args, inst):
    t0 = time.perf_counter()
    if args.algo == "exact-enum":
        value = count_enum(inst)
    else:
        value = count_dp(inst)
    ms = (time.perf_counter() - t0) * 1000.0
    mant, exp2 = XReal.from_int(value).hex_parts()
    return {
        "estimate": str(value),
        "estimate_hex_mantissa": mant,
        "estimate_exp2": exp2,
        "repeat_estimates": [str(value)],
        "aborted": False,
        "diagnostics": {},
        "timings": {"total_ms": round(ms, 3)},
    }


def _count_estimated(args, inst):
    reports = []
    for i in range(args.repeats):
        params = AlgoParams(epsilon=args.epsilon, seed=args.seed + i,
                            leaf_variant=args.leaf_variant)
        if args.algo == "subquad":
            rep = estimate_subquadratic(inst, params,
                                        time_budget=args.time_budget)
        else:
            rep = estimate_dyer(inst, params)
        reports.append(rep)
    order = sorted(range(len(reports)),
                   key=cmp_to_key(lambda i, j: xr_cmp(reports[i].estimate,
                                                      reports[j].estimate)))
    med = reports[order[(len(reports) - 1) // 2]]
    mant, exp2 = med.estimate.hex_parts()
    diagnostics = {
        "ell": med.ell,
        "istar": med.istar,
        "i0_size": med.i0_size,
        "n_samples": med.n_samples,
        "omega_prime": med.omega_prime.to_string(),
        "class_sizes": {str(m): c for m, c in med.class_sizes.items()},
    }
    for key in sorted(med.diagnostics):
        val = med.diagnostics[key]
        diagnostics[key] = val if isinstance(val, (int, float, str, bool)) \
            else str(val)
    return {
        "estimate": med.estimate.to_string(),
        "estimate_hex_mantissa": mant,
        "estimate_exp2": exp2,
        "repeat_estimates": [r.estimate.to_string() for r in reports],
        "aborted": any(r.aborted for r in reports),
        "diagnostics": diagnostics,
        "timings": {k: round(v, 3) for k, v in med.timings.items()},
    }


def cmd_count(args):
    if args.time_budget is not None and args.algo != "subquad":
        raise InstanceError("--time-budget only applies to --algo subquad")
    if args.repeats < 1:
        raise InstanceError("--repeats must be at least 1")
    inst = _read_instance(args.instance)
    record = {
        "schema": "knapcount.run.v1",
        "command": args.command_echo,
        "algorithm": args.algo,
        "digest": instance_digest(inst),
        "n": inst.n,
        "capacity": str(inst.capacity),
        "epsilon": args.epsilon,
        "seed": args.seed,
        "threads": args.threads,
        "repeats": args.repeats,
    }
    if args.algo in ("exact-enum", "exact-dp"):
        record.update(_count_exact(args, inst))
    else:
        record.update(_count_estimated(args, inst))
    _emit_json(record)
    if args.strict and record["aborted"]:
        return 1
    return 0


# ---------------------------------------------------------------------------
# verify suites; every suite returns (suite, case, expected, got, ok) rows


def _suite_oracle(trials, seed):
    rows = []
    rng = stream(seed, "verify", "oracle")
    for t in range(trials):
        n = uniform_int(rng, 4, 10)
        cap = uniform_int(rng, 4, 60)
        ws = [uniform_int(rng, 1, cap) for _ in range(n)]
        inst = KnapsackInstance(cap, ws)
        ref = count_enum(inst)
        if t % 2 == 0:
            got = count_dp(inst)
            rows.append(("oracle", "enum_vs_dp_%03d" % t,
                         str(ref), str(got), got == ref))
        else:
            c1 = uniform_int(rng, 1, cap - 2)
            c2 = uniform_int(rng, c1 + 1, cap - 1)
            got = 1 + count_band(inst, 0, c1) + count_band(inst, c1, c2) \
                + count_band(inst, c2, cap)
            rows.append(("oracle", "band_partition_%03d" % t,
                         str(ref), str(got), got == ref))
    return rows


def _conv_trial_exact(rng, t):
    na = uniform_int(rng, 1, 40)
    nb = uniform_int(rng, 1, 40)
    mag = uniform_int(rng, 4, 70)
    a = [uniform_int(rng, 0, 1 << mag) for _ in range(na)]
    b = [uniform_int(rng, 0, 1 << mag) for _ in range(nb)]
    got = conv_exact(a, b)
    ref = [0] * (na + nb - 1)
    for i, av in enumerate(a):
        for j, bv in enumerate(b):
            ref[i + j] += av * bv
    bad = next((k for k in range(len(ref)) if ref[k] != got[k]), None)
    state = "equal" if bad is None else "diff@%d" % bad
    return ("conv", "exact_%03d" % t, "equal", state, bad is None)


def _random_monotone(rng, n):
    arr, u = [], []
    cur = 0
    for _ in range(n):
        if rng.random() < 0.25:
            arr.append(None)
            u.append(XR_ZERO)
        else:
            cur += uniform_int(rng, 0, 4)
            arr.append(cur)
            u.append(XReal.from_int(uniform_int(rng, 1, 1 << 30)))
    if all(v is None for v in arr):
        arr[0] = 0
        u[0] = XReal.from_int(1)
    return arr, u


def _witness_close(x, y):
    fx, fy = x.to_fraction(), y.to_fraction()
    if fx == fy:
        return True
    return abs(fx - fy) <= max(fx, fy) * Fraction(1, 1 << 80)


def _conv_trial_witness(rng, t):
    a, u = _random_monotone(rng, uniform_int(rng, 3, 40))
    b, v = _random_monotone(rng, uniform_int(rng, 3, 40))
    ref = maxplus_witness_ref(a, b, u, v)
    got = maxplus_witness_fast(a, b, u, v, rng)
    state = "equal"
    ok = True
    for k in range(len(ref.c)):
        if ref.c[k] != got.c[k]:
            state, ok = "c-diff@%d" % k, False
            break
        if not _witness_close(ref.w[k], got.w[k]):
            state, ok = "w-diff@%d" % k, False
            break
    return ("conv", "witness_%03d" % t, "equal", state, ok)


def _conv_trial_sumapprox(rng, t):
    delta = 1e-3

    def seq(n):
        return [XR_ZERO if rng.random() < 0.2 else
                XReal.from_int(uniform_int(rng, 1, 1 << 50))
                for _ in range(n)]

    f = seq(uniform_int(rng, 8, 48))
    g = seq(uniform_int(rng, 8, 48))
    got = sum_approx_conv(f, g, delta, rng)
    ff = [x.to_fraction() for x in f]
    gg = [x.to_fraction() for x in g]
    exact = [Fraction(0)] * (len(f) + len(g) - 1)
    for i, fv in enumerate(ff):
        if fv:
            for j, gv in enumerate(gg):
                if gv:
                    exact[i + j] += fv * gv
    pe = Fraction(0)
    pg = Fraction(0)
    state = "within"
    ok = True
    tol = Fraction(delta).limit_denominator(10 ** 9)
    for k in range(len(exact)):
        pe += exact[k]
        pg += got[k].to_fraction()
        if abs(pg - pe) > pe * tol:
            state, ok = "prefix-off@%d" % k, False
            break
    return ("conv", "sumapprox_%03d" % t, "within", state, ok)


def _suite_conv(trials, seed):
    rows = []
    rng = stream(seed, "verify", "conv")
    checks = (_conv_trial_exact, _conv_trial_witness, _conv_trial_sumapprox)
    for t in range(trials):
        rows.append(checks[t % len(checks)](rng, t))
    return rows


def _leaf_states(smp):
    """(ids tuple, unit sum) for every subset of at most B included items."""
    ids, avals = smp._ids, smp._a
    cap_b = smp.frozen["B"]
    out = []
    for r in range(min(cap_b, len(ids)) + 1):
        for combo in itertools.combinations(range(len(ids)), r):
            out.append((tuple(sorted(ids[i] for i in combo)),
                        sum(avals[i] for i in combo)))
    return out


def _tv_row(name, node, target, queries, rng, cap):
    samples = [ids for ids, _w in
               node.query_batch([cap] * queries, rng)]
    tv = empirical_tv(samples, target)
    bound = 0.05 + 2.0 * node.delta_total
    return ("sampler", name, "<=%.4f" % bound, "%.4f" % tv, tv <= bound)


def _uniform_over(keys):
    p = 1.0 / len(keys)
    return {k: p for k in keys}


def _suite_sampler(trials, seed):
    queries = max(2000, 300 * trials)
    rows = []

    items = [(0, 3), (1, 5), (2, 6), (3, 9)]
    leaf = leaf_dp_build(items, 2, 3, 1e-3, stream(seed, "vsamp", "dp"))
    cap = 11
    x = min(cap // leaf.S, leaf.table.phys - 1)
    feas = [ids for ids, units in _leaf_states(leaf) if units <= x]
    rows.append(_tv_row("tv_leaf_dp", leaf, _uniform_over(feas), queries,
                        stream(seed, "vsamp", "dpq"), cap))

    # the stored prefix must agree exactly with brute-force counts here
    ok = True
    state = "exact"
    for xx in range(leaf.table.phys):
        cnt = sum(1 for _ids, units in _leaf_states(leaf) if units <= xx)
        if XReal.from_int(cnt).cmp(leaf.table.prefix(xx)) != 0:
            ok, state = False, "off@%d" % xx
            break
    rows.append(("sampler", "prefix_leaf_dp", "exact", state, ok))

    cc = leaf_cc_build(items, 2, 3, 1e-3, stream(seed, "vsamp", "cc"))
    xc = min(cap // cc.S, cc.table.phys - 1)
    feas_cc = [ids for ids, units in _leaf_states(cc) if units <= xc]
    rows.append(_tv_row("tv_leaf_cc", cc, _uniform_over(feas_cc), queries,
                        stream(seed, "vsamp", "ccq"), cap))

    small = small_items_build([(4, 1), (5, 1)], 2, 1e-3,
                              stream(seed, "vsamp", "sm"))
    # zero-rounded items drop into the tiny set; queries only mention i1
    i1 = small.frozen["i1"]
    xs = min(3 // small.S, small.table.phys - 1)
    feas_sm = [tuple(sorted(combo))
               for r in range(min(xs, len(i1)) + 1)
               for combo in itertools.combinations(sorted(i1), r)]
    rows.append(_tv_row("tv_small_items", small, _uniform_over(feas_sm),
                        queries, stream(seed, "vsamp", "smq"), 3))

    rnd = round_sampler(leaf, 4, stream(seed, "vsamp", "rd"))
    feas_rd = []
    for ids, _units in _leaf_states(leaf):
        w = rnd.rounded_weight(ids)
        if w <= (cap // rnd.S) * rnd.S:
            feas_rd.append(ids)
    rows.append(_tv_row("tv_round", rnd, _uniform_over(feas_rd), queries,
                        stream(seed, "vsamp", "rdq"), cap))

    right = leaf_dp_build([(6, 4), (7, 7)], 2, 2, 1e-3,
                          stream(seed, "vsamp", "dp2"))
    merged = merge_samplers(leaf, right, 1e-3, stream(seed, "vsamp", "mg"))
    xm = min(cap // merged.S, merged.table.phys - 1)
    feas_mg = []
    for lids, lu in _leaf_states(leaf):
        for rids, ru in _leaf_states(right):
            if lu + ru <= xm:
                feas_mg.append(tuple(sorted(lids + rids)))
    rows.append(_tv_row("tv_merge", merged, _uniform_over(feas_mg), queries,
                        stream(seed, "vsamp", "mgq"), cap))
    return rows


def _suite_structure(trials, seed):
    rows = []
    rng = stream(seed, "verify", "structure")
    for t in range(trials):
        n = uniform_int(rng, 6, 12)
        ws = [uniform_int(rng, 1, 40) for _ in range(n)]
        cap = uniform_int(rng, max(ws), sum(ws) - 1)
        inst = KnapsackInstance(cap, ws)
        ell = find_popular_ell(inst)
        omega = count_enum(inst)
        lg = math.log2(n)
        state = "ok"
        ok = True
        for d in (1, 2, 3):
            lo = (ell * cap + (d - 1) * cap) // ell
            hi = (ell * cap + d * cap) // ell
            band = 0 if lo >= hi else count_band(inst, lo, hi)
            if band > n ** d * omega:
                state, ok = "d=%d:%d" % (d, band), False
                break
            if d == 1 and band > 15000.0 * n * lg * lg / ell * omega:
                state, ok = "d=1tight:%d" % band, False
                break
        rows.append(("structure", "bands_%03d" % t, "ok", state, ok))
    return rows


def _suite_secondphase(trials, seed):
    rows = []
    rng = stream(seed, "verify", "secondphase")
    for t in range(trials):
        k = uniform_int(rng, 1, 6)
        nc = uniform_int(rng, 1, 5)
        cap = uniform_int(rng, 30, 80)
        tiny = tuple((j, uniform_int(rng, 1, 12)) for j in range(k))
        cands = tuple(((100 + j,), uniform_int(rng, max(1, cap - 40), cap + 5))
                      for j in range(nc))
        sp = SecondPhaseInstance(tiny, cands, cap, 0.25, 48)
        exact = sum(count_le([w for _, w in tiny], cap - cw)
                    for _, cw in cands if cw <= cap)
        est = second_phase_estimate(sp, AlgoParams(epsilon=0.25, seed=seed),
                                    stream(seed, "verify", "sp", t))
        lg = math.log2(48)
        slack = Fraction(0.25 * nc * 2 ** k / (90000.0 * 48 * lg * lg))
        tol = Fraction(exact) / 24 + slack
        ok = abs(est.to_fraction() - exact) <= tol
        rows.append(("secondphase", "pairs_%03d" % t,
                     str(exact), est.to_string(), ok))
    return rows


_SUITES = {
    "oracle": (_suite_oracle, 30),
    "conv": (_suite_conv, 30),
    "sampler": (_suite_sampler, 60),
    "structure": (_suite_structure, 20),
    "secondphase": (_suite_secondphase, 12),
}


def cmd_verify(args):
    names = list(_SUITES) if args.suite == "all" else [args.suite]
    rows = []
    for name in names:
        fn, default_trials = _SUITES[name]
        rows.extend(fn(args.trials or default_trials, args.seed))
    _emit_csv(("suite", "case", "expected", "got", "pass"),
              [(s, c, e, g, "1" if ok else "0") for s, c, e, g, ok in rows])
    failed = sum(1 for r in rows if not r[4])
    if failed:
        _log("verify: %d of %d cases failed" % (failed, len(rows)))
        return 1
    _log("verify: %d cases passed" % len(rows))
    return 0


def cmd_conv_selftest(args):
    rows = _suite_conv(args.trials, args.seed)
    _emit_csv(("suite", "case", "expected", "got", "pass"),
              [(s, c, e, g, "1" if ok else "0") for s, c, e, g, ok in rows])
    failed = sum(1 for r in rows if not r[4])
    if failed:
        _log("conv-selftest: %d of %d cases failed" % (failed, len(rows)))
        return 1
    return 0


# ---------------------------------------------------------------------------
# bench


def _dyer_cells(n, params):
    if n == 0:
        return 0
    k_grid = max(1, math.ceil(params.dyer_c * math.sqrt(n * math.log(n))))
    return n * (2 * k_grid * n + k_grid)


def cmd_bench(args):
    sizes = [int(s) for s in args.sizes.split(",") if s]
    algos = ("subquad", "dyer") if args.algo == "both" else (args.algo,)
    params = AlgoParams(epsilon=args.epsilon, seed=args.seed,
                        scale_exp=1.0, sample_exp=0.5,
                        sample_cap=args.sample_cap)
    rows = []
    for n in sizes:
        inst = generate("bounded_ratio", n, args.T, args.seed, ell=args.ell)
        _log("bench n=%d digest=%s" % (n, instance_digest(inst)))
        for algo in algos:
            if algo == "dyer" and _dyer_cells(n, params) > _DYER_CELL_BUDGET:
                _log("bench: dyer skipped at n=%d (grid too large)" % n)
                rows.append((n, "dyer", "skipped", "0.000"))
                continue
            t0 = time.perf_counter()
            if algo == "dyer":
                rep = estimate_dyer(inst, params)
            else:
                rep = estimate_subquadratic(inst, params)
            _log("bench n=%d %s done in %.1fs (estimate %s)"
                 % (n, algo, time.perf_counter() - t0,
                    rep.estimate.to_string()))
            for key, ms in rep.timings.items():
                stage = key[:-3] if key.endswith("_ms") else key
                rows.append((n, algo, stage, "%.3f" % ms))
    _emit_csv(("n", "algo", "stage", "ms"), rows)
    return 0


# ---------------------------------------------------------------------------
# oracle


def cmd_oracle(args):
    inst = _read_instance(args.instance)
    if args.method == "enum":
        value = count_enum(inst)
    elif args.method == "dp":
        value = count_dp(inst)
    else:
        if args.lo is None or args.hi is None:
            raise InstanceError("--method band needs --lo and --hi")
        value = count_band(inst, args.lo, args.hi)
    _emit_json({
        "command": args.command_echo,
        "digest": instance_digest(inst),
        "method": args.method,
        "n": inst.n,
        "capacity": str(inst.capacity),
        "count": str(value),
    })
    return 0


# ---------------------------------------------------------------------------
# parser plumbing


def _add_common(sp):
    sp.add_argument("--seed", type=int, default=0, help="master RNG seed")
    sp.add_argument("--threads", type=int, default=_env_threads(),
                    help="worker bound, 0 means library default "
                         "(env KNAPCOUNT_THREADS)")


def build_parser():
    p = argparse.ArgumentParser(
        prog="knapcount",
        description="Approximate and exact counting of 0/1-knapsack "
                    "solutions.")
    p.add_argument("--version", action="version",
                   version="knapcount " + __version__)
    sub = p.add_subparsers(dest="cmd", required=True, metavar="command")

    g = sub.add_parser("generate", help="write a random instance file")
    g.add_argument("--kind", required=True,
                   choices=("uniform", "bounded_ratio", "tiny_adversarial",
                            "custom_classes"))
    g.add_argument("--n", type=int, required=True, help="item count")
    g.add_argument("--T", type=int, required=True, help="capacity")
    g.add_argument("--ell", type=int, default=None,
                   help="ratio bound for bounded_ratio")
    g.add_argument("--classes", default=None,
                   help="count:lo:hi[,count:lo:hi...] for custom_classes")
    g.add_argument("--out", default=None, help="output path (default stdout)")
    _add_common(g)
    g.set_defaults(func=cmd_generate)

    c = sub.add_parser("count", help="estimate or count solutions")
    c.add_argument("instance", help="instance file, or - for stdin")
    c.add_argument("--algo", default="subquad",
                   choices=("subquad", "dyer", "exact-enum", "exact-dp"))
    c.add_argument("--epsilon", type=float, default=0.25,
                   help="relative error target")
    c.add_argument("--repeats", type=int, default=1,
                   help="independent runs; the median estimate is reported")
    c.add_argument("--strict", action="store_true",
                   help="exit 1 if any run aborted")
    c.add_argument("--time-budget", type=float, default=None,
                   help="abort subquad after this many seconds")
    c.add_argument("--leaf-variant", default="auto",
                   choices=("auto", "dp", "cc"),
                   help="force a bottom-level sampler variant")
    _add_common(c)
    c.set_defaults(func=cmd_count)

    v = sub.add_parser("verify", help="run cross-check suites, emit CSV")
    v.add_argument("--suite", default="all",
                   choices=("oracle", "conv", "sampler", "structure",
                            "secondphase", "all"))
    v.add_argument("--trials", type=int, default=None,
                   help="cases per suite (sampler scales queries instead)")
    _add_common(v)
    v.set_defaults(func=cmd_verify)

    b = sub.add_parser("bench", help="timing CSV over bounded-ratio runs")
    b.add_argument("--sizes", default="1024,4096,16384",
                   help="comma-separated item counts")
    b.add_argument("--algo", default="both",
                   choices=("subquad", "dyer", "both"))
    b.add_argument("--epsilon", type=float, default=0.25)
    b.add_argument("--T", type=int, default=1 << 30, help="capacity")
    b.add_argument("--ell", type=int, default=16,
                   help="weight ratio bound for the generator")
    b.add_argument("--sample-cap", type=int, default=4000,
                   help="cap on per-phase sample counts (0 = theory counts)")
    _add_common(b)
    b.set_defaults(func=cmd_bench)

    o = sub.add_parser("oracle", help="exact counts for small instances")
    o.add_argument("instance", help="instance file, or - for stdin")
    o.add_argument("--method", default="enum", choices=("enum", "dp", "band"))
    o.add_argument("--lo", type=int, default=None,
                   help="band lower bound, exclusive")
    o.add_argument("--hi", type=int, default=None,
                   help="band upper bound, inclusive")
    _add_common(o)
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("conv-selftest", help="convolution self checks")
    s.add_argument("--trials", type=int, default=30)
    _add_common(s)
    s.set_defaults(func=cmd_conv_selftest)

    return p


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.command_echo = " ".join(argv)
    try:
        return args.func(args)
    except BrokenPipeError:
        return 0
    except (InstanceError, OSError, ValueError) as exc:
        _log("error: %s" % exc)
        return 2
    except Exception as exc:  # anything else is an internal failure
        _log("internal error: %r" % exc)
        return 3


if __name__ == "__main__":
    sys.exit(main())
