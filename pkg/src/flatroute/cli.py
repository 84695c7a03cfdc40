"""Experiment runner: topology generation, protocol runs that emit metric
CSVs plus a summary, and named desk-scale reproduction recipes.

`run` reads an optional key=value config file, applies CLI overrides, and
writes the fully resolved config next to its outputs so every run can be
reproduced byte-identically.  Output root: --out, else $FLATROUTE_OUT,
else ./runs.  Exit code is 0 only if every invariant check passed."""

import argparse
import math
import os
import sys

from . import metrics as mt
from . import sim
from .landmark_routing import HEURISTICS
from .topology import gen_geometric, gen_gnm, gen_s4_adversarial, \
    load_edgelist

VRR_N_CAP = 1024

CONFIG_DEFAULTS = {
    "topology": "gnm:64:4",
    "topo_seed": "0",
    "protocols": "disco",
    "heuristic": "None",
    "fingers": "1",
    "error_model": "none",
    "seeds": "0",
    "pairs": "auto",
    "backend": "static",
}

RECIPES = ("shortcut-table", "scaling", "messaging", "state-cdf",
           "stretch-cdf", "congestion", "n-error", "fingers")


class UsageError(ValueError):
    pass


def parse_config_file(path):
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError("%s:%d: expected key = value"
                                 % (path, lineno))
            key, val = line.split("=", 1)
            key = key.strip().replace("-", "_")
            if key not in CONFIG_DEFAULTS:
                raise UsageError("%s:%d: unknown key %r" % (path, lineno,
                                                            key))
            out[key] = val.strip()
    return out


def resolve_config(args):
    cfg = dict(CONFIG_DEFAULTS)
    if args.config:
        cfg.update(parse_config_file(args.config))
    for key in CONFIG_DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = str(val)
    protocols = tuple(p.strip() for p in cfg["protocols"].split(",")
                      if p.strip())
    for p in protocols:
        if p not in sim.PROTOCOLS:
            raise UsageError("unknown protocol %r" % p)
    if cfg["heuristic"] not in HEURISTICS:
        raise UsageError("unknown heuristic %r" % cfg["heuristic"])
    if cfg["backend"] not in ("static", "des", "both"):
        raise UsageError("backend must be static, des, or both")
    try:
        seeds = tuple(int(s) for s in cfg["seeds"].split(","))
        int(cfg["topo_seed"])
        int(cfg["fingers"])
    except ValueError:
        raise UsageError("seeds, topo_seed, and fingers must be integers") \
            from None
    if cfg["pairs"] != "auto":
        try:
            int(cfg["pairs"])
        except ValueError:
            raise UsageError("pairs must be an integer or 'auto'") from None
    if not protocols or not seeds:
        raise UsageError("need at least one protocol and one seed")
    return cfg


def build_topology(spec, seed):
    parts = spec.split(":")
    try:
        if parts[0] == "gnm" and len(parts) == 3:
            return gen_gnm(int(parts[1]), float(parts[2]), seed)
        if parts[0] == "geo" and len(parts) == 3:
            return gen_geometric(int(parts[1]), float(parts[2]), seed)
        if parts[0] == "s4tree" and len(parts) == 2:
            return gen_s4_adversarial(int(parts[1]))
        if parts[0] == "file" and len(parts) >= 2:
            return load_edgelist(spec.split(":", 1)[1])
    except ValueError as exc:
        raise UsageError("bad topology %r: %s" % (spec, exc)) from None
    raise UsageError("topology must be gnm:<n>:<deg>, geo:<n>:<deg>, "
                     "s4tree:<sqrt_n>, or file:<path>")


def write_edgelist(topo, path):
    with open(path, "w", encoding="utf-8") as fh:
        for u in range(topo.n):
            for v, w in zip(topo.neighbors(u), topo.neighbor_weights(u)):
                if u < int(v):
                    if topo.unit_weights:
                        fh.write("%s %s\n" % (topo.names[u],
                                              topo.names[int(v)]))
                    else:
                        fh.write("%s %s %s\n" % (topo.names[u],
                                                 topo.names[int(v)],
                                                 repr(float(w))))


def _out_root(explicit):
    return explicit or os.environ.get("FLATROUTE_OUT") or "runs"


def _write_provenance(outdir, mapping):
    lines = ["%s = %s" % (k, mapping[k]) for k in sorted(mapping)]
    with open(os.path.join(outdir, "config.txt"), "w",
              encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


# -- run -----------------------------------------------------------------------


def _run_invariants(run, samples, cmap):
    """Names of violated run invariants (empty = clean)."""
    bad = []
    finite = [x for x in samples if math.isfinite(x.first)]
    if len(finite) != len(samples) and run.protocol != "vrr":
        bad.append("unreachable-pairs")
    if any(x.first < 1.0 - 1e-9 or x.later < 1.0 - 1e-9 for x in finite):
        bad.append("stretch-below-one")
    if sum(cmap.counts.values()) != cmap.total_hops:
        bad.append("congestion-accounting")
    return bad


def cmd_run(args):
    cfg = resolve_config(args)
    topo = build_topology(cfg["topology"], int(cfg["topo_seed"]))
    outdir = os.path.join(_out_root(args.out), args.name or "run")
    os.makedirs(outdir, exist_ok=True)
    prov = dict(cfg)
    prov["n"] = topo.n
    prov["m"] = topo.nbr.shape[0] // 2
    _write_provenance(outdir, prov)

    protocols = tuple(p.strip() for p in cfg["protocols"].split(","))
    seeds = tuple(int(s) for s in cfg["seeds"].split(","))
    n_pairs = None if cfg["pairs"] == "auto" else int(cfg["pairs"])
    backend = cfg["backend"]
    failures = []
    summary = []
    for protocol in protocols:
        for seed in seeds:
            if protocol == "vrr" and topo.n > VRR_N_CAP:
                print("note: skipping vrr at n=%d (> %d cap)"
                      % (topo.n, VRR_N_CAP))
                summary.append((protocol, seed, "skipped", topo.n,
                                "", "", "", "", "", "", "", "", ""))
                continue
            rcfg = sim.RunConfig(fingers=int(cfg["fingers"]),
                                 error_model=cfg["error_model"],
                                 heuristic=cfg["heuristic"])
            static_run = des_run = None
            if backend in ("static", "both"):
                static_run = sim.run_static(topo, protocol, rcfg, seed)
            if backend in ("des", "both"):
                des_run = sim.run_des(topo, protocol, rcfg, seed)
            if backend == "both":
                if sim.state_fingerprint(static_run) != \
                        sim.state_fingerprint(des_run):
                    failures.append("backend-state-mismatch:%s:seed%d"
                                    % (protocol, seed))
            base = static_run if static_run is not None else des_run
            samples = mt.measure_stretch(base, seed=seed, n_pairs=n_pairs)
            cmap = mt.measure_congestion(base, seed=seed)
            state_rows = mt.measure_state(base)
            for name in _run_invariants(base, samples, cmap):
                failures.append("%s:%s:seed%d" % (name, protocol, seed))

            rundir = os.path.join(outdir, "%s-seed%d" % (protocol, seed))
            os.makedirs(rundir, exist_ok=True)
            mt.write_state_csv(os.path.join(rundir, "state.csv"), state_rows)
            mt.write_stretch_csv(os.path.join(rundir, "stretch.csv"),
                                 samples)
            mt.write_congestion_csv(os.path.join(rundir, "congestion.csv"),
                                    cmap, topo)
            if des_run is not None:
                mt.write_messages_csv(os.path.join(rundir, "messages.csv"),
                                      des_run.counters)
            summ = mt.summarize_stretch(samples)
            totals = [b.total for b in state_rows]
            summary.append((
                protocol, seed, backend, topo.n,
                summ["first_mean"], summ["first_max"],
                summ["later_mean"], summ["later_max"],
                summ["fallbacks"], summ["failed"],
                sum(totals) / len(totals), max(totals),
                des_run.counters.total() if des_run is not None else ""))

    header = ("protocol", "seed", "backend", "n", "first_mean", "first_max",
              "later_mean", "later_max", "fallbacks", "failed",
              "state_mean", "state_max", "messages")
    mt._write_rows(os.path.join(outdir, "summary.csv"), header, summary)
    _print_table(header, summary)
    for f in failures:
        print("INVARIANT FAILED: %s" % f)
    print("output: %s" % outdir)
    return 1 if failures else 0


def _print_table(header, rows):
    def fmt(x):
        if isinstance(x, float):
            return "%.4f" % x
        return str(x)
    cells = [list(map(fmt, header))] + [list(map(fmt, r)) for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    for r in cells:
        print("  ".join(c.rjust(w) for c, w in zip(r, widths)))


# -- gen -----------------------------------------------------------------------


def cmd_gen(args):
    if args.kind == "gnm":
        topo = gen_gnm(args.n, args.deg, args.seed)
        default = "gnm-n%d-deg%g-seed%d.edges" % (args.n, args.deg,
                                                  args.seed)
    elif args.kind == "geo":
        topo = gen_geometric(args.n, args.deg, args.seed)
        default = "geo-n%d-deg%g-seed%d.edges" % (args.n, args.deg,
                                                  args.seed)
    else:
        topo = gen_s4_adversarial(args.sqrt_n)
        default = "s4tree-%d.edges" % args.sqrt_n
    path = args.out or default
    write_edgelist(topo, path)
    print("n=%d m=%d -> %s" % (topo.n, topo.nbr.shape[0] // 2, path))
    return 0


# -- repro ----------------------------------------------------------------------


def _static(topo, protocol, seed, **kw):
    return sim.run_static(topo, protocol, sim.RunConfig(**kw), seed)


def repro_shortcut_table(outdir, args):
    """Mean first-packet stretch of every shortcutting heuristic, per
    topology, on the name-dependent protocol."""
    rows = []
    for spec in ("gnm:%d:8" % args.n, "geo:%d:8" % args.n):
        topo = build_topology(spec, args.seed)
        run = _static(topo, "nddisco", args.seed)
        samples = mt.measure_stretch(run, seed=args.seed,
                                     n_pairs=args.pairs,
                                     heuristics=HEURISTICS)
        for heuristic in HEURISTICS:
            sub = [x for x in samples if x.heuristic == heuristic]
            rows.append((spec, heuristic,
                         mt.summarize_stretch(sub)["first_mean"]))
    mt._write_rows(os.path.join(outdir, "shortcut-table.csv"),
                   ("topology", "heuristic", "first_mean"), rows)


def repro_scaling(outdir, args):
    """Mean stretch and mean/max state on geometric graphs of growing n."""
    rows = []
    for n in args.sizes:
        topo = build_topology("geo:%d:8" % n, args.seed)
        run = _static(topo, "disco", args.seed)
        samples = mt.measure_stretch(run, seed=args.seed,
                                     n_pairs=args.pairs)
        summ = mt.summarize_stretch(samples)
        totals = [b.total for b in mt.measure_state(run)]
        rows.append((n, summ["first_mean"], summ["later_mean"],
                     sum(totals) / len(totals), max(totals)))
    mt._write_rows(os.path.join(outdir, "scaling.csv"),
                   ("n", "first_mean", "later_mean", "state_mean",
                    "state_max"), rows)


def repro_messaging(outdir, args):
    """Total convergence messages per protocol across graph sizes."""
    rows = []
    for n in args.sizes:
        topo = build_topology("gnm:%d:8" % n, args.seed)
        for protocol in sim.PROTOCOLS:
            if protocol == "vrr" and n > VRR_N_CAP:
                continue
            run = sim.run_des(topo, protocol, seed=args.seed)
            total = run.counters.total()
            rows.append((protocol, n, total, total / n))
    mt._write_rows(os.path.join(outdir, "messaging.csv"),
                   ("protocol", "n", "messages", "messages_per_node"), rows)


def repro_state_cdf(outdir, args):
    """CDF of per-node state totals for every protocol on one graph."""
    topo = build_topology("gnm:%d:8" % args.n, args.seed)
    rows = []
    for protocol in sim.PROTOCOLS:
        if protocol == "vrr" and topo.n > VRR_N_CAP:
            continue
        run = _static(topo, protocol, args.seed)
        cdf = mt.emit_cdf([b.total for b in mt.measure_state(run)])
        rows.extend((protocol, v, f) for v, f in cdf)
    mt._write_rows(os.path.join(outdir, "state-cdf.csv"),
                   ("protocol", "value", "fraction"), rows)


def repro_stretch_cdf(outdir, args):
    """CDF of first-packet stretch per protocol and topology family."""
    rows = []
    for spec in ("gnm:%d:8" % args.n, "geo:%d:8" % args.n):
        topo = build_topology(spec, args.seed)
        for protocol in ("disco", "nddisco", "s4"):
            run = _static(topo, protocol, args.seed)
            samples = mt.measure_stretch(run, seed=args.seed,
                                         n_pairs=args.pairs)
            cdf = mt.emit_cdf([x.first for x in samples
                               if math.isfinite(x.first)])
            rows.extend((spec, protocol, v, f) for v, f in cdf)
    mt._write_rows(os.path.join(outdir, "stretch-cdf.csv"),
                   ("topology", "protocol", "value", "fraction"), rows)


def repro_congestion(outdir, args):
    """Per-edge load CDFs (idle edges included) against the shortest-path
    baseline."""
    rows = []
    for spec in ("gnm:%d:8" % args.n, "geo:%d:8" % args.n):
        topo = build_topology(spec, args.seed)
        for protocol in ("pathvector", "disco", "s4"):
            run = _static(topo, protocol, args.seed)
            cmap = mt.measure_congestion(run, seed=args.seed)
            cdf = mt.emit_cdf(cmap.values_with_idle_edges(topo))
            rows.extend((spec, protocol, v, f) for v, f in cdf)
    mt._write_rows(os.path.join(outdir, "congestion.csv"),
                   ("topology", "protocol", "value", "fraction"), rows)


def repro_n_error(outdir, args):
    """Delivery and stretch under size-estimate error models."""
    topo = build_topology("gnm:%d:8" % args.n, args.seed)
    rows = []
    for model in ("none", "uniform:0.20", "uniform:0.40", "uniform:0.60",
                  "synopsis"):
        run = _static(topo, "disco", args.seed, error_model=model)
        samples = mt.measure_stretch(run, seed=args.seed,
                                     n_pairs=args.pairs)
        summ = mt.summarize_stretch(samples)
        rows.append((model, summ["failed"], summ["fallbacks"],
                     summ["later_mean"], summ["later_max"]))
    mt._write_rows(os.path.join(outdir, "n-error.csv"),
                   ("error_model", "failed", "fallbacks", "later_mean",
                    "later_max"), rows)


def repro_fingers(outdir, args):
    """Group-announcement hop counts and message totals as the per-node
    finger count grows."""
    topo = build_topology("gnm:%d:8" % args.n, args.seed)
    rows = []
    for fingers in (1, 3):
        run = sim.run_des(topo, "disco",
                          sim.RunConfig(fingers=fingers), args.seed)
        hop_mean, hop_max = sim.announcement_hop_stats(run)
        rows.append((fingers, hop_mean, hop_max, run.counters.total()))
    mt._write_rows(os.path.join(outdir, "fingers.csv"),
                   ("fingers", "hop_mean", "hop_max", "messages"), rows)


def cmd_repro(args):
    outdir = os.path.join(_out_root(args.out), args.recipe)
    os.makedirs(outdir, exist_ok=True)
    if args.sizes:
        args.sizes = tuple(int(x) for x in args.sizes.split(","))
    else:
        args.sizes = (1024, 4096, 16384) if args.recipe == "scaling" \
            else (256, 512, 1024, 2048)
    _write_provenance(outdir, {
        "recipe": args.recipe, "n": args.n, "seed": args.seed,
        "sizes": ",".join(map(str, args.sizes)),
        "pairs": args.pairs if args.pairs is not None else "auto",
    })
    fn = {
        "shortcut-table": repro_shortcut_table,
        "scaling": repro_scaling,
        "messaging": repro_messaging,
        "state-cdf": repro_state_cdf,
        "stretch-cdf": repro_stretch_cdf,
        "congestion": repro_congestion,
        "n-error": repro_n_error,
        "fingers": repro_fingers,
    }[args.recipe]
    fn(outdir, args)
    print("output: %s" % outdir)
    return 0


# -- entry point -----------------------------------------------------------------


def _build_parser():
    p = argparse.ArgumentParser(
        prog="flatroute",
        description="compact-routing experiment runner")
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="write a generated topology edge list")
    gsub = g.add_subparsers(dest="kind", required=True)
    for kind in ("gnm", "geo"):
        gp_ = gsub.add_parser(kind)
        gp_.add_argument("--n", type=int, required=True)
        gp_.add_argument("--deg", type=float, required=True)
        gp_.add_argument("--seed", type=int, default=0)
        gp_.add_argument("--out")
    gt = gsub.add_parser("s4tree")
    gt.add_argument("--sqrt-n", type=int, required=True, dest="sqrt_n")
    gt.add_argument("--out")

    r = sub.add_parser("run", help="converge protocols and emit metrics")
    r.add_argument("--config", help="key=value file; CLI flags override")
    r.add_argument("--topology")
    r.add_argument("--topo-seed", dest="topo_seed")
    r.add_argument("--protocols")
    r.add_argument("--heuristic")
    r.add_argument("--fingers")
    r.add_argument("--error-model", dest="error_model")
    r.add_argument("--seeds")
    r.add_argument("--pairs")
    r.add_argument("--backend")
    r.add_argument("--out")
    r.add_argument("--name")

    rp = sub.add_parser("repro", help="run a named figure recipe")
    rp.add_argument("recipe", choices=RECIPES)
    rp.add_argument("--n", type=int, default=1024)
    rp.add_argument("--seed", type=int, default=7)
    rp.add_argument("--sizes", help="comma list overriding size sweeps")
    rp.add_argument("--pairs", type=int, default=None)
    rp.add_argument("--out")
    return p


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        if args.cmd == "gen":
            return cmd_gen(args)
        if args.cmd == "run":
            return cmd_run(args)
        return cmd_repro(args)
    except UsageError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
