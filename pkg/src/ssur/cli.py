"""Command-line front end: ``ssur {elicit,simulate,run,evaluate,perturb-graph}``."""
from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from . import evaluate as ev
from . import simulate as sim
from .config import ConfigError, RunConfig, parse_config, parse_config_text
from .data import (DataError, Dataset, MrfPrior, load_dataset, load_edge_list, read_edge_blocks,
                   read_matrix_csv, write_edge_list, write_matrix_csv)
from .graph import DecomposableGraph
from .io import atomic_write_text, format_key_values, read_key_values, software_versions, text_hash
from .mcmc import SamplerError, Trace, run
from .priors import (d_from_sparsity, e_upper_bound, elicit_w0_hyperparams, elicit_w_hyperparams)

CONFIG_NAME = "config.txt"
MANIFEST_NAME = "manifest.txt"
METRICS_NAME = "metrics.txt"


class CliError(RuntimeError):
    """Usage error detected after argument parsing."""


# ---------------------------------------------------------------- shared file helpers


def write_manifest(out: Path, command: str, items, started: float):
    vers = software_versions()
    rows = [("command", command)] + list(items)
    rows += [(f"version_{k}", v) for k, v in vers.items()]
    rows.append(("wall_time_seconds", round(time.time() - started, 3)))
    atomic_write_text(out / MANIFEST_NAME, format_key_values(rows))


def write_graph_edges(path, graph: DecomposableGraph):
    lines = [f"# response graph edges, 1-based (m={graph.m})"]
    lines += [f"{a + 1} {b + 1}" for a, b in graph.edges()]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_graph_edges(path, m: int) -> DecomposableGraph:
    edges = []
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            a, b = (int(v) for v in line.replace(",", " ").split())
            edges.append((a - 1, b - 1))
    return DecomposableGraph(m, edges, validate=False)


def _names(prefix, k):
    return [f"{prefix}{i + 1}" for i in range(k)]


def _write_dataset(out: Path, data: Dataset):
    write_matrix_csv(out / "Y.csv", data.Y, data.response_names)
    write_matrix_csv(out / "X.csv", data.X, data.predictor_names)
    if data.Z is not None:
        write_matrix_csv(out / "Z.csv", data.Z.astype(np.int64), data.group_names)


# ---------------------------------------------------------------- elicit


def cmd_elicit(args) -> int:
    rows = []
    if args.r_sparsity is not None:
        _need(args, "mean_beta", "var_beta", "m", "p")
        w = elicit_w_hyperparams(args.r_sparsity, args.mean_beta, args.var_beta, args.m, args.p,
                                 const_a=args.const_a, const_b=args.const_b)
        rows += [("a_w", w.a), ("b_w", w.b), ("const_a", w.const_a), ("const_b", w.const_b),
                 ("w_q05", w.quantile), ("w_threshold", w.threshold), ("w_feasible", w.feasible)]
    if args.re_sd is not None:
        _need(args, "m", "T")
        w0 = elicit_w0_hyperparams(args.re_sd, args.m, args.T, const_a0=args.const_a0, b_w0=args.b_w0)
        rows += [("a_w0", w0.a), ("b_w0", w0.b), ("w0_q95", w0.quantile),
                 ("w0_threshold", w0.threshold), ("w0_feasible", w0.feasible)]
    d = args.d
    if args.c1 is not None:
        d = d_from_sparsity(args.c1)
        rows.append(("d", d))
    if args.c2 is not None:
        _need(args, "m", "p", "mrf_edges")
        if d is None:
            raise CliError("e bound needs --c1 or --d")
        G = load_edge_list(args.mrf_edges, args.m, args.p)
        rows.append(("e_upper_bound", e_upper_bound(d, args.m, args.p, args.c2, G)))
    if not rows:
        raise CliError("nothing to elicit: give --r-sparsity, --re-sd, --c1 or --c2")
    text = format_key_values(rows)
    sys.stdout.write(text)
    if args.out:
        atomic_write_text(args.out, text)
    return 0


def _need(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        raise CliError(f"missing --{missing[0].replace('_', '-')}")


# ---------------------------------------------------------------- simulate


def cmd_simulate(args) -> int:
    started = time.time()
    if args.out is None:
        raise CliError("missing --out")
    over = {}
    if args.n is not None:
        over["n"] = args.n
    if args.scale_offdiag is not None:
        over["scale_offdiag"] = args.scale_offdiag
    if args.noise is not None:
        over["noise"] = args.noise
    if args.sigma_u_offdiag is not None:
        over["sigma_u_offdiag"] = tuple(float(v) for v in args.sigma_u_offdiag.split(","))
    scenario = sim.PRESETS[args.preset](seed=args.seed, **over)
    gen = sim.simulate_alg1 if args.algorithm == 1 else sim.simulate_alg2
    out = Path(args.out)
    result = gen(scenario, np.random.default_rng(args.seed))
    truth = result.truth
    _write_dataset(out, result.train)
    _write_dataset(out / "validation", result.validation)
    cols = _names("y", scenario.m)
    rows = _names("x", scenario.p)
    write_matrix_csv(out / "gamma_true.csv", truth.gamma.astype(np.int64), cols, rows)
    write_matrix_csv(out / "beta_true.csv", truth.B, cols, rows)
    write_graph_edges(out / "graph_true.txt", truth.graph)
    if truth.B0 is not None:
        write_matrix_csv(out / "b0_true.csv", truth.B0, cols, _names("z", scenario.T))
    if truth.alpha is not None:
        write_matrix_csv(out / "alpha_true.csv", truth.alpha[None, :], cols)
    write_matrix_csv(out / "precision_true.csv", truth.precision, cols, cols)
    write_edge_list(None, out / "mrf_edges.txt", scenario.m, scenario.p, blocks=sim.mrf_edge_blocks(scenario))
    items = [("preset", args.preset), ("algorithm", args.algorithm), ("seed", args.seed),
             ("n", scenario.n), ("p", scenario.p), ("m", scenario.m),
             ("T", scenario.T if args.algorithm == 2 else 0), ("noise", scenario.noise),
             ("scale_offdiag", scenario.scale_offdiag), ("gw_df", scenario.gw_df),
             ("n_true_cells", int(truth.gamma.sum())), ("n_graph_edges", truth.graph.n_edges),
             ("n_mrf_blocks", len(scenario.blocks))]
    write_manifest(out, "simulate", items, started)
    print(f"wrote simulation to {out}")
    return 0


# ---------------------------------------------------------------- run / evaluate


def _resolved(cfg: RunConfig, data: Dataset) -> RunConfig:
    kw = {}
    if cfg.nu is None:
        kw["nu"] = float(data.m + 2)
    if cfg.b_o is None:
        kw["b_o"] = float(max(data.p - 2, 1))
    if cfg.seed is None:
        kw["seed"] = int(np.random.SeedSequence().entropy % (2 ** 63))
    return cfg.replace(**kw) if kw else cfg


def load_run_data(cfg: RunConfig):
    """Training data (optionally standardised) and validation data on the training scale."""
    train = load_dataset(cfg.y, cfg.x, cfg.z, standardize=cfg.standardize)
    val = None
    if cfg.y_val and cfg.x_val:
        val = load_dataset(cfg.y_val, cfg.x_val, cfg.z_val if cfg.z else None)
        if cfg.standardize:
            val = val.apply_standardization(train.standardization)
    return train, val


def write_run_outputs(out: Path, trace: Trace, data: Dataset):
    """Summary CSVs, scalar trace, acceptance counts and pointwise log-likelihoods."""
    out.mkdir(parents=True, exist_ok=True)
    summary = ev.summarize(trace, data.m) if trace.n_samples else None
    rn, cn = data.predictor_names, data.response_names
    if summary is not None:
        write_matrix_csv(out / "gamma_mean.csv", summary.gamma_mean, cn, rn)
        write_matrix_csv(out / "beta_mpm.csv", summary.beta_mpm, cn, rn)
        write_matrix_csv(out / "edge_prob.csv", summary.edge_prob, cn, cn)
        if data.Z is not None:
            write_matrix_csv(out / "b0_mean.csv", summary.b0_mean, cn, data.group_names)
    n_sel = trace.gamma.reshape(trace.n_samples, -1).sum(axis=1)
    n_edges = trace.edges.sum(axis=1)
    cols = ["iteration", "log_posterior", "w", "w0", "tau", "n_selected", "n_edges"]
    tab = np.column_stack([trace.iterations, trace.log_post, trace.w, trace.w0, trace.tau, n_sel, n_edges])
    write_matrix_csv(out / "trace.csv", tab if tab.size else np.zeros((0, len(cols))), cols)
    acc = [(f"{k}_proposed", v[0]) for k, v in trace.acceptance.items()]
    acc += [(f"{k}_accepted", v[1]) for k, v in trace.acceptance.items()]
    acc += [(f"temperature_{i + 1}", float(t)) for i, t in enumerate(trace.temperatures)]
    atomic_write_text(out / "acceptance.txt", format_key_values(sorted(acc)))
    if trace.loglik is not None:
        tmp = out / ".loglik.npy.tmp"
        with open(tmp, "wb") as fh:
            np.save(fh, trace.loglik)
        tmp.replace(out / "loglik.npy")


def _read_summary(out: Path, data: Dataset) -> ev.PosteriorSummary:
    def read(name):
        path = out / name
        if not path.exists():
            raise CliError(f"{name} not found in {out}; did the run keep any samples?")
        return read_matrix_csv(path)[0]

    b0 = read("b0_mean.csv") if data.Z is not None else np.zeros((0, data.m))
    return ev.PosteriorSummary(read("gamma_mean.csv"), read("beta_mpm.csv"), b0, read("edge_prob.csv"))


def _read_truth(truth_dir, data: Dataset) -> dict:
    if not truth_dir:
        return {}
    d = Path(truth_dir)
    out = {}
    if (d / "gamma_true.csv").exists():
        out["gamma_true"] = read_matrix_csv(d / "gamma_true.csv")[0]
    if (d / "beta_true.csv").exists():
        out["B_true"] = read_matrix_csv(d / "beta_true.csv")[0]
    if (d / "b0_true.csv").exists():
        out["B0_true"] = read_matrix_csv(d / "b0_true.csv")[0]
    if (d / "graph_true.txt").exists():
        out["graph_true"] = read_graph_edges(d / "graph_true.txt", data.m)
    return out


def evaluate_directory(out: Path, cfg: RunConfig) -> dict:
    """Recompute metrics from the files a run left in ``out``; writes and returns them."""
    train, val = load_run_data(cfg)
    summary = _read_summary(out, train)
    ll_path = out / "loglik.npy"
    loglik = np.load(ll_path) if ll_path.exists() else None
    metrics = ev.evaluate(summary, train, val, loglik, **_read_truth(cfg.truth, train))
    atomic_write_text(out / METRICS_NAME, format_key_values(metrics.items()))
    return metrics


def _run_overrides(args) -> dict:
    return {f.name: getattr(args, f.name) for f in dataclasses.fields(RunConfig)
            if getattr(args, f.name, None) is not None}


def cmd_run(args) -> int:
    started = time.time()
    over = _run_overrides(args)
    cfg = parse_config(args.config, over)
    for key in ("y", "x", "out"):
        if getattr(cfg, key) is None:
            raise ConfigError(f"{key}: required for run")
    train, _ = load_run_data(cfg)
    cfg = _resolved(cfg, train)
    out = Path(cfg.out)
    atomic_write_text(out / CONFIG_NAME, cfg.to_text())
    prior = None
    if cfg.prior == "mrf" and cfg.mrf_edges:
        prior = MrfPrior(load_edge_list(cfg.mrf_edges, train.m, train.p), cfg.d, cfg.e)
    progress = None
    if args.progress:
        every = max(1, cfg.niter // 20)

        def progress(it, chains):
            if it % every == 0:
                print(f"iteration {it}/{cfg.niter}", file=sys.stderr, flush=True)

    trace = run(cfg, train, prior, progress)
    write_run_outputs(out, trace, train)
    metrics = evaluate_directory(out, cfg) if trace.n_samples else {}
    items = [("seed", cfg.seed), ("config_hash", cfg.config_hash()), ("n_samples", trace.n_samples),
             ("n", train.n), ("p", train.p), ("m", train.m), ("T", train.T),
             ("data_hash_y", _file_hash(cfg.y)), ("data_hash_x", _file_hash(cfg.x))]
    write_manifest(out, "run", items, started)
    print(format_key_values(metrics.items()), end="")
    return 0


def _file_hash(path) -> str:
    return text_hash(Path(path).read_text())


def cmd_evaluate(args) -> int:
    out = Path(args.out) if args.out else None
    if out is None:
        raise CliError("missing --out (the run directory)")
    cfg_path = out / CONFIG_NAME
    if not cfg_path.exists():
        raise CliError(f"{CONFIG_NAME} not found in {out}")
    values = parse_config_text(cfg_path.read_text())
    for key in ("y_val", "x_val", "z_val", "truth"):
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    cfg = parse_config(None, values, allow_empty=True)
    metrics = evaluate_directory(out, cfg)
    print(format_key_values(metrics.items()), end="")
    return 0


# ---------------------------------------------------------------- perturb-graph


def cmd_perturb(args) -> int:
    for key in ("mrf_edges", "m", "p", "out"):
        if getattr(args, key) is None:
            raise CliError(f"missing --{key.replace('_', '-')}")
    blocks = read_edge_blocks(args.mrf_edges, args.m, args.p)
    size = args.m * args.p
    new = sim.perturb_mrf_graph(blocks, size, args.mode, args.fraction, np.random.default_rng(args.seed))
    write_edge_list(None, args.out, args.m, args.p, blocks=new)
    before = sum(len(b) for b in blocks)
    after = sum(len(b) for b in new)
    print(format_key_values([("edges_before", before), ("edges_after", after),
                             ("blocks_before", len(blocks)), ("blocks_after", len(new))]), end="")
    return 0


# ---------------------------------------------------------------- parser


def _config_flags(parser):
    """One ``--key`` flag per configuration field (values parsed later with the config rules)."""
    named = {"y", "x", "z", "mrf_edges", "out", "seed", "threads", "standardize"}
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        if f.name == "standardize":
            parser.add_argument(flag, dest=f.name, action="store_const", const="true", default=None,
                                help="standardise Y and X columns before fitting")
        else:
            parser.add_argument(flag, dest=f.name, default=None,
                                help=None if f.name in named else argparse.SUPPRESS)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ssur", description="Structured sparse SUR variable selection.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("elicit", help="hyperparameters from prior beliefs")
    for name, typ in (("r-sparsity", float), ("mean-beta", float), ("var-beta", float), ("m", int),
                      ("p", int), ("const-a", float), ("const-b", float), ("re-sd", float),
                      ("T", int), ("const-a0", float), ("b-w0", float), ("c1", float),
                      ("c2", float), ("d", float)):
        p.add_argument("--" + name, type=typ, default=None)
    p.add_argument("--mrf-edges", default=None)
    p.add_argument("--out", default=None, help="also write the key = value report here")
    p.set_defaults(func=cmd_elicit, const_a=0.5, const_a0=1.5)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--preset", choices=sorted(sim.PRESETS), default="desk")
    p.add_argument("--algorithm", type=int, choices=(1, 2), default=1)
    p.add_argument("--noise", choices=("gwishart", "sigma_u"), default=None)
    p.add_argument("--scale-offdiag", type=float, default=None)
    p.add_argument("--sigma-u-offdiag", default=None, help="two comma-separated values")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="run the sampler")
    p.add_argument("--config", default=None)
    p.add_argument("--progress", action="store_true")
    _config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("evaluate", help="recompute metrics for a run directory")
    p.add_argument("--out", default=None)
    for key in ("y-val", "x-val", "z-val", "truth"):
        p.add_argument("--" + key, dest=key.replace("-", "_"), default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("perturb-graph", help="perturb an MRF edge list")
    p.add_argument("--mrf-edges", default=None)
    p.add_argument("--m", type=int, default=None)
    p.add_argument("--p", type=int, default=None)
    p.add_argument("--mode", choices=sim.PERTURB_MODES, required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_perturb)
    return ap


ERRORS = (ConfigError, DataError, CliError, SamplerError, ValueError, OSError)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ERRORS as exc:
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 2 if isinstance(exc, (ConfigError, CliError)) else 1


if __name__ == "__main__":
    sys.exit(main())
