"""Command-line interface.

Three subcommands:

``test``
    read raw observations or per-feature summaries, fit the priors the
    requested methods need, and write a TSV of p- and q-values;
``fit-prior``
    fit one prior (``--kind vr`` or ``--kind dv``) and write it as JSON;
``simulate``
    run the synthetic FDR/power study and write JSON and TSV reports.

All numbers are written with 17 significant digits; missing values are
written as ``NA``.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from contextlib import contextmanager

import numpy as np

from .distributions import Tolerance
from .errors import ConfigurationError, DataError, EpbError
from .npmle import DiscretePrior1D, DiscretePrior2D, NpmleFit, fit_dv_prior, fit_vr_prior
from .pvalues import MethodId, run_all
from .simulate import FitSettings, LambdaLaw, SimulationScenario, run_study
from .summary import FeatureSummary, FeatureTable, summarize

__all__ = ["main", "build_parser", "ingest", "cmd_test", "cmd_fit_prior", "cmd_simulate", "prior_to_json", "prior_from_json"]

SUMMARY_COLUMNS = ["feature_id", "mean_a", "var_a", "k_a", "mean_b", "var_b", "k_b"]
WEIGHT_COLUMNS = ["n_eff_a", "n_eff_b"]
DEFAULT_METHODS = "vrepb,dvepb,ev,welch,bf"


def fmt(x) -> str:
    if x is None:
        return "NA"
    x = float(x)
    if math.isnan(x):
        return "NA"
    return "%.17g" % x


# ------------------------------------------------------------------ input


def _read_rows(path):
    """Yield ``(line_number, fields)`` for nonblank lines of a TSV file."""
    fh = sys.stdin if path == "-" else open(path, newline="")
    try:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            yield lineno, line.split("\t")
    finally:
        if fh is not sys.stdin:
            fh.close()


def _float(tok, path, lineno, what):
    try:
        v = float(tok)
    except ValueError:
        raise DataError(f"{path}:{lineno}: cannot parse {what} {tok!r} as a number") from None
    if not math.isfinite(v):
        raise DataError(f"{path}:{lineno}: {what} is not finite ({tok!r})")
    return v


def _read_matrix(path, what="value"):
    ids, rows, linenos = [], [], []
    header = None
    width = None
    for lineno, fields in _read_rows(path):
        if header is None and not ids and fields[0].strip().lower() == "feature_id":
            header = fields
            width = len(fields)
            continue
        if width is None:
            width = len(fields)
        if len(fields) != width:
            raise DataError(f"{path}:{lineno}: expected {width} fields, found {len(fields)}")
        ids.append(fields[0])
        rows.append([_float(t, path, lineno, what) for t in fields[1:]])
        linenos.append(lineno)
    if not ids:
        raise DataError(f"{path}: no data rows")
    return ids, np.array(rows, dtype=float), linenos


def parse_groups(text: str, n_cols: int):
    labels = [g.strip().upper() for g in text.split(",") if g.strip()]
    if len(labels) != n_cols:
        raise ConfigurationError(f"--groups has {len(labels)} labels but the input has {n_cols} data columns")
    bad = sorted(set(labels) - {"A", "B"})
    if bad:
        raise ConfigurationError(f"--groups labels must be A or B, got {bad}")
    a = np.array([g == "A" for g in labels])
    return a, ~a


def read_raw(path, groups, weights_path=None):
    ids, x, linenos = _read_matrix(path, "observation")
    ga, gb = parse_groups(groups, x.shape[1]) if groups else (None, None)
    if ga is None:
        raise ConfigurationError("raw input needs --groups (comma list of A/B, one per data column)")
    w = None
    if weights_path:
        wids, w, _ = _read_matrix(weights_path, "weight")
        if w.shape != x.shape:
            raise ConfigurationError(f"weights matrix has shape {w.shape}, data has {x.shape}")
        if wids != ids:
            raise ConfigurationError("weights file feature ids do not match the data file")
    feats = []
    for i, fid in enumerate(ids):
        try:
            feats.append(
                summarize(
                    x[i, ga], x[i, gb],
                    None if w is None else w[i, ga],
                    None if w is None else w[i, gb],
                    feature_id=fid,
                )
            )
        except EpbError as e:
            raise type(e)(f"{path}:{linenos[i]}: {e}") from None
    return feats


def read_summary(path):
    header = None
    feats = []
    for lineno, fields in _read_rows(path):
        if header is None:
            header = [h.strip().lower() for h in fields]
            missing = [c for c in SUMMARY_COLUMNS if c not in header]
            if missing:
                raise DataError(f"{path}:{lineno}: summary header lacks columns {missing}")
            weighted = all(c in header for c in WEIGHT_COLUMNS)
            col = {c: header.index(c) for c in SUMMARY_COLUMNS + (WEIGHT_COLUMNS if weighted else [])}
            continue
        if len(fields) != len(header):
            raise DataError(f"{path}:{lineno}: expected {len(header)} fields, found {len(fields)}")
        vals = {c: _float(fields[j], path, lineno, c) for c, j in col.items() if c != "feature_id"}
        for k in ("k_a", "k_b"):
            if vals[k] != int(vals[k]):
                raise DataError(f"{path}:{lineno}: {k} must be an integer")
        try:
            feats.append(
                FeatureSummary(
                    fields[col["feature_id"]],
                    vals["mean_a"], vals["var_a"], int(vals["k_a"]),
                    vals["mean_b"], vals["var_b"], int(vals["k_b"]),
                    vals.get("n_eff_a"), vals.get("n_eff_b"),
                )
            )
        except EpbError as e:
            raise type(e)(f"{path}:{lineno}: {e}") from None
    if not feats:
        raise DataError(f"{path}: no data rows")
    return feats


def ingest(args):
    """Read the input named by ``args`` into a list of :class:`FeatureSummary`."""
    if args.format == "raw":
        feats = read_raw(args.input, args.groups, args.weights)
    else:
        if args.weights:
            raise ConfigurationError("--weights applies to raw input only; summaries carry n_eff columns")
        feats = read_summary(args.input)
    n_deg = sum(f.degenerate for f in feats)
    if n_deg:
        print(
            f"note: {n_deg} of {len(feats)} features have a zero group variance; "
            "they are excluded from prior fitting and reported as NA",
            file=sys.stderr,
        )
    return feats


# ------------------------------------------------------------------ output


@contextmanager
def atomic_outputs():
    """Collect output files and move them into place only if everything succeeds."""
    pending = []

    def open_out(path):
        if path == "-":
            return _StdoutWriter()
        d = os.path.dirname(os.path.abspath(path))
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
        pending.append((tmp, path))
        return os.fdopen(fd, "w", newline="")

    try:
        yield open_out
    except BaseException:
        for tmp, _ in pending:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise
    for tmp, path in pending:
        os.replace(tmp, path)


class _StdoutWriter:
    def __enter__(self):
        return sys.stdout

    def __exit__(self, *exc):
        sys.stdout.flush()
        return False


def prior_to_json(fit: NpmleFit) -> dict:
    pr = fit.prior
    common = {
        "loglik": fit.loglik,
        "certificate_gap": fit.certificate_gap,
        "iterations": fit.iterations,
        "converged": bool(fit.converged),
    }
    if isinstance(pr, DiscretePrior1D):
        return {"kind": "vr", "support": pr.support.tolist(), "weights": pr.weights.tolist(), **common}
    return {
        "kind": "dv",
        "support_a": pr.support_a.tolist(),
        "support_b": pr.support_b.tolist(),
        "indices": pr.indices.tolist(),
        "weights": pr.values.tolist(),
        **common,
    }


def prior_from_json(obj: dict):
    if obj.get("kind") == "vr":
        return DiscretePrior1D(np.array(obj["support"]), np.array(obj["weights"]))
    if obj.get("kind") == "dv":
        return DiscretePrior2D(obj["support_a"], obj["support_b"], obj["indices"], obj["weights"])
    raise DataError(f"unknown prior kind {obj.get('kind')!r}")


def _dump_json(fh, obj):
    # 17 significant digits everywhere, like the TSV output
    fh.write(json.dumps(obj, indent=1, default=float))
    fh.write("\n")


def write_summary(fh, feats):
    fh.write("\t".join(SUMMARY_COLUMNS + WEIGHT_COLUMNS) + "\n")
    for f in feats:
        fh.write(
            "\t".join(
                [f.feature_id, fmt(f.mean_a), fmt(f.var_a), str(f.k_a), fmt(f.mean_b), fmt(f.var_b), str(f.k_b),
                 fmt(f.n_eff_a), fmt(f.n_eff_b)]
            )
            + "\n"
        )


def write_results(fh, rows, methods):
    cols = ["feature_id", "t_bf", "lambda_hat"]
    for m in methods:
        cols += [f"p_{m.value}", f"q_{m.value}"]
    fh.write("\t".join(cols) + "\n")
    for r in rows:
        out = [r.feature_id, fmt(r.t_bf), fmt(r.lambda_hat)]
        for m in methods:
            out += [fmt(r.p[m]), fmt(r.q[m])]
        fh.write("\t".join(out) + "\n")


# ------------------------------------------------------------------ commands


def parse_methods(text: str):
    if not text.strip():
        return []
    return list(dict.fromkeys(MethodId.parse(s) for s in text.split(",") if s.strip()))


def _npmle_tol(args):
    return Tolerance(abs_tol=args.cert_tol, rel_tol=1e-10, max_iter=args.max_iter)


def _fit(kind, feats, args):
    tab = FeatureTable.from_summaries(feats)
    ok = ~tab.degenerate
    if not ok.any():
        raise DataError("every feature is degenerate; no prior can be fitted")
    tol = _npmle_tol(args)
    if kind == "vr":
        fit = fit_vr_prior(tab.var_a[ok] / tab.var_b[ok], tab.nu_a[ok], tab.nu_b[ok], args.grid_size, tol)
    else:
        fit = fit_dv_prior(tab.var_a[ok], tab.var_b[ok], tab.nu_a[ok], tab.nu_b[ok],
                           args.grid_size_2d, args.grid_size_2d, tol)
    if not fit.converged:
        print(
            f"warning: {kind} prior fit stopped after {fit.iterations} iterations with "
            f"certificate gap {fit.certificate_gap:.3g} (> {args.cert_tol:g})",
            file=sys.stderr,
        )
    return fit


def cmd_test(args) -> int:
    methods = parse_methods(args.methods)
    feats = ingest(args)
    fits = {}
    if MethodId.VREPB in methods:
        fits["vr"] = _fit("vr", feats, args)
    if MethodId.DVEPB in methods:
        fits["dv"] = _fit("dv", feats, args)
    rows = run_all(
        feats, methods,
        vr_prior=fits["vr"].prior if "vr" in fits else None,
        dv_prior=fits["dv"].prior if "dv" in fits else None,
        lam=args.lam, threads=args.threads,
    )
    with atomic_outputs() as open_out:
        with open_out(args.output) as fh:
            write_results(fh, rows, methods)
        if args.prior_out:
            with open_out(args.prior_out) as fh:
                _dump_json(fh, [prior_to_json(f) for f in fits.values()])
        if args.summary_out:
            with open_out(args.summary_out) as fh:
                write_summary(fh, feats)
    for m in methods:
        n_rej = sum(1 for r in rows if r.q[m] is not None and r.q[m] <= args.alpha)
        print(f"{m.value}: {n_rej} discoveries at FDR {args.alpha:g}", file=sys.stderr)
    return 0


def cmd_fit_prior(args) -> int:
    feats = ingest(args)
    fit = _fit(args.kind, feats, args)
    out = args.output if args.output != "-" or not args.prior_out else args.prior_out
    with atomic_outputs() as open_out:
        with open_out(out) as fh:
            _dump_json(fh, prior_to_json(fit))
    return 0


def parse_int_list(text: str):
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise ConfigurationError(f"empty integer list {text!r}")
    return out


def cmd_simulate(args) -> int:
    methods = parse_methods(args.methods)
    law = LambdaLaw(args.scenario)
    kbs = parse_int_list(args.kb) if args.kb else [args.ka]
    scenarios = [
        SimulationScenario(
            k_a=args.ka, k_b=kb, lambda_law=law, n=args.n, pi0=args.pi0,
            seed=args.seed, reps=args.reps, alpha=args.alpha,
        )
        for kb in kbs
    ]
    settings = FitSettings(args.grid_size, args.grid_size_2d, _npmle_tol(args), args.lam)
    report = run_study(scenarios, methods, settings, threads=args.threads)
    with atomic_outputs() as open_out:
        with open_out(args.output) as fh:
            _dump_json(fh, report.to_json())
        if args.tsv_output:
            with open_out(args.tsv_output) as fh:
                for line in report.tsv_lines():
                    fh.write(line + "\n")
    return 0


# ------------------------------------------------------------------ parser


def _common_fit_args(p):
    p.add_argument("--grid-size", type=int, default=1000, help="variance-ratio grid points (default 1000)")
    p.add_argument("--grid-size-2d", type=int, default=80, help="grid points per axis for the 2D prior (default 80)")
    p.add_argument("--cert-tol", type=float, default=1e-5, help="NPMLE certificate gap tolerance (default 1e-5)")
    p.add_argument("--max-iter", type=int, default=20000, help="NPMLE iteration budget (default 20000)")
    p.add_argument("--lambda", dest="lam", type=float, default=1.0,
                   help="variance ratio for the fixed-lambda pooled test (default 1)")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)


def _input_args(p):
    p.add_argument("--input", required=True, help="tab-separated input file ('-' for stdin)")
    p.add_argument("--format", choices=("raw", "summary"), default="summary")
    p.add_argument("--groups", help="raw format: comma list of A/B, one per observation column")
    p.add_argument("--weights", help="raw format: precision weight matrix with the same layout as the data")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="epbayes",
        description="Two-sample tests for many features with few replicates and unequal variances.",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="compute p-values and BH q-values")
    _input_args(t)
    t.add_argument("--methods", default=DEFAULT_METHODS,
                   help=f"comma list from vrepb,dvepb,ev,welch,bf,pooled (default {DEFAULT_METHODS})")
    t.add_argument("--alpha", type=float, default=0.1, help="FDR level for the discovery counts (default 0.1)")
    t.add_argument("--output", default="-", help="result TSV (default stdout)")
    t.add_argument("--prior-out", help="write the fitted priors (JSON list)")
    t.add_argument("--summary-out", help="write the per-feature summaries (summary TSV)")
    _common_fit_args(t)
    t.set_defaults(func=cmd_test)

    f = sub.add_parser("fit-prior", help="fit a variance-ratio or dual-variance prior")
    _input_args(f)
    f.add_argument("--kind", choices=("vr", "dv"), required=True)
    f.add_argument("--output", default="-", help="prior JSON (default stdout)")
    f.add_argument("--prior-out", help="alias for --output")
    _common_fit_args(f)
    f.set_defaults(func=cmd_fit_prior)

    s = sub.add_parser("simulate", help="run the synthetic FDR/power study")
    s.add_argument("--scenario", choices=[m.value for m in LambdaLaw], default="unequal")
    s.add_argument("--ka", type=int, default=3)
    s.add_argument("--kb", default=None, help="comma list or range of K_B values, e.g. 3-9 (default K_A)")
    s.add_argument("--reps", type=int, default=50)
    s.add_argument("--n", type=int, default=5000)
    s.add_argument("--pi0", type=float, default=0.9)
    s.add_argument("--alpha", type=float, default=0.1)
    s.add_argument("--methods", default=DEFAULT_METHODS)
    s.add_argument("--output", default="-", help="report JSON (default stdout)")
    s.add_argument("--tsv-output", help="flat TSV report")
    _common_fit_args(s)
    s.set_defaults(func=cmd_simulate)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (EpbError, OSError) as e:
        print(f"epbayes {args.command}: error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
