"""Command-line front end.

Subcommands: ``estimate`` (run the truncated harmonic mean estimator on
a table of posterior draws), ``correct`` (estimate plus constrained-
support volume-ratio adjustment), ``scv`` (tabulate the normal-posterior
squared coefficient of variation and optimal radii), and ``replicate``
(run the built-in conjugate-model experiments and write their raw
numbers as CSV).

All density columns are NATURAL log. There is deliberately no
``--log-base`` flag: silently mixing log10 and ln is the classic failure
mode, so any base conversion must happen before the file reaches this
tool.

Exit codes: 0 success, 2 usage error, 3 parse error, 4 numerical error
(empty truncation set, non-positive-definite covariance, zero support
overlap, zero-density draw inside the ellipsoid). Errors print a single
JSON object to stdout.

Output is deterministic: the same input file, flags, and seed produce
byte-identical output. Replication experiments fan out across at most
THAMES_THREADS worker threads (default 1); per-replication seeds come
from seeds.spawn_seed, and output order is by replication index
regardless of completion order.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .correction import SupportPredicate, apply_correction, estimate_volume_ratio
from .errors import InvalidInput, NumericalError, ParseError, ZeroSupportOverlap
from .estimator import ThamesOptions, harmonic_mean_log_z, thames
from .geometry import Ellipsoid
from .models import (
    DirMultModel,
    GaussianMeanModel,
    dirmult_dataset,
    dirmult_mu,
    gaussian_dataset,
    prostate_models,
)
from .radius import RadiusPolicy, optimal_radius, regularized_gamma_p, scv_bounds, scv_normal
from .seeds import spawn_seed

# ---------------------------------------------------------------------------
# Serialization helpers
# ---------------------------------------------------------------------------


def format_float(x):
    """17 significant digits: enough to round-trip any double exactly."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _json_value(v):
    if isinstance(v, float):
        return format_float(v) if math.isfinite(v) else json.dumps(format_float(v))
    return json.dumps(v)


def dump_report(fields, stream):
    """One flat JSON object, keys in insertion order, floats at 17 digits."""
    body = ", ".join(f"{json.dumps(k)}: {_json_value(v)}" for k, v in fields.items())
    stream.write("{" + body + "}\n")


def emit_error(kind, message, stream, **extra):
    fields = {"error": kind, "message": message}
    fields.update(extra)
    dump_report(fields, stream)


def file_checksum(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# Input tables
# ---------------------------------------------------------------------------

_THETA_RE = re.compile(r"^theta_(\d+)$")


def _classify_columns(names):
    thetas = {}
    for name in names:
        m = _THETA_RE.match(name)
        if m:
            thetas[int(m.group(1))] = name
    if not thetas:
        raise ParseError("no theta_<i> columns found", line=1)
    expected = list(range(1, len(thetas) + 1))
    if sorted(thetas) != expected:
        raise ParseError(
            f"theta columns must be numbered 1..d, got {sorted(thetas)}", line=1)
    theta_names = [thetas[i] for i in expected]
    if "log_prior" in names and "log_likelihood" in names:
        density_names = ["log_prior", "log_likelihood"]
    elif "log_unnorm_posterior" in names:
        density_names = ["log_unnorm_posterior"]
    else:
        raise ParseError(
            "need log_prior + log_likelihood columns or log_unnorm_posterior",
            line=1)
    return theta_names, density_names


def _parse_value(token, column, line_no, is_theta):
    try:
        value = float(token)
    except (TypeError, ValueError):
        raise ParseError(f"column {column!r}: cannot parse {token!r}", line=line_no)
    if math.isnan(value) or value == math.inf or (is_theta and value == -math.inf):
        kind = "finite" if is_theta else 'finite or "-inf"'
        raise ParseError(f"column {column!r}: value must be {kind}", line=line_no)
    return value


def _rows_from_csv(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file", line=1)
        names = [h.strip() for h in header]
        for line_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(names):
                raise ParseError(
                    f"expected {len(names)} fields, got {len(row)}", line=line_no)
            yield line_no, dict(zip(names, (tok.strip() for tok in row)))


def _rows_from_jsonl(path):
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", line=line_no)
            if not isinstance(record, dict):
                raise ParseError("each line must be a JSON object", line=line_no)
            yield line_no, record


def load_table(path):
    """Parse a draw table into (draws: T x d, log_post: T).

    CSV with a header row by default; JSONL when the extension is
    .jsonl. Rows with a chain column are concatenated in file order.
    Separate log_prior/log_likelihood columns are summed.
    """
    rows = _rows_from_jsonl(path) if path.endswith(".jsonl") else _rows_from_csv(path)
    theta_names = density_names = None
    draws, log_post = [], []
    for line_no, record in rows:
        if theta_names is None:
            theta_names, density_names = _classify_columns(list(record))
        for name in theta_names + density_names:
            if name not in record:
                raise ParseError(f"missing column {name!r}", line=line_no)
        draws.append([_parse_value(record[n], n, line_no, True)
                      for n in theta_names])
        log_post.append(sum(_parse_value(record[n], n, line_no, False)
                            for n in density_names))
    if theta_names is None:
        raise ParseError("no data rows", line=1)
    return np.asarray(draws, dtype=float), np.asarray(log_post, dtype=float)


# ---------------------------------------------------------------------------
# Flag parsing
# ---------------------------------------------------------------------------


def parse_radius_policy(spec):
    if spec == "sqrt_d_plus_1":
        return RadiusPolicy.sqrt_d_plus_1()
    if spec == "chisq_median":
        return RadiusPolicy.chisq_median()
    if spec == "optimal":
        return RadiusPolicy.optimal()
    if spec.startswith("fixed:"):
        return RadiusPolicy.fixed(float(spec[len("fixed:"):]))
    if spec.startswith("grid:"):
        values = [float(tok) for tok in spec[len("grid:"):].split(",") if tok]
        return RadiusPolicy.empirical_grid(values)
    raise argparse.ArgumentTypeError(
        f"unknown radius policy {spec!r}; expected sqrt_d_plus_1, fixed:<c>, "
        "chisq_median, optimal, or grid:<c1,c2,...>")


def parse_support(spec):
    if spec == "unbounded":
        return SupportPredicate.unbounded()
    if spec == "simplex":
        return SupportPredicate.simplex()
    if spec.startswith("positive:"):
        idx = [int(tok) for tok in spec[len("positive:"):].split(",") if tok]
        return SupportPredicate.positive_orthant(idx)
    if spec.startswith("box:"):
        lower, upper = [], []
        for pair in spec[len("box:"):].split(","):
            lo, _, up = pair.partition(":")
            lower.append(float(lo))
            upper.append(float(up))
        return SupportPredicate.box(lower, upper)
    raise argparse.ArgumentTypeError(
        f"unknown support {spec!r}; expected unbounded, positive:i,j,..., "
        "box:lo:hi,lo:hi,..., or simplex")


def worker_count():
    raw = os.environ.get("THAMES_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# estimate / correct
# ---------------------------------------------------------------------------


def _options_from_args(args):
    return ThamesOptions(
        radius_policy=args.radius,
        split=not args.no_split,
        ci_level=args.ci,
        serial_correction="ar1" if getattr(args, "ar1", False) else "none",
    )


def _base_report(result, args, checksum):
    return {
        "log_z": result.log_z,
        "log_recip_z": result.log_recip_z,
        "ci_lower": result.ci_log_z[0],
        "ci_upper": result.ci_log_z[1],
        "se_recip_rel": result.se_recip_rel,
        "radius": result.radius_used,
        "n_inside": result.n_inside,
        "t_estimation": result.t_estimation,
        "correction_ratio": result.correction_ratio,
        "radius_policy": args.radius.kind,
        "split": not args.no_split,
        "seed": args.seed,
        "input_checksum": checksum,
    }


def cmd_estimate(args, stdout):
    draws, log_post = load_table(args.input)
    result = thames(draws, log_post, _options_from_args(args))
    dump_report(_base_report(result, args, file_checksum(args.input)), stdout)
    return 0


def cmd_correct(args, stdout):
    draws, log_post = load_table(args.input)
    result = thames(draws, log_post, _options_from_args(args))
    r_hat, r_ci = estimate_volume_ratio(
        result.ellipsoid, args.support, args.n, args.seed)
    result = apply_correction(result, r_hat)
    report = _base_report(result, args, file_checksum(args.input))
    report["correction_ci_lower"] = r_ci[0]
    report["correction_ci_upper"] = r_ci[1]
    dump_report(report, stdout)
    return 0


# ---------------------------------------------------------------------------
# scv
# ---------------------------------------------------------------------------

SCV_POLICIES = ("sqrt_d_plus_1", "optimal", "chisq_median")


def _scv_radius(policy, d, opt):
    if policy == "sqrt_d_plus_1":
        return math.sqrt(d + 1.0)
    if policy == "optimal":
        return opt.c_d
    if policy == "chisq_median":
        from .radius import chi_square_median_radius

        return chi_square_median_radius(d)
    if policy.startswith("fixed:"):
        return float(policy[len("fixed:"):])
    raise argparse.ArgumentTypeError(f"unknown scv policy {policy!r}")


def cmd_scv(args, stdout):
    writer = csv.writer(stdout, lineterminator="\n")
    writer.writerow(["d", "policy", "c", "scv", "c_d", "L_d", "scv_opt",
                     "lower_bound", "upper_bound", "hpd_mass"])
    for d in range(1, args.dmax + 1):
        opt = optimal_radius(d)
        lower, upper = scv_bounds(d)
        hpd = regularized_gamma_p(0.5 * d, 0.5 * opt.c_d ** 2)
        for policy in args.policies:
            c = _scv_radius(policy, d, opt)
            row = [str(d), policy] + [
                format_float(v)
                for v in (c, scv_normal(d, c), opt.c_d, opt.l_d,
                          opt.scv_at_opt, lower, upper, hpd)
            ]
            writer.writerow(row)
    return 0


# ---------------------------------------------------------------------------
# replicate
# ---------------------------------------------------------------------------


def _run_indexed(tasks, threads):
    """Evaluate index-keyed closures, preserving index order in the output."""
    if threads <= 1:
        return [task() for task in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda task: task(), tasks))


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, str) else
                             str(v) if isinstance(v, (int, np.integer)) else
                             format_float(v) for v in row])


GAUSSIAN_T_GRID = tuple([5] + list(range(1005, 9006, 1000)))


def replicate_gaussian_t(seed, reps, out_dir):
    """One-dimensional conjugate Gaussian runs over a grid of sample sizes."""
    data = gaussian_dataset(d=1, n=20, mu=2.0, seed=spawn_seed(seed, 0))
    model = GaussianMeanModel(s0=1.0, data=data)
    exact = model.exact_log_marginal()
    opts = ThamesOptions()

    def task(i, t):
        def run():
            draws = model.posterior_sample(t, spawn_seed(seed, 1 + i))
            try:
                res = thames(draws, model.log_post(draws), opts)
            except NumericalError:
                # tiny T can leave the fitted ellipsoid empty; record the
                # failed run instead of aborting the grid
                return (t, math.nan, exact, math.nan, math.nan, math.nan,
                        "false")
            covered = res.ci_log_z[0] <= exact <= res.ci_log_z[1]
            return (t, res.log_z, exact, res.log_z - exact,
                    res.ci_log_z[0], res.ci_log_z[1], str(bool(covered)).lower())
        return run

    rows = _run_indexed([task(i, t) for i, t in enumerate(GAUSSIAN_T_GRID)],
                        worker_count())
    _write_csv(os.path.join(out_dir, "gaussian_T.csv"),
               ["T", "log_z", "exact_log_z", "error", "ci_lower", "ci_upper",
                "covered"], rows)


GAUSSIAN_D_GRID = (1, 5, 10, 25, 50)
GAUSSIAN_D_VARIANTS = ("no-split", "split", "oracle")


def replicate_gaussian_d(seed, reps, out_dir, t=10000):
    """Split / no-split / oracle-moment comparison across dimensions."""
    opts_split = ThamesOptions(split=True)
    opts_nosplit = ThamesOptions(split=False)

    def task(index, d, rep):
        def run():
            data_seed = spawn_seed(seed, 2 * index)
            draw_seed = spawn_seed(seed, 2 * index + 1)
            model = GaussianMeanModel(s0=1.0, data=gaussian_dataset(d, seed=data_seed))
            exact = model.exact_log_marginal()
            draws = model.posterior_sample(t, draw_seed)
            log_post = model.log_post(draws)
            m_n, s_n = model.posterior_params()
            oracle = Ellipsoid(m_n, math.sqrt(s_n) * np.eye(d), math.sqrt(d + 1.0))
            out = []
            for variant, res in (
                ("no-split", thames(draws, log_post, opts_nosplit)),
                ("split", thames(draws, log_post, opts_split)),
                ("oracle", thames(draws, log_post, opts_nosplit, ellipsoid=oracle)),
            ):
                out.append((variant, d, rep, res.log_z, exact, res.log_z - exact))
            return out
        return run

    tasks, index = [], 0
    for d in GAUSSIAN_D_GRID:
        for rep in range(reps):
            tasks.append(task(index, d, rep))
            index += 1
    rows = [row for chunk in _run_indexed(tasks, worker_count()) for row in chunk]
    _write_csv(os.path.join(out_dir, "gaussian_d.csv"),
               ["variant", "d", "rep", "log_z", "exact_log_z", "error"], rows)


DIRMULT_D_GRID = (1, 20, 50)


def replicate_dirmult(seed, reps, out_dir, n=400, l=150, t=10000, a0=1.0):
    """Count-model runs: fixed true frequencies versus frequencies drawn
    from the prior, the latter with the simplex volume-ratio adjustment."""
    from .correction import ConstrainedCorrectionConfig

    # one true frequency vector per (regime, d), shared by all datasets:
    # uniform when fixed, a single prior draw when stochastic
    def true_mu(regime, d):
        k = d + 1
        if regime == "fixed":
            return np.full(k, 1.0 / k)
        return dirmult_mu(k, a0, spawn_seed(seed, 100_000 + d))

    def task(index, regime, d, rep, mu):
        def run():
            data_seed = spawn_seed(seed, 3 * index + 1)
            draw_seed = spawn_seed(seed, 3 * index + 2)
            model = DirMultModel(a0=a0, l=l, data=dirmult_dataset(mu, n, l, data_seed))
            exact = model.exact_log_marginal()
            draws = model.posterior_sample(t, draw_seed)
            log_post = model.log_post(draws)
            plain = thames(draws, log_post, ThamesOptions())
            corr_cfg = ConstrainedCorrectionConfig(
                support=model.support(), n_samples=1000,
                seed=spawn_seed(seed, 3 * index + 2) ^ 1)
            adjusted = thames(draws, log_post,
                              ThamesOptions(correction=corr_cfg))
            shift = adjusted.log_z - plain.log_z
            return (regime, d, rep, plain.log_z, adjusted.log_z, exact,
                    plain.log_z - exact, shift, plain.se_recip_rel)
        return run

    tasks, index = [], 0
    for regime in ("fixed", "stochastic"):
        for d in DIRMULT_D_GRID:
            mu = true_mu(regime, d)
            for rep in range(reps):
                tasks.append(task(index, regime, d, rep, mu))
                index += 1
    rows = _run_indexed(tasks, worker_count())
    _write_csv(os.path.join(out_dir, "dirmult.csv"),
               ["regime", "d", "rep", "log_z", "log_z_corrected", "exact_log_z",
                "error", "correction_shift", "se_recip_rel"], rows)


def replicate_prostate(seed, reps, out_dir, t=10000, sigma2=1.0):
    """Nested-regression comparison on the bundled prostate table."""
    models = prostate_models(sigma2=sigma2, alpha=0.5)
    opts = ThamesOptions(split=False)

    def task(i, k, model):
        def run():
            draws = model.posterior_sample(t, spawn_seed(seed, i))
            res = thames(draws, model.log_post(draws), opts)
            return (f"M{k}", k, model.exact_log_marginal(), res.log_z,
                    res.ci_log_z[0], res.ci_log_z[1])
        return run

    rows = _run_indexed(
        [task(i, k, model) for i, (k, model) in enumerate(sorted(models.items()))],
        worker_count())
    _write_csv(os.path.join(out_dir, "prostate.csv"),
               ["model", "k", "exact_log_z", "thames_log_z", "ci_lower",
                "ci_upper"], rows)


def replicate_toy(seed, reps, out_dir, t=2000, stride=50):
    """Running-estimate traces on the two-dimensional all-zeros dataset,
    contrasting the truncated estimator with the plain harmonic mean."""
    d = 2
    model = GaussianMeanModel(s0=1.0, data=np.zeros((20, d)))
    exact = model.exact_log_marginal()
    draws = model.posterior_sample(t, spawn_seed(seed, 0))
    log_post = model.log_post(draws)
    log_lik = model.log_likelihood(draws)
    opts = ThamesOptions(split=False,
                         radius_policy=RadiusPolicy.fixed(math.sqrt(d + 1.0)))
    rows = []
    for upto in range(stride, t + 1, stride):
        res = thames(draws[:upto], log_post[:upto], opts)
        rows.append((upto, res.log_z, harmonic_mean_log_z(log_lik[:upto]), exact))
    _write_csv(os.path.join(out_dir, "toy_running.csv"),
               ["T", "thames_log_z", "harmonic_log_z", "exact_log_z"], rows)


REPLICATE_EXPERIMENTS = {
    "gaussian-T": replicate_gaussian_t,
    "gaussian-d": replicate_gaussian_d,
    "dirmult": replicate_dirmult,
    "prostate": replicate_prostate,
    "toy-figure7": replicate_toy,
}


def cmd_replicate(args, stdout):
    os.makedirs(args.out, exist_ok=True)
    REPLICATE_EXPERIMENTS[args.experiment](args.seed, args.reps, args.out)
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(
        prog="thames",
        description="Truncated harmonic mean estimation of marginal "
                    "likelihoods from posterior draws. Density columns are "
                    "NATURAL log; convert before ingesting.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_est = sub.add_parser("estimate", help="estimate log Z from a draw table")
    p_est.add_argument("input")
    p_est.add_argument("--radius", type=parse_radius_policy,
                       default=RadiusPolicy.sqrt_d_plus_1(),
                       help="sqrt_d_plus_1 | fixed:<c> | chisq_median | "
                            "optimal | grid:<c1,c2,...>")
    p_est.add_argument("--no-split", action="store_true")
    p_est.add_argument("--ci", type=float, default=0.95)
    p_est.add_argument("--ar1", action="store_true",
                       help="inflate the variance by an AR(1) factor")
    p_est.add_argument("--seed", type=int, default=0)
    p_est.set_defaults(func=cmd_estimate)

    p_cor = sub.add_parser("correct",
                           help="estimate, then adjust for constrained support")
    p_cor.add_argument("input")
    p_cor.add_argument("--support", type=parse_support, required=True,
                       help="unbounded | positive:i,j,... | "
                            "box:lo:hi,lo:hi,... | simplex")
    p_cor.add_argument("--n", type=int, default=100)
    p_cor.add_argument("--radius", type=parse_radius_policy,
                       default=RadiusPolicy.sqrt_d_plus_1())
    p_cor.add_argument("--no-split", action="store_true")
    p_cor.add_argument("--ci", type=float, default=0.95)
    p_cor.add_argument("--seed", type=int, default=0)
    p_cor.set_defaults(func=cmd_correct)

    p_scv = sub.add_parser("scv",
                           help="tabulate normal-posterior SCV and optimal radii")
    p_scv.add_argument("--dmax", type=int, default=200)
    p_scv.add_argument("--policies", nargs="+", default=list(SCV_POLICIES))
    p_scv.set_defaults(func=cmd_scv)

    p_rep = sub.add_parser("replicate", help="run a built-in experiment")
    p_rep.add_argument("experiment", choices=sorted(REPLICATE_EXPERIMENTS))
    p_rep.add_argument("--out", required=True)
    p_rep.add_argument("--seed", type=int, default=0)
    p_rep.add_argument("--reps", type=int, default=50)
    p_rep.set_defaults(func=cmd_replicate)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    stdout = sys.stdout
    try:
        return args.func(args, stdout)
    except ParseError as exc:
        emit_error("parse", str(exc), stdout, line=exc.line)
        return 3
    except ZeroSupportOverlap as exc:
        extra = {}
        if exc.ci is not None:
            extra = {"correction_ci_lower": exc.ci[0],
                     "correction_ci_upper": exc.ci[1]}
        emit_error("numerical", str(exc), stdout, **extra)
        return 4
    except NumericalError as exc:
        emit_error("numerical", str(exc), stdout)
        return 4
    except (InvalidInput, OSError, ValueError) as exc:
        emit_error("usage", str(exc), stdout)
        return 2


if __name__ == "__main__":
    sys.exit(main())
