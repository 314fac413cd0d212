"""Command-line interface: ``glgcwm {simulate,fit,eval,compare}``.

Exit codes: 0 ok, 2 usage or configuration error, 3 fit failure,
4 data error.  Summaries go to stdout as JSON lines; ``compare --pretty``
prints an aligned table instead.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
import warnings
from pathlib import Path

from .data import DataError, has_column, read_csv, to_csv_text
from .em import AllRestartsFailed, Constraint, FitConfig, InitStrategy
from .evaluate import evaluate
from .exp_family import Family
from .metrics import adjusted_rand_index, misclassification_error
from .modelfile import ModelFileError, load_model, save_model
from .sim import DESIGNS, RECIPES, SimSpec, SpecError, generate, replication_study

EXIT_OK, EXIT_USAGE, EXIT_FIT, EXIT_DATA = 0, 2, 3, 4


class UsageError(Exception):
    pass


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.")
    with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def sidecar_path(out: Path) -> Path:
    return out.with_name(out.stem + ".spec.json")


def _load_spec(path) -> SimSpec:
    try:
        return SimSpec.load(path)
    except OSError as exc:
        raise SpecError(str(exc)) from None


def cmd_simulate(args) -> int:
    if (args.spec is None) == (args.design is None):
        raise UsageError("give exactly one of SPEC or --design")
    if args.spec is not None:
        spec = _load_spec(args.spec)
    else:
        if args.design not in DESIGNS:
            raise UsageError(f"unknown design {args.design!r}; choose from {sorted(DESIGNS)}")
        spec = DESIGNS[args.design](0)
    if args.seed is not None:
        spec = spec.with_seed(args.seed)
    data = generate(spec)
    out = Path(args.out)
    csv_text = to_csv_text(data)
    _atomic_write(out, csv_text)
    _atomic_write(sidecar_path(out), spec.dumps())
    print(json.dumps({"out": str(out), "rows": data.n, "groups": spec.G, "seed": spec.seed}))
    return EXIT_OK


def _family_from_args(args) -> Family:
    if args.family == "binomial":
        if args.trials is None:
            raise UsageError("--family binomial requires --trials")
        return Family.binomial(args.trials)
    if args.trials is not None:
        raise UsageError("--trials is only valid with --family binomial")
    if args.family == "bernoulli":
        return Family.bernoulli()
    return Family(args.family)


def _config_from_args(args) -> FitConfig:
    try:
        return FitConfig(
            max_iter=args.max_iter,
            epsilon=args.epsilon,
            n_restarts=args.restarts,
            init_strategy=InitStrategy(args.init),
            rng_seed=args.seed if args.seed is not None else 0,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_fit(args) -> int:
    family = _family_from_args(args)
    if args.constraint is not None and args.model != "cwm":
        raise UsageError("--constraint applies only to --model cwm")
    if args.G < 1:
        raise UsageError("--G must be positive")
    config = _config_from_args(args)
    data = read_csv(args.data)
    data.check_family(family)
    recipe = RECIPES[args.model]
    if args.model == "cwm":
        recipe = type(recipe)(recipe.name, "cwm", Constraint(args.constraint or "none"))
    try:
        result = recipe.fit(data, args.G, family, config)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.out:
        save_model(args.out, result.model, result)
    summary = {
        "model": args.model,
        "loglik": result.loglik,
        "bic": result.bic,
        "n_iter": result.n_iter,
        "converged": bool(result.converged),
    }
    print(json.dumps(summary))
    return EXIT_OK


def cmd_eval(args) -> int:
    model, _meta = load_model(args.model)
    label_col = args.labels or "label"
    if args.labels is not None and not has_column(args.data, args.labels):
        raise UsageError(f"label column {args.labels!r} not found in {args.data}")
    data = read_csv(args.data, label_column=label_col)
    report = evaluate(model, data, data.labels)
    print(json.dumps(report.to_dict()))
    return EXIT_OK


def _compare_row(name, result, labels) -> dict:
    row = {"model": name, "loglik": result.loglik, "bic": result.bic,
           "misclassification": None, "ari": None}
    if labels is not None:
        row["misclassification"] = misclassification_error(labels, result.labels)
        row["ari"] = adjusted_rand_index(labels, result.labels)
    return row


def _print_table(rows, columns) -> None:
    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.5f}"
        return str(v)

    cells = [[fmt(r.get(c)) for c in columns] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(columns)]
    print("  ".join(c.rjust(w) for c, w in zip(columns, widths)))
    for row in cells:
        print("  ".join(v.rjust(w) for v, w in zip(row, widths)))


def cmd_compare(args) -> int:
    names = [m.strip() for m in args.models.split(",") if m.strip()]
    unknown = [m for m in names if m not in RECIPES]
    if unknown or not names:
        raise UsageError(f"unknown model name(s) {unknown}; choose from {sorted(RECIPES)}")
    if (args.data is None) == (args.spec is None):
        raise UsageError("give exactly one of DATA or --spec")
    config = _config_from_args(args)

    if args.spec is not None:
        spec = _load_spec(args.spec)
        if args.seed is not None:
            spec = spec.with_seed(args.seed)
        G = args.G or spec.G
        summary = replication_study(spec, args.reps, names, G, config)
        rows = []
        for name in names:
            s = summary.per_recipe[name]
            rows.append({
                "model": name,
                "misclassification": s["misclassification"]["mean"],
                "ari": s["ari"]["mean"],
                "ari_sd": s["ari"]["sd"],
                "bic": s["bic"]["mean"],
                "failures": s["failures"],
            })
        if args.pretty:
            _print_table(rows, ["model", "misclassification", "ari", "ari_sd", "bic", "failures"])
            for key, v in summary.discrepancy.items():
                print(f"coefficient discrepancy {key}: mean {v['mean']} sd {v['sd']}")
        else:
            for row in rows:
                print(json.dumps(row))
            for key, v in summary.discrepancy.items():
                print(json.dumps({"discrepancy": key, "mean": v["mean"], "sd": v["sd"]}))
        return EXIT_OK if any(r["failures"] < args.reps for r in rows) else EXIT_FIT

    if args.G is None:
        raise UsageError("--G is required when comparing on a data file")
    family = _family_from_args(args)
    data = read_csv(args.data)
    data.check_family(family)
    rows = []
    for name in names:
        try:
            result = RECIPES[name].fit(data, args.G, family, config)
            rows.append(_compare_row(name, result, data.labels))
        except (AllRestartsFailed, ValueError) as exc:
            rows.append({"model": name, "error": str(exc)})
    if args.pretty:
        _print_table(rows, ["model", "misclassification", "ari", "bic", "loglik"])
        for r in rows:
            if "error" in r:
                print(f"{r['model']}: failed ({r['error']})")
    else:
        for row in rows:
            print(json.dumps(row))
    return EXIT_OK if any("error" not in r for r in rows) else EXIT_FIT


def _add_fit_options(p, seed_default=0):
    p.add_argument("--family", choices=["bernoulli", "binomial", "poisson", "gaussian"], default="poisson")
    p.add_argument("--trials", type=int)
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--epsilon", type=float, default=0.05)
    p.add_argument("--init", choices=["kmeans", "random"], default="kmeans")
    p.add_argument("--seed", type=int, default=seed_default)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="glgcwm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a labelled dataset from a simulation spec")
    p.add_argument("spec", nargs="?", help="JSON simulation spec")
    p.add_argument("--design", help=f"built-in design: {', '.join(sorted(DESIGNS))}")
    p.add_argument("--seed", type=int, help="override the spec seed")
    p.add_argument("--out", required=True, help="output CSV; the spec is written next to it")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model to a CSV dataset")
    p.add_argument("data")
    p.add_argument("--model", choices=["cwm", "fmr", "fmrc"], default="cwm")
    p.add_argument("--G", type=int, required=True)
    p.add_argument("--constraint", choices=[c.value for c in Constraint])
    _add_fit_options(p)
    p.add_argument("--out", help="write the fitted model as JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("eval", help="evaluate a saved model on a CSV dataset")
    p.add_argument("data")
    p.add_argument("model")
    p.add_argument("--labels", help="name of the true-label column (default: 'label' if present)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="compare CWM, FMR and FMRC fits")
    p.add_argument("data", nargs="?")
    p.add_argument("--spec", help="simulation spec for a replication study instead of a data file")
    p.add_argument("--G", type=int)
    p.add_argument("--models", default="cwm,fmr,fmrc")
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--pretty", action="store_true")
    _add_fit_options(p)
    p.set_defaults(func=cmd_compare, seed=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return args.func(args)
    except (UsageError, SpecError, ModelFileError) as exc:
        print(f"glgcwm {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except AllRestartsFailed as exc:
        print(f"glgcwm {args.command}: fit failed: {exc}", file=sys.stderr)
        return EXIT_FIT
    except (DataError, OSError) as exc:
        print(f"glgcwm {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
