"""Command line front end: ``stochtree trees | reduce | expand | converge``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from fractions import Fraction
from pathlib import Path

from .calculus import PolySdeModel, gbm_model
from .montecarlo import KRule, collect_words, convergence_experiment, expansion_terms, gbm_reference
from .trees import (
    ROOT,
    HalfInt,
    TreeSizeError,
    TreeSyntaxError,
    cardinality,
    density,
    enumerate_trees,
    format_tree,
    order,
    parse_tree,
    symmetry_factor,
)
from .words import Calculus, format_word, reduce_tree

DEFAULT_H = ",".join(f"{2.0 ** -k!r}" for k in range(3, 9))
DEFAULTS = {
    "p": "1.5",
    "m": 1,
    "calculus": "ito",
    "model": "gbm",
    "mu": "0.5",
    "sigma": "0.3",
    "x0": "1",
    "h": DEFAULT_H,
    "paths": 10_000,
    "k_min": 1024,
    "k_per_unit": 64.0,
    "format": "text",
    "out": None,
}


class UsageError(Exception):
    pass


def _latex_tree(t) -> str:
    name = r"\gamma" if t.color == ROOT else str(t.color)
    if not t.children:
        return name if t.color == ROOT else rf"\tau_{{{name}}}"
    return "[" + ",".join(_latex_tree(c) for c in t.children) + f"]_{{{name}}}"


def _num(v) -> str:
    return str(v) if isinstance(v, (int, Fraction)) else repr(float(v))


# --- subcommands ------------------------------------------------------------


def cmd_trees(p, m: int, fmt: str = "text") -> str:
    rows = []
    for t in enumerate_trees(p, m):
        rows.append(
            {
                "tree": format_tree(t),
                "order": str(order(t)),
                "nodes": t.num_nodes,
                "sigma": symmetry_factor(t),
                "gamma": density(t),
                "alpha": cardinality(t),
            }
        )
    if fmt == "json":
        return json.dumps({"p": str(HalfInt.of(p)), "m": m, "trees": rows}, indent=2)
    if fmt == "latex":
        return "\n".join(
            f"${_latex_tree(parse_tree(r['tree']))}$ & {r['order']} & {r['nodes']} & {r['sigma']} & {r['gamma']} & {r['alpha']} \\\\"
            for r in rows
        )
    if fmt == "csv":
        lines = ["tree,order,nodes,sigma,gamma,alpha"]
        lines += [f"\"{r['tree']}\",{r['order']},{r['nodes']},{r['sigma']},{r['gamma']},{r['alpha']}" for r in rows]
        return "\n".join(lines)
    width = max(len(r["tree"]) for r in rows)
    lines = [f"{'tree':<{width}}  rho  l  sigma  gamma  alpha"]
    for r in rows:
        lines.append(
            f"{r['tree']:<{width}}  {r['order']:>3}  {r['nodes']}  {r['sigma']:>5}  {r['gamma']:>5}  {r['alpha']:>5}"
        )
    return "\n".join(lines)


def cmd_reduce(tree_text: str, calculus, fmt: str = "text") -> str:
    t = parse_tree(tree_text)
    comb = reduce_tree(t, calculus)
    if fmt == "json":
        return json.dumps(
            {"tree": format_tree(t), "calculus": Calculus.of(calculus).value, "integral": comb.to_json()}, indent=2
        )
    if fmt == "latex":
        return comb.to_latex()
    return str(comb)


def cmd_expand(model: PolySdeModel, x0, p, calculus, fmt: str = "text", include_zero: bool = False) -> str:
    terms = expansion_terms(model, x0, p, calculus, nonzero_only=not include_zero)
    collected = collect_words(terms)
    if fmt == "json":
        return json.dumps(
            {
                "model": model.name,
                "x0": [_num(v) for v in x0],
                "p": str(HalfInt.of(p)),
                "calculus": Calculus.of(calculus).value,
                "terms": [
                    {
                        "tree": format_tree(term.tree),
                        "F": _num(term.value),
                        "weight": str(term.weight),
                        "integral": term.integral.to_json(),
                    }
                    for term in terms
                ],
                "collected": [
                    {"word": list(w), "coefficient": _num(v)}
                    for w, v in sorted(collected.items(), key=lambda kv: (len(kv[0]), kv[0]))
                ],
            },
            indent=2,
        )
    if fmt == "latex":
        parts = []
        for w, v in sorted(collected.items(), key=lambda kv: (len(kv[0]), kv[0])):
            coeff = _num(v)
            idx = ",".join(map(str, w))
            parts.append(coeff if not w else rf"{coeff}\,\mathcal{{I}}_{{({idx})}}")
        return "f(X_t) = " + " + ".join(parts) + rf" + \mathcal{{R}}_{{{HalfInt.of(p)}}}(t,t_0)"
    lines = []
    for term in terms:
        lines.append(f"{format_tree(term.tree)}  F={_num(term.value)}  weight={term.weight}  I={term.integral}")
    lines.append(
        "collected: "
        + " + ".join(
            f"{_num(v)}*{format_word(w)}" for w, v in sorted(collected.items(), key=lambda kv: (len(kv[0]), kv[0]))
        )
    )
    return "\n".join(lines)


def cmd_converge(model, x0, p, calculus, h_list, N, seed, k_rule, exact, config):
    return convergence_experiment(
        model, [float(v) for v in x0], p, calculus, h_list, K_rule=k_rule, N=N, seed=seed, exact=exact, config=config
    )


# --- argument handling --------------------------------------------------------


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(str(text).strip())
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"not a number: {text!r}") from None


def _build_model(opts: dict):
    source = opts["model"]
    calculus = Calculus.of(opts["calculus"])
    if source == "gbm":
        mu, sigma, x0 = _fraction(opts["mu"]), _fraction(opts["sigma"]), _fraction(opts["x0"])
        model = gbm_model(mu, sigma, calculus)
        return model, [x0], gbm_reference(x0, mu, sigma)
    if source.startswith("file:"):
        path = Path(source[5:])
        try:
            model = PolySdeModel.load(path)
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise UsageError(f"cannot load model {path}: {exc}") from None
        x0 = [_fraction(v) for v in str(opts["x0"]).split(",")]
        if len(x0) == 1 and model.d > 1:
            x0 = x0 * model.d
        if len(x0) != model.d:
            raise UsageError(f"--x0 needs {model.d} entries")
        return model, x0, None
    raise UsageError(f"unknown model {source!r}; use 'gbm' or 'file:PATH'")


def _merge(args: argparse.Namespace) -> dict:
    opts = dict(DEFAULTS)
    if os.environ.get("STOCHTREE_SEED"):
        opts["seed"] = os.environ["STOCHTREE_SEED"]
    if getattr(args, "config", None):
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(cfg, dict):
            raise UsageError("config file must hold a JSON object")
        opts.update({k.replace("-", "_"): v for k, v in cfg.items()})
    for key, val in vars(args).items():
        if val is not None and key not in ("command", "config"):
            opts[key] = val
    opts.setdefault("seed", 0)
    return opts


def _parse_h(text) -> list[float]:
    if isinstance(text, (list, tuple)):
        vals = [float(v) for v in text]
    else:
        try:
            vals = [float(Fraction(v.strip())) for v in str(text).split(",") if v.strip()]
        except (ValueError, ZeroDivisionError):
            raise UsageError(f"bad --h list {text!r}") from None
    if any(v <= 0 for v in vals):
        raise UsageError("step sizes must be positive")
    return vals


def _write_atomic(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochtree", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, *names):
        sp.add_argument("--config", help="JSON file with option defaults; flags win")
        sp.add_argument("--format", choices=["text", "json", "csv", "latex"])
        sp.add_argument("--out", help="write output here instead of stdout")
        if "p" in names:
            sp.add_argument("--p", help="truncation order, a multiple of 1/2 (e.g. 1.5)")
        if "calculus" in names:
            sp.add_argument("--calculus", choices=["ito", "stratonovich"])
        if "model" in names:
            sp.add_argument("--model", help="'gbm' or 'file:PATH'")
            sp.add_argument("--mu")
            sp.add_argument("--sigma")
            sp.add_argument("--x0", help="initial value; comma list for d > 1")

    sp = sub.add_parser("trees", help="list trees up to an order")
    common(sp, "p")
    sp.add_argument("--m", type=int)

    sp = sub.add_parser("reduce", help="reduce a tree integral to iterated-integral words")
    common(sp, "calculus")
    sp.add_argument("tree", help="bracket notation, e.g. '[t0,[t0]_1]_g'")

    sp = sub.add_parser("expand", help="list the truncated expansion term by term")
    common(sp, "p", "calculus", "model")
    sp.add_argument("--all", action="store_true", default=None, help="include terms with F(t)(x0) = 0")

    sp = sub.add_parser("converge", help="measure truncation error orders by Monte Carlo")
    common(sp, "p", "calculus", "model")
    sp.add_argument("--h", help="comma-separated step sizes")
    sp.add_argument("--paths", type=int)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--k-min", dest="k_min", type=int)
    sp.add_argument("--k-per-unit", dest="k_per_unit", type=float)
    return parser


def _run(args, opts) -> str:
    fmt = opts["format"]
    try:
        p = HalfInt.of(opts["p"])
    except (ValueError, ZeroDivisionError):
        raise UsageError(f"--p must be a multiple of 1/2, got {opts['p']!r}") from None

    if args.command == "trees":
        m = int(opts["m"])
        if m < 1:
            raise UsageError("--m must be >= 1")
        return cmd_trees(p, m, fmt)
    if args.command == "reduce":
        return cmd_reduce(args.tree, opts["calculus"], fmt)

    model, x0, exact = _build_model(opts)
    if args.command == "expand":
        return cmd_expand(model, x0, p, opts["calculus"], fmt, include_zero=bool(opts.get("all")))

    h_list = _parse_h(opts["h"])
    if len(h_list) < 3:
        raise UsageError("--h needs at least 3 step sizes")
    N = int(opts["paths"])
    if N < 1:
        raise UsageError("--paths must be positive")
    seed = int(opts["seed"])
    k_rule = KRule(int(opts["k_min"]), float(opts["k_per_unit"]))
    config = {"model_source": opts["model"], "mu": str(opts["mu"]), "sigma": str(opts["sigma"])}
    report = cmd_converge(model, x0, p, opts["calculus"], h_list, N, seed, k_rule, exact, config)

    header = "# " + json.dumps(report.config, sort_keys=True) + "\n"
    csv_text = header + report.to_csv()
    if opts["out"]:
        out = Path(opts["out"])
        _write_atomic(out, csv_text)
        _write_atomic(out.with_suffix(".json"), report.to_json() + "\n")
    summary = (
        f"rms slope {_fmt_slope(report.rms_fit)} (expected {report.expected_rms_slope}), "
        f"mean slope {_fmt_slope(report.mean_fit)} (expected {report.expected_mean_slope})"
    )
    if opts["out"]:
        return summary
    if fmt == "json":
        return report.to_json()
    if fmt == "csv":
        return csv_text.rstrip("\n")
    return csv_text + summary


def _fmt_slope(fit) -> str:
    if fit.slope is None:
        return f"n/a (below noise floor at h={fit.excluded})"
    s = f"{fit.slope:.3f} +- {fit.stderr:.3f}"
    if fit.excluded:
        s += f" (excluded h={fit.excluded})"
    return s


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _merge(args)
        text = _run(args, opts)
    except (UsageError, TreeSyntaxError, TreeSizeError, ValueError) as exc:
        print(f"stochtree: error: {exc}", file=sys.stderr)
        return 2
    out = opts.get("out")
    if out and args.command != "converge":
        _write_atomic(Path(out), text + "\n")
    else:
        print(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
