"""Operator command line: synthesize data, train, evaluate, explain, verify,
and serve.

Exit codes: 0 success, 2 usage/config error, 3 domain precondition not met.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import sys
from pathlib import Path

import numpy as np

from . import cfx, dataset, evalkit, gbm, narrate, oracles
from .features import default_catalog, load_catalog, save_catalog

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PRECONDITION = 3


def _parse_date(raw: str) -> dt.date:
    return dt.date.fromisoformat(raw)


def _load_catalog(args):
    if getattr(args, "policy_file", None):
        return load_catalog(args.policy_file)
    return default_catalog()


def cmd_synth(args) -> int:
    try:
        config = dataset.SynthConfig(
            n_cows=args.n_cows, n_days=args.n_days, n_farms=args.n_farms,
            start_date=_parse_date(args.start_date),
            infection_rate=args.infection_rate)
    except (dataset.DatasetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    cows, milk = dataset.generate_herd(config, args.seed)
    dataset.save_csv(cows, milk, args.out)
    n_events = sum(len(c.infection_events) for c in cows)
    print(f"wrote {len(cows)} cows, {len(milk)} milk rows, "
          f"{n_events} infection events to {args.out}")
    return EXIT_OK


def _split_table(table, split_date: dt.date):
    split_ord = split_date.toordinal()
    train_mask = table.day_ordinals < split_ord
    test_mask = ~train_mask
    return train_mask, test_mask


def _subtable(table, mask):
    idx = np.flatnonzero(mask)
    return dataset.InstanceTable(
        np.ascontiguousarray(table.X[idx]),
        [table.cow_ids[i] for i in idx],
        table.day_ordinals[idx], table.days_to_onset[idx], table.n_clamped)


def cmd_train(args) -> int:
    catalog = _load_catalog(args)
    try:
        cows, milk = dataset.load_csv(args.data_dir)
        table = dataset.build_instance_table(cows, milk, catalog)
    except dataset.DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    split_date = _parse_date(args.split_date)
    train_mask, test_mask = _split_table(table, split_date)
    y = table.labels(args.horizon)
    for name, mask in (("training", train_mask), ("test", test_mask)):
        if y[mask].sum() == 0 or (~y[mask]).sum() == 0:
            print(f"error: {name} split has a single class "
                  f"(split date {split_date})", file=sys.stderr)
            return EXIT_USAGE
    n_pos = int(y[train_mask].sum())
    n_neg = int(train_mask.sum()) - n_pos
    pcw = args.positive_class_weight
    if pcw <= 0:
        pcw = n_neg / n_pos
    config = gbm.TrainConfig(
        n_trees=args.n_trees, max_depth=args.max_depth,
        min_samples_leaf=args.min_samples_leaf,
        learning_rate=args.learning_rate,
        subsample_fraction=args.subsample_fraction, seed=args.seed,
        positive_class_weight=pcw)
    model = gbm.fit_arrays(table.X[train_mask], y[train_mask].astype(float),
                           config, catalog_version=catalog.version)
    gbm.save_model(model, args.out_model)

    train_auc = evalkit.auc_score(y[train_mask],
                                  model.predict_proba(table.X[train_mask]))
    test_auc = evalkit.auc_score(y[test_mask],
                                 model.predict_proba(table.X[test_mask]))
    print(f"train AUC {train_auc:.4f}  test AUC {test_auc:.4f}  "
          f"({n_pos} pos / {n_neg} neg training instances)")
    test_table = _subtable(table, test_mask)
    try:
        curve = evalkit.horizon_recall(model, test_table)
        for h, p, n in curve.points:
            print(f"horizon {h}d: {p:.3f} of {n} infections found")
    except evalkit.EvalError as exc:
        print(f"horizon curve unavailable: {exc}")
    print(f"model written to {args.out_model}")
    return EXIT_OK


def cmd_eval(args) -> int:
    catalog = _load_catalog(args)
    try:
        model = gbm.load_model(args.model,
                               expected_catalog_version=catalog.version)
    except gbm.ModelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cows, milk = dataset.load_csv(args.data_dir)
        table = dataset.build_instance_table(cows, milk, catalog)
    except dataset.DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if args.split_date:
        train_mask, test_mask = _split_table(table,
                                             _parse_date(args.split_date))
        weights = cfx.mad_weights(table.X[train_mask], catalog)
        eval_table = _subtable(table, test_mask)
    else:
        weights = cfx.mad_weights(table.X, catalog)
        eval_table = table
    curve = evalkit.horizon_recall(model, eval_table)
    for h, p, n in curve.points:
        print(f"horizon {h}d: {p:.3f} of {n} infections found")
    samples = evalkit.sample_high_confidence_healthy(
        model, eval_table, args.min_healthy_confidence, args.sample_n,
        args.seed)
    config = cfx.CfxConfig()
    summary = evalkit.score_shift_summary(model, eval_table, samples, catalog,
                                          weights, config)
    evalkit.export_report(curve, summary, args.report_dir)
    print(f"sampled {len(samples)} healthy instances, "
          f"flip_rate {summary.flip_rate:.3f}")
    print(f"reports written to {args.report_dir}")
    return EXIT_OK


def cmd_explain(args) -> int:
    catalog = _load_catalog(args)
    try:
        model = gbm.load_model(args.model,
                               expected_catalog_version=catalog.version)
        cows, milk = dataset.load_csv(args.data_dir)
    except (gbm.ModelError, dataset.DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    cow = next((c for c in cows if c.cow_id == args.cow), None)
    if cow is None:
        print(f"error: unknown cow {args.cow!r}", file=sys.stderr)
        return EXIT_USAGE
    context = dataset.build_context(cows, milk)
    as_of = _parse_date(args.date)
    try:
        fv = dataset.engineer_features(
            cow, [m for m in milk if m.cow_id == cow.cow_id], as_of, catalog,
            context)
    except dataset.DatasetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    table = dataset.build_instance_table(cows, milk, catalog, context)
    weights = cfx.mad_weights(table.X, catalog)
    config = cfx.CfxConfig()
    score = gbm.predict_score(model, fv)
    if score >= config.flip_threshold:
        print(f"cow {args.cow} is already predicted to succumb "
              f"(P(Sick) = {score:.3f})", file=sys.stderr)
        return EXIT_PRECONDITION
    result = cfx.find_counterfactual(model, fv, catalog, weights, config)
    doc = cfx.result_document(result, catalog)
    if result.status == cfx.CfxStatus.Found:
        sentence = narrate.render(args.cow, result, catalog,
                                  narrate.DIGITS_STYLE, weights)
        print(sentence)
    else:
        print("no actionable counterfactual found")
    print(json.dumps(doc, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    ok, lines = oracles.run_oracle_check(args.n, args.seed)
    for line in lines:
        print(line)
    return EXIT_OK if ok else 1


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(args.data_dir, args.model, policy_file=args.policy_file,
                     static_dir=args.static_dir)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def cmd_policy(args) -> int:
    save_catalog(default_catalog(), args.out)
    print(f"default policy written to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="herdcfx",
        description="Mastitis risk prediction with counterfactual explanations")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic herd dataset")
    p.add_argument("--out", required=True, help="output directory for CSVs")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--n-cows", type=int, default=300)
    p.add_argument("--n-days", type=int, default=730)
    p.add_argument("--n-farms", type=int, default=3)
    p.add_argument("--start-date", default="2022-01-01")
    p.add_argument("--infection-rate", type=float, default=0.004)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the risk model on a CSV dataset")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out-model", required=True)
    p.add_argument("--split-date", required=True,
                   help="temporal split: train strictly before this ISO date")
    p.add_argument("--policy-file")
    p.add_argument("--horizon", type=int, default=7)
    p.add_argument("--n-trees", type=int, default=60)
    p.add_argument("--max-depth", type=int, default=4)
    p.add_argument("--min-samples-leaf", type=int, default=20)
    p.add_argument("--learning-rate", type=float, default=0.2)
    p.add_argument("--subsample-fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--positive-class-weight", type=float, default=0.0,
                   help="<= 0 means balance classes automatically")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="horizon recall + counterfactual reports")
    p.add_argument("--model", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--report-dir", required=True)
    p.add_argument("--policy-file")
    p.add_argument("--split-date",
                   help="evaluate on instances at/after this ISO date")
    p.add_argument("--sample-n", type=int, default=200)
    p.add_argument("--min-healthy-confidence", type=float, default=0.8)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="explain one cow on one day")
    p.add_argument("--model", required=True)
    p.add_argument("--data-dir", required=True)
    p.add_argument("--cow", required=True)
    p.add_argument("--date", required=True)
    p.add_argument("--policy-file")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("oracle-check", help="run oracle equivalence checks")
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--seed", type=int, default=1)
    p.set_defaults(func=cmd_oracle_check)

    p = sub.add_parser("serve", help="run the HTTP decision-support service")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--policy-file")
    p.add_argument("--static-dir", help="UI bundle directory served at /")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("policy", help="write the default policy file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_policy)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
