"""Command-line entrypoint covering every workflow stage."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import monitor, pipeline, reward, selector, serving, simulator
from .core import Post, SubjectLineCandidate, SOURCE_GENERATED, SOURCE_RULE
from .errors import EngageOptError


def _require(path: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"input file not found: {path}")
    return p


def cmd_ingest(args) -> int:
    with open(_require(args.logs), encoding="utf-8") as fh:
        records = pipeline.ingest_logs(fh)
    pipeline.write_jsonl((r.__dict__ for r in records), args.out)
    print(f"ingested {len(records)} records -> {args.out}")
    return 0


def cmd_label(args) -> int:
    config = pipeline.PipelineConfig(
        margin=args.margin, min_sends=args.min_sends, min_sends_scope=args.min_sends_scope
    )
    with open(_require(args.logs), encoding="utf-8") as fh:
        records = pipeline.ingest_logs(fh)
    catalog = pipeline.load_catalog(_require(args.catalog))
    aggregates = pipeline.aggregate_records(records, catalog)
    pairs, summary = pipeline.label_pairs(aggregates, config)
    pipeline.write_pairs(pairs, args.out)
    print(json.dumps(summary.to_dict(), sort_keys=True))
    return 0


def _load_pair_data(path) -> list[reward.PairDatum]:
    return [
        reward.PairDatum(p.post_text, p.winner.text, p.loser.text)
        for p in pipeline.read_pairs(_require(path))
    ]


def cmd_train(args) -> int:
    config = reward.TrainConfig(
        learning_rate=args.lr, l2=args.l2, max_epochs=args.epochs, seed=args.seed
    )
    pairs = pipeline.read_pairs(_require(args.pairs))
    if args.kind == reward.KIND_PAIRWISE:
        data = [reward.PairDatum(p.post_text, p.winner.text, p.loser.text) for p in pairs]
        params = reward.train_pairwise(data, config)
    else:
        data = []
        for p in pairs:
            data.append(reward.PointwiseDatum(p.post_text, p.winner.text, True))
            data.append(reward.PointwiseDatum(p.post_text, p.loser.text, False))
        params = reward.train_pointwise(data, config)
    params.save(args.out)
    print(f"trained {args.kind} model on {len(pairs)} pairs -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    params = reward.RewardModelParams.load(_require(args.params))
    data = _load_pair_data(args.pairs)
    accuracy = reward.evaluate_accuracy(params, data)
    result = {"accuracy": accuracy, "pairs": len(data)}
    print(json.dumps(result, sort_keys=True))
    if args.out:
        Path(args.out).write_text(json.dumps(result, sort_keys=True) + "\n", encoding="utf-8")
    return 0


def cmd_select(args) -> int:
    from .generators import rule_based_subject

    params = reward.RewardModelParams.load(_require(args.params))
    candidates = [SubjectLineCandidate(rule_based_subject(args.post), SOURCE_RULE)]
    if args.candidates:
        for line in _require(args.candidates).read_text(encoding="utf-8").splitlines():
            if line.strip():
                candidates.append(SubjectLineCandidate(line.strip(), SOURCE_GENERATED))
    pool = selector.CandidatePool(post_id="cli", post_text=args.post, candidates=candidates)
    decision = selector.select_best(params, pool)
    print(json.dumps(
        {"subject": decision.chosen.text, "source": decision.source, "scores": decision.scores},
        sort_keys=True, ensure_ascii=False,
    ))
    return 0


def cmd_serve(args) -> int:
    config = serving.ServiceConfig.from_file(_require(args.config))
    params = reward.RewardModelParams.load(config.model_path)
    service = serving.EngagementService(config, params)
    server = service.make_server()
    print(f"listening on {config.listen_host}:{server.server_address[1]}")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.shutdown()
        server.server_close()
    return 0


def cmd_simulate(args) -> int:
    kwargs = {}
    if args.config:
        kwargs = json.loads(_require(args.config).read_text(encoding="utf-8"))
    if args.seed is not None:
        kwargs["seed"] = args.seed
    if args.num_posts is not None:
        kwargs["num_posts"] = args.num_posts
    config = simulator.SimConfig(**kwargs)
    report = simulator.run_end_to_end(config)
    Path(args.out).write_text(report.to_json() + "\n", encoding="utf-8")
    print(f"simulation report -> {args.out}")
    return 0


def cmd_monitor(args) -> int:
    params = reward.RewardModelParams.load(_require(args.params))
    fresh = _load_pair_data(args.pairs)
    baseline = monitor.MonitorBaseline(
        baseline_accuracy=args.baseline, established_at=args.day, min_sample=args.min_sample
    )
    report = monitor.daily_check(params, fresh, baseline, threshold=args.threshold, day=args.day)
    if report.retrain_triggered and args.train_pairs and args.holdout_pairs:
        result = monitor.retrain_and_swap(
            params,
            _load_pair_data(args.train_pairs),
            _load_pair_data(args.holdout_pairs),
            reward.TrainConfig(seed=args.seed),
            params_path=args.params,
        )
        report.alert = result.alert
    if args.report_log:
        monitor.append_report(report, args.report_log)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def cmd_export_sft(args) -> int:
    pairs = pipeline.read_pairs(_require(args.pairs))
    pipeline.write_jsonl(pipeline.export_sft(pairs), args.out)
    print(f"exported {len(pairs)} SFT records -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="engageopt", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="validate and normalize an engagement log CSV")
    p.add_argument("--logs", required=True, help="engagement log CSV path")
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("label", help="label preference pairs from logs")
    p.add_argument("--logs", required=True)
    p.add_argument("--catalog", required=True, help="post/variant text catalog JSONL")
    p.add_argument("--out", required=True, help="output pairs JSONL")
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--min-sends", type=int, default=300)
    p.add_argument("--min-sends-scope", choices=["per_arm", "combined"], default="per_arm")
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("train", help="train a reward model from labeled pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--kind", choices=["pointwise", "pairwise"], default="pairwise")
    p.add_argument("--out", required=True, help="params JSON output path")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--l2", type=float, default=1e-4)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="pairwise accuracy of a trained model")
    p.add_argument("--pairs", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("select", help="pick the best subject for one post offline")
    p.add_argument("--params", required=True)
    p.add_argument("--post", required=True, help="post text")
    p.add_argument("--candidates", default=None, help="file with one candidate per line")
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("serve", help="run the selection HTTP service")
    p.add_argument("--config", required=True, help="service config JSON")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("simulate", help="run the end-to-end synthetic A/B loop")
    p.add_argument("--config", default=None, help="SimConfig JSON")
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--num-posts", type=int, default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("monitor", help="daily accuracy check, optional retrain on drift")
    p.add_argument("--params", required=True)
    p.add_argument("--pairs", required=True, help="fresh ground-truth pairs JSONL")
    p.add_argument("--baseline", type=float, required=True)
    p.add_argument("--threshold", type=float, default=0.10)
    p.add_argument("--min-sample", type=int, default=500)
    p.add_argument("--day", default="")
    p.add_argument("--report-log", default=None)
    p.add_argument("--train-pairs", default=None)
    p.add_argument("--holdout-pairs", default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_monitor)

    p = sub.add_parser("export-sft", help="export prompt/completion SFT records")
    p.add_argument("--pairs", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_sft)

    return parser


def run_command(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (EngageOptError, FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run_command())


if __name__ == "__main__":
    main()
