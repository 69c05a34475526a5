"""Command-line interface: one verb per pipeline stage.

    ingest     documents jsonl -> event store
    summarize  events-without-summary jsonl -> summarized events
    timeline   store + query event id -> timeline JSON
    datagen    gold timelines -> training samples
    evaluate   predicted vs reference timelines -> metric tables
    heat       label / baseline-predict / evaluate heat levels
    serve      run the HTTP service over a store
    render     timeline JSON -> text or HTML

Exit codes: 0 clean, 1 usage error, 2 data errors encountered,
3 external backend unavailable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as config_mod
from .config import Config, load_config
from .core import (Document, Event, QueryEvent, Timeline, canonical_json,
                   validate_timeline)
from .embed import HashingEmbedder
from .heat import HeatLabeledTimeline, baseline_predict, heat_metrics, invert_levels, label_timeline
from .metrics import corpus_means, score_timeline
from .pipeline import run_pipeline
from .render import render_html, render_text
from .store import EventStore, RetrievalConfig
from .summarize import RewardParams, extractive_generator, select_summary, truncate_generator
from .timeline import (TASK_MAIN, TASKS, gen_causal_samples, gen_completion_samples,
                       gen_main_sample, gen_temporal_samples)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_BACKEND = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _open_in(path: str):
    return sys.stdin if path == "-" else open(path, "r", encoding="utf-8")


def _open_out(path: str):
    return sys.stdout if path == "-" else open(path, "w", encoding="utf-8")


def _iter_jsonl(fh):
    for line_no, line in enumerate(fh, start=1):
        line = line.strip()
        if line:
            yield line_no, line


def _load_cfg(args) -> Config:
    return load_config(getattr(args, "config", None))


# -- subcommands -------------------------------------------------------------

def cmd_ingest(args) -> int:
    cfg = _load_cfg(args)
    audit = _open_out(args.audit) if args.audit else None
    try:
        report = run_pipeline(cfg, args.documents, args.store, assignments_out=audit)
    finally:
        if audit is not None and audit is not sys.stdout:
            audit.close()
    print(json.dumps(report.to_dict(), ensure_ascii=False, indent=2))
    return EXIT_DATA if report.data_error_count else EXIT_OK


def cmd_summarize(args) -> int:
    cfg = _load_cfg(args)
    params = RewardParams(l_min=args.l_min or cfg.l_min,
                          l_max=args.l_max or cfg.l_max,
                          lambda_short=args.lambda_short or cfg.lambda_short,
                          lambda_long=args.lambda_long or cfg.lambda_long,
                          alpha=args.alpha or cfg.alpha)
    if args.generator == "truncate":
        generators = (truncate_generator,)
    elif args.generator == "extractive":
        generators = (extractive_generator,)
    else:
        generators = (truncate_generator, extractive_generator)

    docs = {}
    with _open_in(args.documents) as fh:
        for _, line in _iter_jsonl(fh):
            doc = Document.from_dict(json.loads(line))
            docs[doc.id] = doc

    errors = 0
    with _open_in(args.events) as fh, _open_out(args.output) as out:
        for line_no, line in _iter_jsonl(fh):
            try:
                event = Event.from_dict(json.loads(line))
                event_docs = [docs[d] for d in sorted(event.supporting_doc_ids)
                              if d in docs]
                if not event_docs:
                    raise KeyError(f"no documents found for event {event.id}")
                summary, breakdown = select_summary(
                    event_docs, args.reference, generators, n=args.n, params=params)
            except (KeyError, ValueError) as exc:
                print(f"line {line_no}: {exc}", file=sys.stderr)
                errors += 1
                continue
            record = event.to_dict()
            record["summary"] = summary
            record["reward_audit"] = {
                "r_len": breakdown.r_len, "r_qual": breakdown.r_qual,
                "r_total": breakdown.r_total, "length": breakdown.length,
            }
            out.write(canonical_json(record) + "\n")
    return EXIT_DATA if errors else EXIT_OK


def cmd_timeline(args) -> int:
    cfg = _load_cfg(args)
    from .service import TimelineService
    store = EventStore(args.store,
                       embedder=HashingEmbedder(cfg.retrieval_dim, cfg.retrieval_seed),
                       window_days=cfg.window_days)
    service = TimelineService(cfg, store)
    status, payload = service.timeline(args.query_event_id, args.generator)
    print(json.dumps(payload, ensure_ascii=False, indent=2))
    if status == 503:
        return EXIT_BACKEND
    return EXIT_OK if status == 200 else EXIT_DATA


def cmd_datagen(args) -> int:
    cfg = _load_cfg(args)
    seed = args.seed if args.seed is not None else cfg.datagen_seed
    timelines = []
    with _open_in(args.timelines) as fh:
        for _, line in _iter_jsonl(fh):
            timelines.append(Timeline.from_dict(json.loads(line)))

    wanted = TASKS if args.task == "all" else (args.task,)
    errors = 0
    with _open_out(args.output) as out:
        for i, tl in enumerate(timelines):
            others = timelines[:i] + timelines[i + 1:]
            for task in wanted:
                try:
                    if task == "temporal_ordering":
                        samples = [gen_temporal_samples(tl, seed)]
                    elif task == "causal_judgment":
                        samples = gen_causal_samples(tl, others, seed,
                                                     quota=args.causal_quota)
                    elif task == "timeline_completion":
                        samples = [gen_completion_samples(tl, seed)]
                    else:
                        samples = [gen_main_sample(tl, others, seed,
                                                   total_candidates=cfg.k + 1)]
                except ValueError as exc:
                    print(f"timeline {tl.query_event_id} ({task}): {exc}",
                          file=sys.stderr)
                    errors += 1
                    continue
                for s in samples:
                    out.write(canonical_json(s.to_dict()) + "\n")
    return EXIT_DATA if errors else EXIT_OK


def cmd_evaluate(args) -> int:
    def load(path):
        out = {}
        with _open_in(path) as fh:
            for _, line in _iter_jsonl(fh):
                tl = Timeline.from_dict(json.loads(line))
                out[tl.query_event_id] = tl
        return out

    predicted = load(args.predicted)
    reference = load(args.reference)
    shared = sorted(set(predicted) & set(reference))
    if not shared:
        print("no paired timelines (match is by query_event_id)", file=sys.stderr)
        return EXIT_DATA

    rows = []
    scores = []
    for qid in shared:
        s = score_timeline(predicted[qid], reference[qid], match_mode=args.match_mode)
        scores.append(s)
        rows.append((qid, s))

    width = max(len(q) for q, _ in rows)
    header = f"{'query_event':<{width}}  {'P':>6}  {'R':>6}  {'F1':>6}  {'AR-1':>6}  {'tau':>6}"
    print(header)
    print("-" * len(header))
    for qid, s in rows:
        tau = f"{s.tau:6.3f}" if s.tau is not None else "   n/a"
        print(f"{qid:<{width}}  {s.precision:6.3f}  {s.recall:6.3f}  "
              f"{s.f1:6.3f}  {s.ar1:6.3f}  {tau}")
    means = corpus_means(scores)
    print()
    print(json.dumps(means, ensure_ascii=False, sort_keys=True))
    if args.json_out:
        with open(args.json_out, "w", encoding="utf-8") as fh:
            json.dump({
                "per_timeline": {qid: vars(s) for qid, s in rows},
                "means": means,
            }, fh, ensure_ascii=False, indent=2, sort_keys=True, default=str)
    return EXIT_OK


def cmd_heat(args) -> int:
    cfg = _load_cfg(args)
    if args.evaluate:
        def load(path):
            with _open_in(path) as fh:
                return [HeatLabeledTimeline.from_dict(json.loads(line))
                        for _, line in _iter_jsonl(fh)]
        predicted = {h.timeline.query_event_id: h for h in load(args.predicted)}
        gold = {h.timeline.query_event_id: h for h in load(args.gold)}
        shared = sorted(set(predicted) & set(gold))
        if not shared:
            print("no paired heat timelines", file=sys.stderr)
            return EXIT_DATA
        pred_labels = [v for qid in shared for v in predicted[qid].labels]
        gold_labels = [v for qid in shared for v in gold[qid].labels]
        acc, macro_f1, mae = heat_metrics(pred_labels, gold_labels)
        print(json.dumps({"accuracy": acc, "macro_f1": macro_f1, "mae": mae,
                          "events": len(pred_labels), "timelines": len(shared)}))
        return EXIT_OK

    errors = 0
    with _open_in(args.input) as fh, _open_out(args.output) as out:
        for line_no, line in _iter_jsonl(fh):
            try:
                data = json.loads(line)
                tl = Timeline.from_dict(data.get("timeline", data))
                if args.predict_baseline:
                    labels = baseline_predict(tl)
                else:
                    labels = list(label_timeline(tl).labels)
                if cfg.heat_invert:
                    labels = invert_levels(labels)
                hlt = HeatLabeledTimeline(timeline=tl, labels=tuple(labels))
            except (ValueError, KeyError) as exc:
                print(f"line {line_no}: {exc}", file=sys.stderr)
                errors += 1
                continue
            out.write(canonical_json(hlt.to_dict()) + "\n")
    return EXIT_DATA if errors else EXIT_OK


def cmd_serve(args) -> int:
    cfg = _load_cfg(args)
    from .service import TimelineService, serve
    store = EventStore(args.store,
                       embedder=HashingEmbedder(cfg.retrieval_dim, cfg.retrieval_seed),
                       window_days=cfg.window_days)
    service = TimelineService(cfg, store)
    server = serve(service, host=args.host, port=args.port)
    print(f"serving on http://{args.host}:{server.server_address[1]} "
          f"({len(store)} events)")
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        service.shutdown()
        store.close()
    return EXIT_OK


def cmd_render(args) -> int:
    with _open_in(args.input) as fh, _open_out(args.output) as out:
        for _, line in _iter_jsonl(fh):
            data = json.loads(line)
            heat = None
            if "timeline" in data and "labels" in data:
                hlt = HeatLabeledTimeline.from_dict(data)
                tl, heat = hlt.timeline, hlt.labels
            else:
                tl = Timeline.from_dict(data)
            if args.format == "html":
                out.write(render_html(tl, heat))
            else:
                out.write(render_text(tl, heat) + "\n")
    return EXIT_OK


# -- argument wiring ----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="eventline",
                     description="Streaming events, concise summaries, "
                                 "query-driven timelines.")
    parser.add_argument("--config", help="JSON config file "
                        f"(env overrides use the {config_mod.ENV_PREFIX} prefix)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="cluster a document stream into a store")
    p.add_argument("--documents", required=True, help="line-delimited Document JSON")
    p.add_argument("--store", required=True, help="store directory to create/extend")
    p.add_argument("--audit", help="write ClusterAssignment lines here ('-' = stdout)")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("summarize", help="fill summaries on events without one")
    p.add_argument("--events", default="-", help="events-without-summary jsonl")
    p.add_argument("--documents", required=True, help="backing Document jsonl")
    p.add_argument("--output", default="-")
    p.add_argument("--reference", help="optional reference summary for scoring")
    p.add_argument("--n", type=int, default=8, help="candidates per generator")
    p.add_argument("--generator", choices=("truncate", "extractive", "all"),
                   default="all")
    p.add_argument("--l-min", type=int, dest="l_min")
    p.add_argument("--l-max", type=int, dest="l_max")
    p.add_argument("--lambda-short", type=float, dest="lambda_short")
    p.add_argument("--lambda-long", type=float, dest="lambda_long")
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("timeline", help="build a timeline for a stored event")
    p.add_argument("--store", required=True)
    p.add_argument("--query-event-id", required=True)
    p.add_argument("--generator", choices=("oracle", "external"), default="oracle")
    p.set_defaults(func=cmd_timeline)

    p = sub.add_parser("datagen", help="synthesize training samples from gold timelines")
    p.add_argument("--timelines", default="-", help="gold Timeline jsonl")
    p.add_argument("--task", choices=("main", "temporal_ordering", "causal_judgment",
                                      "timeline_completion", "all"), default="all")
    p.add_argument("--seed", type=int)
    p.add_argument("--causal-quota", type=int, default=6, dest="causal_quota")
    p.add_argument("--output", default="-")
    p.set_defaults(func=cmd_datagen)

    p = sub.add_parser("evaluate", help="score predicted timelines against references")
    p.add_argument("--predicted", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--match-mode", choices=("id", "text"), default="id",
                   dest="match_mode")
    p.add_argument("--json-out", dest="json_out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("heat", help="heat labels: derive, predict, or evaluate")
    p.add_argument("--input", default="-", help="Timeline or labeled-timeline jsonl")
    p.add_argument("--output", default="-")
    p.add_argument("--label", action="store_true",
                   help="derive labels from page views (default action)")
    p.add_argument("--predict-baseline", action="store_true", dest="predict_baseline")
    p.add_argument("--evaluate", action="store_true")
    p.add_argument("--predicted", help="labeled-timeline jsonl (with --evaluate)")
    p.add_argument("--gold", help="labeled-timeline jsonl (with --evaluate)")
    p.set_defaults(func=cmd_heat)

    p = sub.add_parser("serve", help="run the HTTP service over a store")
    p.add_argument("--store", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("render", help="render timelines as text or HTML")
    p.add_argument("--input", default="-")
    p.add_argument("--output", default="-")
    p.add_argument("--format", choices=("text", "html"), default="text")
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "heat" and args.evaluate and not (args.predicted and args.gold):
        parser.error("heat --evaluate requires --predicted and --gold")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except BrokenPipeError:
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
