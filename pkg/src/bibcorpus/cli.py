"""Command line entry point wiring all pipeline stages."""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import analytics, pipeline, simserver
from .align import AuditConfig
from .citegraph import FixtureLookup, HttpLookup, external_citation_share
from .errors import BibcorpusError
from .harvest import DomainLimiter, FixtureExtractor, GrobidExtractor, harvest_store
from .store import KINDS, Store

logger = logging.getLogger(__name__)


def _pct(value: float) -> str:
    return f"{value * 100:.2f}%"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bibcorpus")
    parser.add_argument("--config", help="TOML config file; explicit flags win")
    parser.add_argument("--log-level", default="warning")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--store", required=True)
        return p

    p = add("ingest", help="parse an XML release into a new or existing store")
    p.add_argument("--dump", required=True)
    p.add_argument("--dtd")
    p.add_argument("--chunk-size", type=int)
    p.add_argument("--workers", type=int, default=1)

    p = add("diff", help="diff a new release against the store and apply it")
    p.add_argument("--dump", required=True)
    p.add_argument("--dtd")
    p.add_argument("--no-apply", action="store_true")

    p = add("harvest", help="download full texts and extract metadata")
    p.add_argument("--chunk-size", type=int, default=100)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--extractor", choices=("fixture", "external"), default="fixture")
    p.add_argument("--extractor-endpoint")
    p.add_argument("--sidecar", help="recorded metadata for the fixture extractor")
    p.add_argument("--schedule", help="simulated-server schedule; omits real HTTP")
    p.add_argument("--domain-limit", type=int, default=2)

    p = add("align", help="attach extracted metadata to catalog entities")
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--workers", type=int, default=1)

    p = add("audit", help="bootstrap/permutation audit of name matching")
    p.add_argument("--mode", choices=("uniform", "adversarial"), default="uniform")
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--gold", required=True, help="JSON gold labels: id -> author ids")

    p = add("citegraph", help="build or inspect the citation graph")
    p.add_argument("action", choices=("build", "stats", "external"))
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--lookup", help="fixture:<path> or http:<endpoint>")
    p.add_argument("--sample-size", type=int)
    p.add_argument("--seed", type=int, default=0)

    p = add("report", help="corpus analyses as tabular data")
    p.add_argument("question", choices=[f"q{i}" for i in range(1, 9)])
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--venue")
    p.add_argument("--year-a", type=int)
    p.add_argument("--year-b", type=int)
    p.add_argument("--ref-year", type=int)
    p.add_argument("--growth-mean", choices=("geometric", "arithmetic"),
                   default="geometric")
    p.add_argument("--include-final-year", action="store_true",
                   help="keep the last (possibly partial) year in trend fits")
    p.add_argument("--top-k", type=int, default=30)

    p = add("export", help="write one kind as a concatenated JSONL file")
    p.add_argument("--kind", required=True, choices=KINDS)
    p.add_argument("--out", required=True)
    p.add_argument("--gzip", action="store_true")

    add("compact", help="drop tombstones and rewrite chunks")

    p = sub.add_parser("simserve", help="run the scripted test server over HTTP")
    p.add_argument("--schedule", required=True)
    p.add_argument("--port", type=int, default=0)

    return parser


def _apply_config(args, argv):
    if not args.config:
        return args
    with open(args.config, "rb") as fh:
        config = tomllib.load(fh)
    for key, value in config.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            continue
        if f"--{key.replace('_', '-')}" in argv:
            continue  # explicit flag wins
        setattr(args, attr, value)
    return args


# --- report rendering -----------------------------------------------------


def _emit_csv(out, header, rows):
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)


def _report_q1(store, args, out):
    pubs = list(store.scan("publications"))
    counts = analytics.counts_by_type(pubs)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1][0], kv[0].value))
    total = sum(c for c, _ in counts.values())
    if args.format == "csv":
        rows = [(t.value, c, _pct(share)) for t, (c, share) in ranked]
        rows.append(("total", total, _pct(1.0) if total else _pct(0.0)))
        _emit_csv(out, ("type", "count", "proportion"), rows)
    else:
        series = analytics.yearly_series(pubs, "publications")
        json.dump({
            "types": [{"type": t.value, "count": c, "proportion": share}
                      for t, (c, share) in ranked],
            "total": total,
            "avg_growth_rate": analytics.avg_growth_rate(series, args.growth_mean),
        }, out, indent=1)
        out.write("\n")


def _trend_series(series, args):
    if args.include_final_year or not series.points:
        return series
    return series.without_year(series.points[-1][0])


def _report_q2(store, args, out):
    pubs = list(store.scan("publications"))
    pub_series = analytics.yearly_series(pubs, "publications")
    author_series = analytics.yearly_series(pubs, "distinct_authors")
    avg_series = analytics.avg_authors_per_paper(pubs)
    if args.format == "csv":
        authors_by_year = dict(author_series.points)
        avg_by_year = dict(avg_series.points)
        rows = [
            (y, int(v), int(authors_by_year.get(y, 0)), f"{avg_by_year.get(y, 0.0):.6f}")
            for y, v in pub_series.points
        ]
        _emit_csv(out, ("year", "publications", "authors", "avg_authors_per_paper"), rows)
    else:
        payload = {
            "publications": pub_series.points,
            "authors": author_series.points,
            "avg_authors_per_paper": avg_series.points,
        }
        fit_input = _trend_series(avg_series, args)
        if len(fit_input.points) >= 4:
            fit = analytics.cubic_fit(fit_input)
            payload["cubic_fit"] = {"coefficients": list(fit.coefficients),
                                    "rmse": fit.rmse, "year_center": fit.year_center}
        json.dump(payload, out, indent=1)
        out.write("\n")


def _report_q3(store, args, out):
    bins = analytics.author_paper_bins(store.scan("publications"))
    if args.format == "csv":
        _emit_csv(out, ("papers", "authors"), bins)
    else:
        json.dump({"bins": [{"papers": b, "authors": c} for b, c in bins]}, out, indent=1)
        out.write("\n")


def _latest_year(pubs):
    years = [rec["year"] for rec in pubs if rec.get("year") is not None]
    return max(years) if years else None


def _report_q4(store, args, out):
    pubs = list(store.scan("publications"))
    ref_year = args.ref_year or _latest_year(pubs)
    if ref_year is None:
        raise BibcorpusError("no publication years in store")
    matrix = analytics.activity_matrix(pubs, ref_year)
    rows = [(x, y, f"{matrix[(x, y)]:.6f}")
            for y in analytics.ACTIVITY_GRID for x in analytics.ACTIVITY_GRID]
    if args.format == "csv":
        _emit_csv(out, ("min_papers", "window_years", "fraction"), rows)
    else:
        json.dump({"reference_year": ref_year,
                   "grid": [{"min_papers": x, "window_years": y, "fraction": matrix[(x, y)]}
                            for y in analytics.ACTIVITY_GRID for x in analytics.ACTIVITY_GRID]},
                  out, indent=1)
        out.write("\n")


def _report_q5(store, args, out):
    pubs = list(store.scan("publications"))
    titles = analytics.term_frequencies(pubs, "title", top_k=args.top_k,
                                        venue=args.venue)
    abstracts = analytics.term_frequencies(pubs, "abstract", top_k=args.top_k,
                                           venue=args.venue)
    rows = [("title", t, c) for t, c in titles.entries]
    rows += [("abstract", t, c) for t, c in abstracts.entries]
    if args.format == "csv":
        _emit_csv(out, ("field", "term", "count"), rows)
    else:
        json.dump({"titles": titles.entries, "abstracts": abstracts.entries},
                  out, indent=1)
        out.write("\n")


def _report_q6(store, args, out):
    pubs = list(store.scan("publications"))
    year_b = args.year_b or _latest_year(pubs)
    year_a = args.year_a or (year_b - 4 if year_b else None)
    if year_a is None or year_b is None:
        raise BibcorpusError("q6 needs --year-a and --year-b (or dated publications)")
    rows = analytics.term_shift(pubs, args.venue, "abstract", year_a, year_b,
                                top_k=args.top_k)
    if args.format == "csv":
        _emit_csv(out, ("term", "count_a", "count_b"), rows)
    else:
        json.dump({"year_a": year_a, "year_b": year_b,
                   "terms": [{"term": t, "count_a": a, "count_b": b}
                             for t, a, b in rows]}, out, indent=1)
        out.write("\n")


def _report_q7(store, args, out):
    from .citegraph import citation_stats

    graph = pipeline.load_citation_graph(store)
    stats = citation_stats(graph, store.ids("publications"))
    if args.format == "csv":
        rows = [
            ("mean_in", f"{stats.mean_in:.6f}"),
            ("mean_out", f"{stats.mean_out:.6f}"),
            ("median_in", f"{stats.median_in:.6f}"),
            ("median_out", f"{stats.median_out:.6f}"),
            ("zero_in_count", stats.zero_in_count),
            ("zero_in_share", f"{stats.zero_in_share:.6f}"),
            ("one_in_count", stats.one_in_count),
            ("one_in_share", f"{stats.one_in_share:.6f}"),
        ]
        rows += [(f"hist_in_{b}", c) for b, c in stats.histogram_in]
        rows += [(f"hist_out_{b}", c) for b, c in stats.histogram_out]
        _emit_csv(out, ("metric", "value"), rows)
    else:
        json.dump(stats.to_dict(), out, indent=1)
        out.write("\n")


def _report_q8(store, args, out):
    graph = pipeline.load_citation_graph(store)
    pubs = list(store.scan("publications"))
    incoming, outgoing = analytics.citation_trend(pubs, graph)
    if args.format == "csv":
        out_by_year = dict(outgoing.points)
        rows = [(y, f"{v:.6f}", f"{out_by_year.get(y, 0.0):.6f}")
                for y, v in incoming.points]
        _emit_csv(out, ("year", "mean_incoming", "mean_outgoing"), rows)
    else:
        payload = {"incoming": incoming.points, "outgoing": outgoing.points}
        for name, series in (("incoming_fit", incoming), ("outgoing_fit", outgoing)):
            trimmed = _trend_series(series, args)
            if len(trimmed.points) >= 4:
                fit = analytics.cubic_fit(trimmed)
                payload[name] = {"coefficients": list(fit.coefficients),
                                 "rmse": fit.rmse, "year_center": fit.year_center}
        json.dump(payload, out, indent=1)
        out.write("\n")


_REPORTS = {
    "q1": _report_q1, "q2": _report_q2, "q3": _report_q3, "q4": _report_q4,
    "q5": _report_q5, "q6": _report_q6, "q7": _report_q7, "q8": _report_q8,
}


# --- command handlers -----------------------------------------------------


def _cmd_ingest(args, out):
    store = Store(args.store, create=True)
    summary = pipeline.ingest_dump(args.dump, store, dtd_path=args.dtd,
                                   chunk_size=args.chunk_size, workers=args.workers)
    json.dump(summary, out)
    out.write("\n")


def _cmd_diff(args, out):
    store = Store(args.store)
    summary = pipeline.diff_dump(args.dump, store, dtd_path=args.dtd,
                                 apply=not args.no_apply)
    json.dump(summary, out)
    out.write("\n")


def _cmd_harvest(args, out):
    store = Store(args.store)
    if args.extractor == "fixture":
        if not args.sidecar:
            raise BibcorpusError("--extractor fixture requires --sidecar")
        extractor = FixtureExtractor(args.sidecar)
    else:
        if not args.extractor_endpoint:
            raise BibcorpusError("--extractor external requires --extractor-endpoint")
        extractor = GrobidExtractor(args.extractor_endpoint)
    transport = None
    if args.schedule:
        transport = simserver.SimulatedTransport(simserver.load_schedule(args.schedule))
    limiter = DomainLimiter(max_concurrent=args.domain_limit)
    report = harvest_store(store, chunk_size=args.chunk_size, workers=args.workers,
                           extractor=extractor, transport=transport, limiter=limiter)
    json.dump({"fetched": report.fetched, "extracted": report.extracted,
               "rejected": report.rejected, "unreachable": report.unreachable},
              out)
    out.write("\n")


def _cmd_align(args, out):
    store = Store(args.store)
    summary = pipeline.align_store(store, threshold=args.threshold, workers=args.workers)
    json.dump(summary, out)
    out.write("\n")


def _cmd_audit(args, out):
    store = Store(args.store)
    with open(args.gold, encoding="utf-8") as fh:
        gold = json.load(fh)
    config = AuditConfig(sample_count=args.samples, sample_size=args.n,
                         seed=args.seed, mode=args.mode, threshold=args.threshold)
    report = pipeline.audit_store(store, config, gold)
    json.dump(report, out, sort_keys=True)
    out.write("\n")


def _make_lookup(spec: str):
    if spec.startswith("fixture:"):
        return FixtureLookup(spec.split(":", 1)[1])
    if spec.startswith("http:"):
        return HttpLookup(spec.split(":", 1)[1])
    raise BibcorpusError(f"unknown lookup spec {spec!r}")


def _cmd_citegraph(args, out):
    store = Store(args.store)
    if args.action == "build":
        graph = pipeline.build_citation_graph(store, threshold=args.threshold)
        json.dump({"publications": len(store.ids("publications")),
                   "edges": sum(len(v) for v in graph.outgoing.values())}, out)
        out.write("\n")
    elif args.action == "stats":
        _report_q7(store, args, out)
    else:  # external
        if not args.lookup:
            raise BibcorpusError("citegraph external requires --lookup")
        graph = pipeline.load_citation_graph(store)
        ids = store.ids("publications")
        if args.sample_size and args.sample_size < len(ids):
            import random

            ids = sorted(random.Random(args.seed).sample(ids, args.sample_size))
        report = external_citation_share(ids, graph, _make_lookup(args.lookup))
        json.dump({"share": report.share, "sampled": report.sampled,
                   "skipped": report.skipped}, out, sort_keys=True)
        out.write("\n")


def _cmd_report(args, out):
    store = Store(args.store)
    _REPORTS[args.question](store, args, out)


def _cmd_export(args, out):
    store = Store(args.store)
    n = store.export(args.kind, args.out, compress=args.gzip)
    json.dump({"kind": args.kind, "records": n, "out": args.out}, out)
    out.write("\n")


def _cmd_compact(args, out):
    store = Store(args.store)
    store.compact()
    json.dump({"compacted": True}, out)
    out.write("\n")


def _cmd_simserve(args, out):
    schedule = simserver.load_schedule(args.schedule)
    server = simserver.SimulatedServer(schedule, port=args.port)
    print(server.base_url, file=out, flush=True)
    server.serve_forever()


_COMMANDS = {
    "ingest": _cmd_ingest, "diff": _cmd_diff, "harvest": _cmd_harvest,
    "align": _cmd_align, "audit": _cmd_audit, "citegraph": _cmd_citegraph,
    "report": _cmd_report, "export": _cmd_export, "compact": _cmd_compact,
    "simserve": _cmd_simserve,
}


def run(argv, out=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args = _apply_config(args, argv)
    logging.basicConfig(level=getattr(logging, args.log_level.upper(), logging.WARNING))
    out = out or sys.stdout
    try:
        _COMMANDS[args.command](args, out)
    except BibcorpusError as exc:
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}),
              file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run(sys.argv[1:]))
