"""Run reports: a JSON document plus aligned text tables, and report comparison."""

from __future__ import annotations

import json
import math
from dataclasses import asdict
from fractions import Fraction
from typing import Any

from .dstt import ResidenceStats
from .traffic import Cbr, DelayStats, Direction, Exponential, Fate

REPORT_VERSION = 1


def _aggregate_delays(net, flow: str, warmup: int) -> DelayStats:
    return DelayStats.of(
        r.delay
        for r in net.lineage.records.values()
        if r.flow == flow and r.fate is Fate.DELIVERED and r.sent_time >= warmup
    )


def _wired_contribution(net, spec) -> int:
    """Modeled delay on the TSN-side hops a downlink data frame crosses outside NW-TT..DS-TT."""
    frame_len = 18 + 28 + spec.payload_bytes  # tagged Ethernet header + IPv4/UDP
    hops = (net.link_a_sw, net.link_sw_nwtt, net.link_dstt_b[0])
    return sum(h.propagation_ns + h.serialization(frame_len) for h in hops)


def build_report(net) -> dict[str, Any]:
    cfg = net.cfg
    if net.result is None:
        raise RuntimeError("run the network before building a report")
    metrics = net.flow_metrics()
    residence = net.residence_stats()
    all_res = ResidenceStats.of(r.residence for d in net.dstt for r in d.residence_log)
    checked, mismatched = net.correction_equality()

    specs = {f.spec.name: f.spec for f in net.flows}
    totals = {}
    for name, spec in specs.items():
        mine = [m for m in metrics if m.flow == name]
        totals[name] = {
            "direction": spec.direction.value,
            "pcp": spec.pcp,
            "sent": sum(m.sent for m in mine),
            "delivered": sum(m.delivered for m in mine),
            "radio_attach_loss": sum(m.radio_attach_loss for m in mine),
            "dropped": sum(m.dropped for m in mine),
            "delay_after_warmup": _aggregate_delays(net, name, cfg.warmup_ns).as_dict(),
        }

    arrival_checks = []
    for m in metrics:
        spec = specs[m.flow]
        if isinstance(spec.arrival, Exponential):
            expected = spec.expected_count()
            sigma = math.sqrt(expected)
            arrival_checks.append(
                {
                    "flow": m.flow,
                    "endpoint": m.endpoint,
                    "delivered": m.delivered,
                    "expected": round(expected, 3),
                    "three_sigma": round(3 * sigma, 3),
                    "outlier": abs(m.delivered - expected) > 3 * sigma,
                }
            )

    consistency = None
    hp = [s for s in specs.values() if s.direction is Direction.DOWNLINK and isinstance(s.arrival, Cbr)]
    if hp and not all_res.is_empty:
        spec = max(hp, key=lambda s: s.pcp)
        delay = _aggregate_delays(net, spec.name, cfg.warmup_ns)
        if not delay.empty:
            wired = _wired_contribution(net, spec)
            gap = delay.mean_ns - wired - all_res.mean
            consistency = {
                "flow": spec.name,
                "mean_end_to_end_ns": round(delay.mean_ns),
                "modeled_wired_ns": wired,
                "mean_residence_ns": all_res.mean_ns,
                "unexplained_ns": round(gap),
                "within_1us": abs(gap) < 1000,
            }

    dl, ul = net.dl.scheduler, net.ul.scheduler
    return {
        "version": REPORT_VERSION,
        "scenario": cfg.name,
        "seed": cfg.seed,
        "config": cfg.echo(),
        "run": {
            "final_time_ns": net.result.main.final_time,
            "drain_end_ns": net.result.drain.final_time,
            "events": net.result.main.event_count + net.result.drain.event_count,
        },
        "bmca": net.bmca.as_dict(),
        "flows": [m.as_dict() for m in metrics],
        "flow_totals": totals,
        "arrival_checks": arrival_checks,
        "residence": {
            "per_endpoint": [s.as_dict() for s in residence],
            "all": all_res.as_dict(),
        },
        "gptp": {
            "forwarded_per_endpoint": [d.counters.gptp_forwarded for d in net.dstt],
            "forwarded_total": sum(d.counters.gptp_forwarded for d in net.dstt),
            "pairs_per_endpoint": [len(s.samples) for s in net.slaves],
            "orphans": sum(s.orphans for s in net.slaves),
            "corrections_checked": checked,
            "corrections_mismatched": mismatched,
            "implied_residual_ns": _residuals(net),
        },
        "af": net.af.report(),
        "components": {
            "nwtt": asdict(net.nwtt.counters),
            "upf": {"tunnelled": net.upf.tunnelled, "classified_drops": net.upf.classified_drops},
            "dstt": [asdict(d.counters) for d in net.dstt],
            "drops": dict(net.component_drops),
            "dropped_total": sum(net.component_drops.values()) + sum(m.dropped for m in metrics),
            "radio_attach_loss": {str(k): v for k, v in sorted(net.attach.losses.items())},
        },
        "mac": {
            "downlink": {"slots": dl.slots_run, **asdict(dl.harq)},
            "uplink": {"slots": ul.slots_run, **asdict(ul.harq)},
        },
        "consistency": consistency,
    }


def _residuals(net) -> dict:
    vals = [s.implied_path_delay for slave in net.slaves for s in slave.samples]
    if not vals:
        return {"count": 0, "empty": True}
    return {
        "count": len(vals),
        "min_ns": float(min(vals)),
        "max_ns": float(max(vals)),
        "mean_ns": float(sum(vals, Fraction(0)) / len(vals)),
    }


def to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


# -- text tables -------------------------------------------------------------


def _table(headers: list[str], rows: list[list[Any]]) -> str:
    cells = [headers] + [["-" if c is None else str(c) for c in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    fmt = lambda r: "  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))  # noqa: E731
    return "\n".join([fmt(cells[0]), "  ".join("-" * w for w in widths), *(fmt(r) for r in cells[1:])])


def _ms(ns: int | None) -> str | None:
    return None if ns is None else f"{ns / 1e6:.3f}"


def _us(ns: int | float | None) -> str | None:
    return None if ns is None else f"{ns / 1e3:.3f}"


def format_text(report: dict) -> str:
    n = len(report["residence"]["per_endpoint"])
    eps = [f"EP{i}" for i in range(n)]
    out = [f"Scenario {report['scenario']} (seed {report['seed']})", ""]

    rows = []
    by_key = {(f["flow"], f["endpoint"]): f for f in report["flows"]}
    for name, tot in report["flow_totals"].items():
        per = [by_key.get((name, i)) for i in range(n)]
        rows.append([f"{name} sent", *[p and p["sent"] for p in per], tot["sent"]])
        rows.append([f"{name} delivered", *[p and p["delivered"] for p in per], tot["delivered"]])
    gptp = report["gptp"]
    rows.append(["gPTP forwarded", *gptp["forwarded_per_endpoint"], gptp["forwarded_total"]])
    attach = [sum(f["radio_attach_loss"] for f in report["flows"] if f["endpoint"] == i) for i in range(n)]
    rows.append(["Radio attach loss", *attach, sum(attach)])
    dropped = [sum(f["dropped"] for f in report["flows"] if f["endpoint"] == i) for i in range(n)]
    rows.append(["Packets dropped", *dropped, report["components"]["dropped_total"]])
    out += ["Packet delivery", _table(["Metric", *eps, "Total"], rows), ""]

    rows = []
    for name, tot in report["flow_totals"].items():
        d = tot["delay_after_warmup"]
        rows.append([f"{name} (PCP {tot['pcp']})", _ms(d.get("mean_ns")), _ms(d.get("p99_ns")), _ms(d.get("max_ns"))])
    out += ["End-to-end delay after warmup (ms)", _table(["Traffic class", "Mean", "P99", "Max"], rows), ""]

    rows = []
    labels = eps + ["All"]
    for label, r in zip(labels, [*report["residence"]["per_endpoint"], report["residence"]["all"]]):
        if r.get("empty"):
            rows.append([label, None, None, None, None, None])
        else:
            rows.append([label, _us(r["min_ns"]), _us(r["max_ns"]), _us(r["mean_ns"]), _us(r["spread_ns"]),
                         _us(r["stddev_ns"])])
    out += ["5GS residence time (us)", _table(["Endpoint", "Min", "Max", "Avg", "Spread", "Stddev"], rows), ""]

    af = report["af"]
    out.append(f"TSN AF ({af['mode']}): {af['violation_count']} violation(s)")
    for v in af["violations"][:5]:
        out.append(f"  {v['stream_id']} endpoint {v['endpoint']} at {v['time_ns']} ns: "
                   f"{v['measured_ns']} ns > {v['bound_ns']} ns")
    bmca = report["bmca"]
    status = "ok" if bmca["ok"] else f"{len(bmca['errors'])} error(s)"
    out.append(f"Clock hierarchy: {status}; transparent clocks {', '.join(bmca['registered_transparent_clocks']) or '-'}")
    for e in bmca["errors"]:
        out.append(f"  {e['code']}: {e['message']}")
    for c in report["arrival_checks"]:
        if c["outlier"]:
            out.append(f"Arrival outlier: {c['flow']} EP{c['endpoint']} delivered {c['delivered']}, "
                       f"expected {c['expected']} +/- {c['three_sigma']}")
    cons = report["consistency"]
    if cons:
        out.append(f"Wired {cons['modeled_wired_ns']} ns + residence {cons['mean_residence_ns']} ns vs "
                   f"end-to-end {cons['mean_end_to_end_ns']} ns ({cons['unexplained_ns']} ns unexplained)")
    return "\n".join(out) + "\n"


# -- comparison --------------------------------------------------------------


def _delta(a, b):
    if a is None or b is None:
        return None
    return b - a


def compare(report_a: dict, report_b: dict) -> dict:
    """Deltas are ``b - a`` for every metric both reports carry."""
    warnings = []
    flows_a = {(f["flow"], f["endpoint"]): f for f in report_a["flows"]}
    flows_b = {(f["flow"], f["endpoint"]): f for f in report_b["flows"]}
    for key in sorted(set(flows_a) ^ set(flows_b)):
        side = "first" if key in flows_a else "second"
        warnings.append(f"flow {key[0]} endpoint {key[1]} only in the {side} report")
    per_flow = []
    for key in sorted(set(flows_a) & set(flows_b)):
        fa, fb = flows_a[key], flows_b[key]
        da, db = fa["delay_after_warmup"], fb["delay_after_warmup"]
        per_flow.append(
            {
                "flow": key[0],
                "endpoint": key[1],
                "delivered_delta": fb["delivered"] - fa["delivered"],
                "mean_ns_delta": _delta(da.get("mean_ns"), db.get("mean_ns")),
                "p99_ns_delta": _delta(da.get("p99_ns"), db.get("p99_ns")),
                "max_ns_delta": _delta(da.get("max_ns"), db.get("max_ns")),
            }
        )
    totals = []
    for name in sorted(set(report_a["flow_totals"]) & set(report_b["flow_totals"])):
        ma = report_a["flow_totals"][name]["delay_after_warmup"].get("mean_ns")
        mb = report_b["flow_totals"][name]["delay_after_warmup"].get("mean_ns")
        totals.append({"flow": name, "mean_ns_a": ma, "mean_ns_b": mb, "mean_ns_delta": _delta(ma, mb)})
    ra, rb = report_a["residence"]["all"], report_b["residence"]["all"]
    spread_a, spread_b = ra.get("spread_ns"), rb.get("spread_ns")
    ratio = None
    if spread_a is not None and spread_b is not None:
        ratio = None if spread_a == 0 else round(spread_b / spread_a, 3)
    return {
        "a": report_a["scenario"],
        "b": report_b["scenario"],
        "warnings": warnings,
        "flows": per_flow,
        "flow_means": totals,
        "residence": {
            "mean_ns_delta": _delta(ra.get("mean_ns"), rb.get("mean_ns")),
            "spread_ns_a": spread_a,
            "spread_ns_b": spread_b,
            "spread_ratio": ratio,
        },
        "dropped_delta": report_b["components"]["dropped_total"] - report_a["components"]["dropped_total"],
    }


def format_compare(cmp: dict) -> str:
    out = [f"{cmp['a']} -> {cmp['b']}", ""]
    rows = [[t["flow"], _ms(t["mean_ns_a"]), _ms(t["mean_ns_b"]), _us(t["mean_ns_delta"])] for t in cmp["flow_means"]]
    out += [_table(["Flow", "Mean A (ms)", "Mean B (ms)", "Delta (us)"], rows), ""]
    rows = [
        [f"{f['flow']} EP{f['endpoint']}", f["delivered_delta"], _us(f["mean_ns_delta"]), _us(f["p99_ns_delta"]),
         _us(f["max_ns_delta"])]
        for f in cmp["flows"]
    ]
    out += [_table(["Flow", "Delivered", "Mean (us)", "P99 (us)", "Max (us)"], rows), ""]
    r = cmp["residence"]
    out.append(f"Residence spread {r['spread_ns_a']} ns -> {r['spread_ns_b']} ns (ratio {r['spread_ratio']})")
    out.append(f"Dropped delta {cmp['dropped_delta']}")
    out += [f"warning: {w}" for w in cmp["warnings"]]
    return "\n".join(out) + "\n"
