"""End-to-end acceptance checks, one test per criterion.

Each test records a PASS/FAIL line; the lines are printed together in the
pytest terminal summary.
"""

import random
import statistics
from dataclasses import replace

import pytest

from conftest import ACCEPTANCE_LINES
from tsnbridge.cli import simulate
from tsnbridge.config import BUNDLED, load_config
from tsnbridge.frames import (
    ETH_P_GPTP,
    GPTP_MCAST_MAC,
    CoreDatagram,
    EthernetFrame,
    FrameError,
    GptpMessage,
    GtpuHeader,
    MessageType,
    Protocol,
    VlanTag,
    decode_datagram,
    decode_frame,
    decode_gptp,
    decode_gtpu,
    encode_datagram,
    encode_frame,
    encode_gptp,
    encode_gtpu,
    unwrap_residence,
    wrap_residence,
)
from tsnbridge.gptp import ClockNode, ClockRole, validate_hierarchy
from tsnbridge.report import to_json
from tsnbridge.simkernel import Kernel, RngStream, draw_exponential
from tsnbridge.topology import Network


def verdict(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"CRITERION {number}: {'PASS' if ok else 'FAIL'} {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def flow_rows(report, name):
    return [f for f in report["flows"] if f["flow"] == name]


def test_criterion_01_zero_bridge_drops(run_scenario):
    net, report = run_scenario("ideal_3ep")
    comp = report["components"]
    counters = [
        comp["dropped_total"],
        comp["upf"]["classified_drops"],
        comp["nwtt"]["dropped_malformed"],
        comp["nwtt"]["routing_errors"],
        *(d["dropped_malformed"] for d in comp["dstt"]),
        *(f["dropped"] for f in report["flows"]),
    ]
    verdict(1, "zero bridge drops", all(c == 0 for c in counters), f"drop counters {sorted(set(counters))}")


def test_criterion_02_reverse_delivery(run_scenario):
    _, report = run_scenario("ideal_3ep")
    per = [f["delivered"] for f in flow_rows(report, "reverse")]
    verdict(2, "reverse delivery 800 per endpoint", per == [800, 800, 800] and sum(per) == 2400,
            f"per endpoint {per}, total {sum(per)}")


def test_criterion_03_gptp_counts(run_scenario):
    _, report = run_scenario("ideal_3ep")
    g = report["gptp"]
    ok = g["forwarded_per_endpoint"] == [158, 158, 158] and g["forwarded_total"] == 474
    verdict(3, "gPTP forwarded 158 per endpoint", ok, f"{g['forwarded_per_endpoint']}, total {g['forwarded_total']}")


def test_criterion_04_high_prio_delivery(run_scenario):
    _, report = run_scenario("ideal_3ep")
    rows = flow_rows(report, "high_prio")
    per = [f["delivered"] for f in rows]
    ok = all(9_990 <= d <= 9_995 for d in per) and all(f["sent"] == 10_000 for f in rows)
    verdict(4, "high-prio delivery in [9990, 9995]", ok, f"delivered {per} of 10000")


def test_criterion_05_best_effort_delivery(run_scenario):
    _, report = run_scenario("ideal_3ep")
    checks = [c for c in report["arrival_checks"] if c["flow"] == "best_effort"]
    per = [c["delivered"] for c in checks]
    ok = len(checks) == 3 and all(c["expected"] == 5000 and not c["outlier"] for c in checks)
    ok = ok and all(abs(d - 5000) <= 3 * 5000**0.5 for d in per)
    verdict(5, "best-effort within 3 sigma of 5000", ok, f"delivered {per}, bound +/-{3 * 5000**0.5:.0f}")


def test_criterion_06_ideal_residence_clustering(run_scenario):
    _, report = run_scenario("ideal_3ep")
    res = report["residence"]["all"]
    g = report["gptp"]
    ok = (
        res["count"] == 474
        and res["spread_ns"] < 1_000
        and 2_400_000 <= res["mean_ns"] <= 2_600_000
        and g["corrections_checked"] == 474
        and g["corrections_mismatched"] == 0
    )
    verdict(6, "ideal residence spread < 1 us, mean in [2.40, 2.60] ms", ok,
            f"spread {res['spread_ns']} ns, mean {res['mean_ns']} ns, "
            f"{g['corrections_checked'] - g['corrections_mismatched']}/{g['corrections_checked']} corrections exact")


def test_criterion_07_fading_residence(run_scenario):
    _, ideal = run_scenario("ideal_3ep")
    _, fading = run_scenario("fading_3ep")
    ideal_spread = ideal["residence"]["all"]["spread_ns"]
    spread = fading["residence"]["all"]["spread_ns"]
    rows = flow_rows(fading, "high_prio")
    ratio = min(f["delivered"] / f["sent"] for f in rows)
    ok = spread >= 10_000 and spread >= 50 * ideal_spread and ratio >= 0.995
    verdict(7, "fading spread >= 10 us and >= 50x ideal, high-prio >= 99.5%", ok,
            f"spread {spread} ns vs ideal {ideal_spread} ns, worst delivery {ratio:.4%}")


def test_criterion_08_qos_differentiation(run_scenario):
    _, base = run_scenario("ideal_3ep")
    _, busy = run_scenario("contention_3ep")

    def means(report):
        t = report["flow_totals"]
        return t["high_prio"]["delay_after_warmup"]["mean_ns"], t["best_effort"]["delay_after_warmup"]["mean_ns"]

    hp, be = means(base)
    hp_c, be_c = means(busy)
    ok = hp < be and be_c - hp_c >= 500_000
    verdict(8, "DRB 1 faster than DRB 0, contention gap >= 0.5 ms", ok,
            f"default load {hp} vs {be} ns, contention gap {be_c - hp_c} ns")


def test_criterion_09_scaling(run_scenario):
    _, one = run_scenario("ideal_1ep")
    _, three = run_scenario("ideal_3ep")
    m1 = one["flow_totals"]["high_prio"]["delay_after_warmup"]["mean_ns"]
    m3 = three["flow_totals"]["high_prio"]["delay_after_warmup"]["mean_ns"]
    drops = one["components"]["dropped_total"] + three["components"]["dropped_total"]
    ok = abs(m3 - m1) < 200_000 and drops == 0
    verdict(9, "1 vs 3 endpoints high-prio mean within 0.2 ms", ok, f"{m1} ns vs {m3} ns, drops {drops}")


def test_criterion_10_bmca_validation():
    h = load_config("ideal_3ep").clock_hierarchy()
    base = validate_hierarchy(h)

    def with_role(name, role):
        return replace(h, nodes=tuple(ClockNode(n.name, role) if n.name == name else n for n in h.nodes))

    mutations = {
        "duplicate-grandmaster": with_role("switch", ClockRole.GRANDMASTER),
        "missing-role": with_role("device_b0", None),
        "unreachable": replace(h, edges=tuple(e for e in h.edges if e[1] != "device_b2")),
    }
    got = {code: [e.code for e in validate_hierarchy(m).errors] for code, m in mutations.items()}
    ok = (
        len(h.nodes) == 6
        and base.ok
        and base.registered_transparent_clocks == ("5gs",)
        and all(v == [k] for k, v in got.items())
    )
    verdict(10, "six-node hierarchy valid, each mutation yields its error", ok,
            f"{len(base.errors)} errors on the base hierarchy, mutations {got}")


def _random_cases(rnd: random.Random):
    def blob(n):
        return rnd.randbytes(rnd.randrange(n))

    yield "ethernet", lambda: EthernetFrame(
        rnd.randbytes(6), rnd.randbytes(6), rnd.choice([0x0800, 0x88F7, rnd.randrange(0x8101, 0x10000)]), blob(300),
        rnd.choice([None, VlanTag(rnd.randrange(8), rnd.randrange(2), rnd.randrange(4096))]),
    ), encode_frame, decode_frame
    yield "gptp", lambda: GptpMessage(
        rnd.choice(list(MessageType)), rnd.randrange(2**16), rnd.randrange(-(2**63), 2**63), rnd.randrange(2**64),
        rnd.randrange(256),
    ), encode_gptp, decode_gptp
    yield "datagram", lambda: CoreDatagram(
        rnd.randrange(2**32), rnd.randrange(2**32), rnd.randrange(64), Protocol.UDP, rnd.randrange(2**16),
        rnd.randrange(2**16), blob(600),
    ), encode_datagram, decode_datagram
    yield "gtpu", lambda: (GtpuHeader(rnd.randrange(2**32), rnd.randrange(64), rnd.randrange(2)), blob(600)), \
        lambda c: encode_gtpu(*c), decode_gtpu

    def residence_case():
        frame = encode_frame(EthernetFrame(GPTP_MCAST_MAC, rnd.randbytes(6), ETH_P_GPTP,
                                           encode_gptp(GptpMessage(MessageType.SYNC, rnd.randrange(2**16)))))
        return rnd.randrange(2**64), rnd.randrange(2**16), frame

    yield "residence", residence_case, lambda c: wrap_residence(c[2], c[0], c[1]), \
        lambda raw: (lambda h, inner: (h.ingress_timestamp, h.origin_port_id, inner))(*unwrap_residence(raw))


def test_criterion_11_codec_properties():
    rnd = random.Random(2024)
    failures = []
    counts = {}
    for name, make, encode, decode in _random_cases(rnd):
        n = 0
        for i in range(10_000):
            case = make()
            raw = encode(case)
            if decode(raw) != case:
                failures.append(f"{name} roundtrip #{i}")
            n += 1
            if i % 50 == 0:
                for cut in range(len(raw)):
                    try:
                        decode(raw[:cut])
                    except FrameError:
                        pass
                    except Exception as exc:  # anything else is a parser bug
                        failures.append(f"{name} prefix {cut}: {type(exc).__name__}")
        counts[name] = n
    ok = not failures and all(v >= 10_000 for v in counts.values())
    verdict(11, "codec roundtrip and truncation safety", ok, f"cases {counts}, failures {failures[:3]}")


@pytest.mark.parametrize("name", BUNDLED)
def test_criterion_12_determinism(run_scenario, name):
    first = to_json(run_scenario(name)[1])
    second = to_json(simulate(load_config(name))[1])
    verdict(12, f"byte-identical reports for {name}", first == second, f"{len(first)} bytes")


def test_criterion_13_kernel_and_scheduler_oracles():
    rnd = random.Random(99)
    order_ok = True
    for _ in range(1_000):
        k = Kernel()
        fired = []
        times = [rnd.randrange(100) for _ in range(rnd.randrange(1, 60))]
        for i, t in enumerate(times):
            k.schedule(t, fired.append, i)
        k.run_until(200)
        order_ok &= fired == sorted(range(len(times)), key=lambda i: (times[i], i))

    net = Network(load_config("fading_3ep"))
    slots = {"checked": 0, "conservation_failures": 0}
    fifo = {"enqueued": {}, "delivered": {}}
    for sched in (net.dl.scheduler, net.ul.scheduler):
        inner_slot, inner_enqueue, inner_deliver = sched.schedule_slot, sched.enqueue, sched.deliver

        def slot(start, s=sched, inner=inner_slot):
            before = {q.key: q.backlog for q in s.queues.values() if q.eligible(start)}
            grants = inner(start)
            used = sum(g.rbs for g in grants)
            got = {(g.ue, g.drb): g.bytes for g in grants}
            idle_with_backlog = used < s.ran.num_rbs and any(got.get(k) != b for k, b in before.items())
            slots["checked"] += 1
            slots["conservation_failures"] += idle_with_backlog or used > s.ran.num_rbs
            return grants

        def enqueue(ue, drb, job, s=sched, inner=inner_enqueue):
            fifo["enqueued"].setdefault((id(s), ue, drb), []).append(id(job))
            inner(ue, drb, job)

        def deliver(job, q, t, s=sched, inner=inner_deliver):
            fifo["delivered"].setdefault((id(s), q.ue_id, q.drb_id), []).append(id(job))
            inner(job, q, t)

        sched.schedule_slot, sched.enqueue, sched.deliver = slot, enqueue, deliver
    net.run()
    fifo_ok = fifo["enqueued"] == fifo["delivered"]

    rng = RngStream(13, "acceptance-exponential")
    mean = statistics.fmean(draw_exponential(rng, 2_000_000) for _ in range(100_000))
    exp_ok = abs(mean - 2_000_000) / 2_000_000 < 0.02

    ok = order_ok and fifo_ok and slots["conservation_failures"] == 0 and slots["checked"] > 0 and exp_ok
    verdict(13, "kernel order, per-queue FIFO, work conservation, exponential mean", ok,
            f"order {order_ok}, {slots['checked']} slots checked with {slots['conservation_failures']} idle-RB "
            f"failures, FIFO {fifo_ok}, exponential mean {mean:.0f} ns")


def test_criterion_14_af_violations(run_scenario):
    _, ideal = run_scenario("ideal_3ep")
    _, fading = run_scenario("fading_3ep")
    bounds = {r["max_latency_ns"] for r in ideal["af"]["reservations"] + fading["af"]["reservations"]}
    vi, vf = ideal["af"]["violation_count"], fading["af"]["violation_count"]
    ok = bounds == {2_500_000} and vf >= 1 and vi == 0
    verdict(14, "2.5 ms bound: fading logs violations, ideal logs none", ok, f"fading {vf}, ideal {vi}")
