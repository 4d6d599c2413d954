import pytest

from tsnbridge.core5g import (
    ChannelModel,
    Grant,
    MacScheduler,
    RadioAttach,
    RanConfig,
    TransportJob,
    Tunnel,
    UnboundDestination,
    Upf,
    channel_apply,
    sdap_enqueue,
)
from tsnbridge.frames import CoreDatagram, GtpuHeader, ip
from tsnbridge.qos import DEFAULT_PROFILE, DrbConfig
from tsnbridge.simkernel import InvariantError, RngStream

UES = [2049, 2050, 2051]
TABLE = [{"drb": 0, "qfiList": [0], "default": True}, {"drb": 1, "qfiList": [6]}]
CONFIGS = {ue: DrbConfig.from_json(ue, TABLE) for ue in UES}


def scheduler(kind="maxci", num_rbs=25, channel=None, **kw):
    delivered = []
    s = MacScheduler(
        RanConfig(num_rbs=num_rbs, scheduler=kind),
        channel or ChannelModel(),
        CONFIGS,
        deliver=lambda job, q, t: delivered.append((job.lineage_id, q.key, t)),
        **kw,
    )
    return s, delivered


def test_upf_maps_dscp_and_selects_tunnel():
    upf = Upf(DEFAULT_PROFILE, [Tunnel(0x1000, 2049, ip("10.0.1.1"))])
    header, _ = upf.classify_and_tunnel(CoreDatagram(1, ip("10.0.1.1"), 6))
    assert (header.teid, header.qfi) == (0x1000, 6)
    header, _ = upf.classify_and_tunnel(CoreDatagram(1, ip("10.0.1.1"), 0))
    assert header.qfi == 0
    with pytest.raises(UnboundDestination):
        upf.classify_and_tunnel(CoreDatagram(1, ip("10.9.9.9"), 0))
    assert upf.classified_drops == 1


@pytest.mark.parametrize("qfi,drb", [(6, 1), (0, 0), (9, 0)])
def test_sdap_queue_selection(qfi, drb):
    s, _ = scheduler()
    assert sdap_enqueue(s, CONFIGS[2049], GtpuHeader(1, qfi), TransportJob(100, 0, 1)) == drb
    assert s.queue(2049, drb).backlog == 100


def test_sdap_override():
    s, _ = scheduler()
    assert sdap_enqueue(s, CONFIGS[2049], GtpuHeader(1, 0), TransportJob(100, 0, 1), drb_override=1) == 1


def test_maxci_serves_drb1_first_when_capacity_fits_one_job():
    s, delivered = scheduler(num_rbs=8)  # 512 B per slot
    s.enqueue(2049, 0, TransportJob(500, 0, 1))
    s.enqueue(2049, 1, TransportJob(100, 0, 2))
    grants = s.schedule_slot(0)
    assert (grants[0].drb, grants[0].jobs_served) == (1, (2,))
    assert delivered[0][0] == 2


def test_empty_queues_give_no_grants():
    s, _ = scheduler()
    assert s.schedule_slot(0) == []


def test_completion_at_slot_end_plus_pipeline():
    s, delivered = scheduler()
    s.enqueue(2049, 1, TransportJob(100, 0, 1))
    s.schedule_slot(1_000_000)
    assert delivered == [(1, (2049, 1), 1_000_000 + 500_000 + 1_550_000)]


def test_round_robin_serves_each_ue_once_in_three_slots():
    s, delivered = scheduler("rr", num_rbs=2)  # one 128 B job per slot
    for i, ue in enumerate(UES):
        s.enqueue(ue, 0, TransportJob(128, 0, i + 1))
    for slot in range(3):
        s.schedule_slot(slot * 500_000)
    assert sorted(k[0] for _, k, _ in delivered) == UES


def test_pf_spreads_service():
    s, delivered = scheduler("pf", num_rbs=2)
    for _ in range(4):
        for ue in UES:
            s.enqueue(ue, 0, TransportJob(128, 0, ue))
    for slot in range(6):
        s.schedule_slot(slot * 500_000)
    served = [k[0] for _, k, _ in delivered]
    assert {ue: served.count(ue) for ue in UES} == {2049: 2, 2050: 2, 2051: 2}


def test_partial_service_carries_over_in_fifo_order():
    s, delivered = scheduler(num_rbs=2)
    s.enqueue(2049, 0, TransportJob(100, 0, 1))
    s.enqueue(2049, 0, TransportJob(100, 0, 2))
    s.schedule_slot(0)
    s.schedule_slot(500_000)
    assert [d[0] for d in delivered] == [1, 2]
    assert s.queue(2049, 0).backlog == 0


def test_work_conservation_violation_detected():
    s, _ = scheduler()
    s.enqueue(2049, 0, TransportJob(100, 0, 1))
    s.enqueue(2050, 0, TransportJob(100, 0, 2))
    s._order = lambda eligible, quality: eligible[:1]  # a discipline that forgets a queue
    with pytest.raises(InvariantError):
        s.schedule_slot(0)


def test_fifo_violation_detected():
    s, _ = scheduler()
    s.enqueue(2049, 0, TransportJob(100, 0, 1))
    s.queue(2049, 0).last_delivered_seq = 99
    with pytest.raises(InvariantError):
        s.schedule_slot(0)


def test_ideal_channel_always_succeeds():
    g = Grant(2049, 0, 2, 128, ())
    assert all(channel_apply(ChannelModel(), g, None).success for _ in range(100))
    assert ChannelModel().quality(None) == 1.0


def test_harq_failure_fraction():
    model = ChannelModel(mode="fading", harq_bler=0.01)
    rng = RngStream(5, "harq-check")
    g = Grant(2049, 0, 2, 128, ())
    failures = sum(not channel_apply(model, g, rng).success for _ in range(100_000))
    assert 0.008 <= failures / 100_000 <= 0.012


def test_harq_gives_up_after_max_retx():
    model = ChannelModel(mode="fading", harq_bler=0.999, max_retx=2)
    rng = RngStream(1, "always-fail")
    g = Grant(2049, 0, 2, 128, ())
    assert not channel_apply(model, g, rng, 1).success
    outcome = channel_apply(model, g, rng, 2)
    assert outcome.success and outcome.forced


def test_harq_failure_blocks_queue_and_retransmits():
    s, delivered = scheduler(channel=ChannelModel(mode="fading", harq_bler=0.999, max_retx=1),
                             harq_rngs={ue: RngStream(1, f"h{ue}") for ue in UES},
                             fading_rngs={ue: RngStream(1, f"f{ue}") for ue in UES})
    s.enqueue(2049, 1, TransportJob(100, 0, 1))
    s.schedule_slot(0)
    assert delivered == [] and s.queue(2049, 1).blocked_until == 1_000_000
    assert s.schedule_slot(500_000) == []
    s.schedule_slot(1_000_000)
    assert delivered[0][2] == 1_000_000 + 500_000 + 1_550_000


def test_fading_quality_is_truncated():
    model = ChannelModel(mode="fading", mcs_sigma=2.0)
    rng = RngStream(3, "q")
    draws = [model.quality(rng) for _ in range(2_000)]
    assert min(draws) == 0.25 and max(draws) == 2.0


def test_radio_attach():
    attach = RadioAttach({2049: 8_000_000})
    assert not attach.admit(2049, 2_000_000)
    assert attach.admit(2049, 8_000_000)
    assert attach.losses == {2049: 1}
