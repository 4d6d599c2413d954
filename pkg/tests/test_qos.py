
from tsnbridge.qos import (
    DEFAULT_PROFILE,
    DrbConfig,
    QosProfile,
    map_dscp_to_pcp,
    map_dscp_to_qfi,
    map_pcp_to_dscp,
    map_qfi_to_drb,
    validate_drb_config,
)

TABLE = DrbConfig.from_json(2049, [{"drb": 0, "qfiList": [0], "default": True}, {"drb": 1, "qfiList": [6]}])


def test_default_profile_is_identity_on_pcp():
    assert [map_pcp_to_dscp(DEFAULT_PROFILE, p) for p in range(8)] == list(range(8))
    assert map_pcp_to_dscp(DEFAULT_PROFILE, 6) == 6
    assert map_pcp_to_dscp(DEFAULT_PROFILE, 0) == 0


def test_custom_pcp_table():
    profile = QosProfile(pcp_to_dscp=(0, 8, 10, 26, 34, 46, 48, 56))
    assert map_pcp_to_dscp(profile, 3) == 26
    assert profile.class_preserving()
    assert map_dscp_to_pcp(profile, 26) == 3


def test_dscp_to_qfi():
    assert map_dscp_to_qfi(DEFAULT_PROFILE, 6) == 6
    assert map_dscp_to_qfi(DEFAULT_PROFILE, 0) == 0
    assert map_dscp_to_qfi(DEFAULT_PROFILE, 45) == 0


def test_class_preservation_end_to_end():
    for p in range(8):
        assert map_dscp_to_pcp(DEFAULT_PROFILE, map_pcp_to_dscp(DEFAULT_PROFILE, p)) == p


def test_many_to_one_profile_is_not_class_preserving():
    profile = QosProfile(pcp_to_dscp=(0, 0, 2, 3, 4, 5, 6, 7))
    assert not profile.class_preserving()
    assert map_dscp_to_pcp(profile, 0) == 0


def test_qfi_to_drb():
    assert map_qfi_to_drb(TABLE, 6) == 1
    assert map_qfi_to_drb(TABLE, 0) == 0
    assert map_qfi_to_drb(TABLE, 9) == 0


def test_table_validates():
    assert validate_drb_config(TABLE).ok


def test_duplicate_qfi_named():
    cfg = DrbConfig.from_json(2049, [{"drb": 0, "qfiList": [0, 6], "default": True}, {"drb": 1, "qfiList": [6]}])
    issues = validate_drb_config(cfg).issues
    assert [(i.code, i.qfi) for i in issues] == [("duplicate-qfi", 6)]


def test_missing_default():
    cfg = DrbConfig.from_json(2049, [{"drb": 1, "qfiList": [6]}])
    assert [i.code for i in validate_drb_config(cfg).issues] == ["missing-default"]


def test_qfi_zero_entry_is_implicit_default():
    cfg = DrbConfig.from_json(2049, [{"drb": 0, "qfiList": [0]}, {"drb": 1, "qfiList": [6]}])
    assert validate_drb_config(cfg).ok
    assert map_qfi_to_drb(cfg, 33) == 0


def test_priority_defaults_to_drb_id():
    assert TABLE.priority_of(1) > TABLE.priority_of(0)
