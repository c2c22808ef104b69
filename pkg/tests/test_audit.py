"""Each auditor flags its violation on a doctored log and stays quiet on a
clean one."""

from ansim.audit import (
    audit_admin_uniqueness,
    audit_alert_precedes_removal,
    audit_demotion_permanence,
    audit_probe_cadence,
    audit_warning_precedes_alert,
    run_all,
)
from ansim.metrics import RunReport
from ansim.model import CMU_ID, Cause, Notification, Role, Severity
from ansim.protocol import RoleChange, RoleChangeReason
from ansim.runner import run_scenario
from ansim.scenario import load_scenario


def report(notifications=(), role_changes=()):
    return RunReport(
        scenario="synthetic", profile="plain", seed=0, duration_ms=0,
        sent=0, delivered=0, lost=0, payload_bytes=0, wire_bytes=0,
        bytes_by_category={}, messages_by_category={},
        notifications=list(notifications), role_changes=list(role_changes))


def initial(node, at=0):
    return RoleChange(node=node, from_role=None, to_role=Role.ADMINISTRATOR,
                      at=at, reason=RoleChangeReason.INITIAL_ASSIGNMENT)


def promote(node, at):
    return RoleChange(node=node, from_role=Role.FIRE_SENSOR,
                      to_role=Role.ADMINISTRATOR, at=at,
                      reason=RoleChangeReason.ADMIN_FAILOVER)


def demote(node, at):
    return RoleChange(node=node, from_role=Role.ADMINISTRATOR,
                      to_role=Role.LOW_RANK, at=at,
                      reason=RoleChangeReason.DEMOTION)


def note(cause, subject, at, *, severity=None, reporter=CMU_ID):
    fixed = {Cause.SINGLE_LOSS: Severity.WARNING,
             Cause.TRIPLE_LOSS: Severity.ALERT,
             Cause.REMOVAL: Severity.INFO,
             Cause.REENTRY: Severity.INFO}
    return Notification(severity=severity or fixed[cause], subject=subject,
                        cause=cause, at=at, reporter=reporter)


# ---------------------------------------------------------- admin uniqueness

def test_uniqueness_accepts_removal_then_promotion():
    rep = report(
        notifications=[note(Cause.REMOVAL, 1, 500)],
        role_changes=[initial(1), demote(1, 600), promote(2, 600)])
    assert audit_admin_uniqueness(rep) == []


def test_uniqueness_flags_overlapping_administrators():
    rep = report(role_changes=[initial(1), promote(2, 300)])
    problems = audit_admin_uniqueness(rep)
    assert len(problems) == 1 and "two administrators" in problems[0]


def test_uniqueness_flags_second_initial_assignment():
    rep = report(role_changes=[initial(1), initial(2, at=100)])
    problems = audit_admin_uniqueness(rep)
    assert any("second initial administrator" in p for p in problems)


def test_uniqueness_flags_late_initial_assignment():
    problems = audit_admin_uniqueness(report(role_changes=[initial(1, at=7)]))
    assert problems == ["initial administrator assigned at t=7, not t=0"]


# ------------------------------------------------------- escalation ordering

def test_warning_before_alert_clean():
    rep = report(notifications=[
        note(Cause.SINGLE_LOSS, 3, 100, reporter=1),
        note(Cause.TRIPLE_LOSS, 3, 300, reporter=1)])
    assert audit_warning_precedes_alert(rep) == []


def test_alert_without_warning_flagged():
    rep = report(notifications=[note(Cause.TRIPLE_LOSS, 3, 300, reporter=1)])
    problems = audit_warning_precedes_alert(rep)
    assert len(problems) == 1 and "without a prior warning" in problems[0]


def test_warning_from_another_reporter_does_not_cover():
    rep = report(notifications=[
        note(Cause.SINGLE_LOSS, 3, 100, reporter=2),
        note(Cause.TRIPLE_LOSS, 3, 300, reporter=1)])
    assert len(audit_warning_precedes_alert(rep)) == 1


def test_removal_needs_alert_and_reentry_resets():
    clean = report(notifications=[
        note(Cause.TRIPLE_LOSS, 3, 300, reporter=1),
        note(Cause.REMOVAL, 3, 310)])
    assert audit_alert_precedes_removal(clean) == []
    bare = report(notifications=[note(Cause.REMOVAL, 3, 310)])
    assert len(audit_alert_precedes_removal(bare)) == 1
    # after reentry the old alert no longer justifies a removal
    stale = report(notifications=[
        note(Cause.TRIPLE_LOSS, 3, 300, reporter=1),
        note(Cause.REMOVAL, 3, 310),
        note(Cause.REENTRY, 3, 900),
        note(Cause.REMOVAL, 3, 1200)])
    assert len(audit_alert_precedes_removal(stale)) == 1


# --------------------------------------------------------------- demotions

def test_demoted_node_must_stay_down():
    rep = report(role_changes=[
        initial(1), demote(1, 500), promote(2, 500), demote(2, 900),
        promote(1, 900)])
    problems = audit_demotion_permanence(rep)
    assert problems == ["demoted node 1 promoted again at t=900"]
    assert audit_demotion_permanence(
        report(role_changes=[initial(1), demote(1, 500), promote(2, 500)])) \
        == []


# ------------------------------------------------------------ probe cadence

def probe_line(at, target, seq=1):
    return f"{at}\t{seq}\tdiagnostic_probe\t0\t{target}\t16"


def test_probe_cadence_accepts_exact_interval():
    trace = [probe_line(100, 3), probe_line(60100, 3), probe_line(120100, 3)]
    assert audit_probe_cadence(trace) == []


def test_probe_cadence_flags_off_interval():
    trace = [probe_line(100, 3), probe_line(60105, 3)]
    problems = audit_probe_cadence(trace)
    assert len(problems) == 1 and "60005 ms" in problems[0]


def test_probe_cadence_flags_a_skipped_interval():
    trace = [probe_line(100, 3), probe_line(120100, 3)]
    assert len(audit_probe_cadence(trace)) == 1


def test_probe_cadence_tracks_targets_separately():
    trace = [probe_line(100, 3), probe_line(30100, 4), probe_line(60100, 3),
             probe_line(90100, 4)]
    assert audit_probe_cadence(trace) == []


def test_probe_cadence_resets_across_a_reentry():
    # first series ends when the node reenters; the second removal starts
    # a new series at its own phase
    trace = [probe_line(100, 3), probe_line(60100, 3), probe_line(73000, 3),
             probe_line(133000, 3)]
    assert audit_probe_cadence(trace, reentries=[(3, 60150)]) == []
    # without the reentry the 12 900 ms gap is a violation
    assert len(audit_probe_cadence(trace)) == 1


# ------------------------------------------------------------- whole runs

def test_real_runs_pass_every_audit():
    for name in ("paper-case1", "fire-sensor-dropout", "admin-failover"):
        result = run_scenario(load_scenario(name), with_trace=True)
        assert run_all(result.report, result.trace) == [], name
