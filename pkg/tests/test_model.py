"""Domain metamodel and validation tests."""

from __future__ import annotations

import dataclasses

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fogloop.model import (
    CommandSpec,
    Composite,
    Domain,
    ParameterSpec,
    Service,
    ServiceKind,
    Task,
    UnknownMemberError,
    ValueType,
    composite_closure,
    touchpoints,
    validate_domain,
    value_conforms,
)


def office_task(name: str = "office1") -> Task:
    """A single-office task with the six usual devices and two composites."""
    prefix = name
    door = Service(
        f"{prefix}.door",
        ServiceKind.PHYSICAL_DEVICE,
        parameters=(ParameterSpec("lock-state", ValueType.ENUM_OF_STRINGS),),
        commands=(CommandSpec("lock"), CommandSpec("unlock")),
    )
    window = Service(
        f"{prefix}.window",
        ServiceKind.PHYSICAL_DEVICE,
        parameters=(ParameterSpec("position", ValueType.ENUM_OF_STRINGS),),
        commands=(CommandSpec("set-position", ValueType.ENUM_OF_STRINGS),),
    )
    heater = Service(
        f"{prefix}.heater",
        ServiceKind.PHYSICAL_DEVICE,
        parameters=(
            ParameterSpec("power-state", ValueType.BOOLEAN),
            ParameterSpec("room-temp", ValueType.REAL, unit="celsius"),
        ),
        commands=(CommandSpec("set-power", ValueType.BOOLEAN),),
    )
    meter = Service(
        f"{prefix}.energy_meter",
        ServiceKind.PHYSICAL_DEVICE,
        parameters=(ParameterSpec("kwh-reading", ValueType.REAL, unit="kWh"),),
    )
    lamp = Service(
        f"{prefix}.lamp",
        ServiceKind.PHYSICAL_DEVICE,
        parameters=(ParameterSpec("power-state", ValueType.BOOLEAN),),
        commands=(CommandSpec("set-power", ValueType.BOOLEAN),),
    )
    clock = Service(
        f"{prefix}.clock",
        ServiceKind.PHYSICAL_DEVICE,
        parameters=(ParameterSpec("armed", ValueType.BOOLEAN),),
        commands=(CommandSpec("arm", ValueType.INTEGER), CommandSpec("disarm")),
    )
    return Task(
        name,
        services=(door, window, heater, meter, lamp, clock),
        composites=(
            Composite("climate", (heater.name, window.name), goal="hold room temperature"),
            Composite(
                "lighting",
                (lamp.name, window.name, clock.name, door.name),
                goal="light only when useful",
            ),
        ),
    )


def test_office_domain_validates_clean():
    domain = Domain("smart-building", tasks=(office_task(),))
    report = validate_domain(domain)
    assert report.ok
    assert report.lines() == []


def test_empty_domain_flags_missing_tasks():
    report = validate_domain(Domain("empty"))
    assert not report.ok
    assert any("at least one task" in str(v) for v in report.violations)
    assert report.violations[0].path == "tasks"


def test_unknown_composite_member_is_located():
    task = office_task()
    # Drop the heater; the climate composite now dangles.
    without_heater = dataclasses.replace(
        task, services=tuple(s for s in task.services if not s.name.endswith(".heater"))
    )
    report = validate_domain(Domain("d", tasks=(without_heater,)))
    assert not report.ok
    offending = [v for v in report.violations if "unknown member" in v.message]
    assert len(offending) == 1
    assert offending[0].path == "tasks[0].composites[0]"
    assert "office1.heater" in offending[0].message


def test_duplicate_names_are_violations():
    svc = Service("twin", ServiceKind.VIRTUAL, parameters=(ParameterSpec("x", ValueType.REAL),))
    task = Task("t", services=(svc, svc))
    report = validate_domain(Domain("d", tasks=(task,)))
    assert any("duplicate service name 'twin'" in v.message for v in report.violations)

    report = validate_domain(Domain("d", tasks=(Task("t"), Task("t"))))
    assert any("duplicate task name 't'" in v.message for v in report.violations)


def test_device_without_surface_is_flagged():
    bare = Service("mute", ServiceKind.PHYSICAL_DEVICE)
    report = validate_domain(Domain("d", tasks=(Task("t", services=(bare,)),)))
    assert any("at least one parameter or command" in v.message for v in report.violations)


def test_nonpositive_sample_interval_is_flagged():
    svc = Service(
        "s",
        ServiceKind.VIRTUAL,
        parameters=(ParameterSpec("x", ValueType.REAL, sample_interval_ms=0),),
    )
    report = validate_domain(Domain("d", tasks=(Task("t", services=(svc,)),)))
    assert any("sample interval" in v.message for v in report.violations)


def test_validation_is_pure():
    domain = Domain("smart-building", tasks=(office_task(),))
    first = validate_domain(domain)
    second = validate_domain(domain)
    assert first.lines() == second.lines()


def test_touchpoints_partition_surface():
    for svc in office_task().services:
        sensors, effectors = touchpoints(svc)
        assert sensors == svc.parameters
        assert effectors == svc.commands
        assert len(sensors) + len(effectors) == len(svc.parameters) + len(svc.commands)


def test_closure_resolves_in_order_without_duplicates():
    task = office_task()
    comp = Composite("redundant", ("office1.lamp", "office1.door", "office1.lamp"))
    resolved = composite_closure(task, comp)
    assert [s.name for s in resolved] == ["office1.lamp", "office1.door"]
    assert len({s.name for s in resolved}) == len(resolved)


def test_closure_raises_on_unknown_member():
    task = office_task()
    with pytest.raises(UnknownMemberError):
        composite_closure(task, Composite("bad", ("office1.lamp", "nowhere")))


def test_value_conformance_separates_bool_from_int():
    assert value_conforms(True, ValueType.BOOLEAN)
    assert not value_conforms(True, ValueType.INTEGER)
    assert not value_conforms(True, ValueType.REAL)
    assert value_conforms(3, ValueType.INTEGER)
    assert value_conforms(3, ValueType.REAL)
    assert value_conforms(3.5, ValueType.REAL)
    assert not value_conforms(3.5, ValueType.INTEGER)
    assert value_conforms("sunny", ValueType.ENUM_OF_STRINGS)
    assert not value_conforms("sunny", ValueType.REAL)


@given(st.lists(st.sampled_from([s.name for s in office_task().services]), min_size=1))
def test_closure_matches_ordered_dedup_oracle(members):
    task = office_task()
    resolved = composite_closure(task, Composite("any", tuple(members)))
    expected = list(dict.fromkeys(members))
    assert [s.name for s in resolved] == expected


def test_lookups_by_name():
    task = office_task()
    domain = Domain("d", tasks=(task,))
    assert domain.find_service("office1.lamp") is task.service("office1.lamp")
    assert domain.find_service("missing") is None
    lamp = task.service("office1.lamp")
    assert lamp is not None
    assert lamp.command("set-power") is not None
    assert lamp.command("explode") is None
    assert lamp.parameter("power-state") is not None
    assert lamp.parameter("hue") is None
    assert len(domain.all_services()) == 6
