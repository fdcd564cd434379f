import itertools

import pytest
import yaml

from alurity.model import ModuleRef, validate
from alurity.orchestrator import MockBackend
from alurity.pipeline import (
    DirectorySink,
    FlawRecord,
    PipelineSpec,
    SinkUnavailable,
    TrackerSink,
    ValidationFailure,
    assemble,
    emit,
    emit_all,
    run_pipeline,
)
from alurity.parser import parse_flow, parse_scenario

REG = "registry.gitlab.com/aliasrobotics/offensive/alurity"
TARGET = ModuleRef.parse(f"{REG}/robo_ur_cb3_1:3.13.0")
AZTARNA = ModuleRef.parse(f"{REG}/reco_aztarna:latest")
ROBOSPLOIT = ModuleRef.parse(f"{REG}/expl_robosploit/expl_robosploit:latest")
GAZEBO = ModuleRef.parse(f"{REG}/deve_gazebo:latest")


def record(title="ROS master exposed", **kw):
    fields = dict(
        title=title,
        flaw_class="exposure",
        description="found during a sweep",
        system=str(TARGET),
        detected_by=str(AZTARNA),
        reproduction_scenario="networks:\n",
        reproduction_flow="flow:\n",
        severity="medium",
    )
    fields.update(kw)
    return FlawRecord(**fields)


class TestAssemble:
    def test_single_tool(self, registry):
        scenario = assemble(PipelineSpec(target=TARGET, tools=(AZTARNA,)), registry)
        assert [c.name for c in scenario.containers] == ["target", "scanner"]
        assert scenario.containers[0].base == TARGET
        assert scenario.containers[1].base == AZTARNA
        assert len(scenario.networks) == 1
        commands = scenario.flows[0].windows[0].commands()
        assert len(commands) == 1
        # target is the first endpoint: first auto address above the gateway
        assert commands[0].text == "aztarna -t ros -a 10.110.0.2"

    def test_zero_tools(self, registry):
        with pytest.raises(ValidationFailure) as exc:
            assemble(PipelineSpec(target=TARGET, tools=()), registry)
        assert exc.value.code == "empty-toolchain"

    def test_three_tools(self, registry):
        scenario = assemble(PipelineSpec(target=TARGET, tools=(AZTARNA, ROBOSPLOIT, GAZEBO)), registry)
        scanner = scenario.containers[1]
        assert scanner.base == AZTARNA
        assert scanner.volumes == (ROBOSPLOIT, GAZEBO)
        commands = [c.text for c in scenario.flows[0].windows[0].commands()]
        assert len(commands) == 3
        assert commands[0].startswith("aztarna")
        assert commands[1].startswith("robosploit")

    def test_assembled_scenarios_always_validate(self, registry):
        tools = (AZTARNA, ROBOSPLOIT, GAZEBO)
        for n in (1, 2, 3):
            for combo in itertools.permutations(tools, n):
                scenario = assemble(PipelineSpec(target=TARGET, tools=combo), registry)
                assert [d for d in validate(scenario) if d.severity == "error"] == []


class TestRunPipeline:
    def test_findings_become_records(self, registry):
        backend = MockBackend(
            responses=[
                (
                    "^aztarna",
                    {"stdout": "FINDING: open master\nFINDING: open param server\n"},
                )
            ]
        )
        spec = PipelineSpec(target=TARGET, tools=(AZTARNA,))
        records = run_pipeline(spec, backend, registry)
        assert len(records) == 2
        assert {r.title for r in records} == {"open master", "open param server"}
        assert all(r.detected_by == str(AZTARNA) for r in records)
        assert all("containers:" in r.reproduction_scenario for r in records)
        assert all("flow:" in r.reproduction_flow for r in records)

    def test_clean_run_yields_nothing(self, registry):
        records = run_pipeline(PipelineSpec(target=TARGET, tools=(AZTARNA,)), MockBackend(), registry)
        assert records == []

    def test_reproduction_material_parses(self, registry):
        backend = MockBackend(responses=[("^aztarna", {"stdout": "FINDING: x\n"})])
        (rec,) = run_pipeline(PipelineSpec(target=TARGET, tools=(AZTARNA,)), backend, registry)
        scenario = parse_scenario(rec.reproduction_scenario)
        assert [c.name for c in scenario.containers] == ["target", "scanner"]
        flow = parse_flow(rec.reproduction_flow)
        assert flow[0].endpoint == "scanner"

    def test_teardown_even_on_backend_failure(self, registry):
        backend = MockBackend(fail_create={"scanner"})
        from alurity.orchestrator import DeploymentFailure

        with pytest.raises(DeploymentFailure):
            run_pipeline(PipelineSpec(target=TARGET, tools=(AZTARNA,)), backend, registry)
        creates = [e[1] for e in backend.journal if e[0] == "create"]
        destroys = [e[1] for e in backend.journal if e[0] == "destroy"]
        assert destroys == list(reversed(creates))


class TestFlawRecord:
    def test_yaml_key_set(self):
        doc = yaml.safe_load(record().to_yaml())
        assert list(doc) == [
            "id",
            "title",
            "flaw-class",
            "description",
            "system",
            "vendor",
            "severity",
            "detected-by",
            "reproduction",
        ]
        assert list(doc["reproduction"]) == ["scenario", "flow"]

    def test_roundtrip(self):
        rec = record()
        assert FlawRecord.from_yaml(rec.to_yaml()) == rec

    def test_unknown_fields_pass_through(self):
        rec = record(extra={"cvss": 9.8, "links": ["a"]})
        loaded = FlawRecord.from_yaml(rec.to_yaml())
        assert loaded.extra == {"cvss": 9.8, "links": ["a"]}
        assert loaded == rec


class TestEmit:
    def test_directory_sink_roundtrip(self, tmp_path):
        rec = record()
        location = emit(rec, DirectorySink(str(tmp_path)))
        assert location.endswith(".yaml") and "rvd-" in location
        assert FlawRecord.from_yaml(open(location).read()) == rec

    def test_stable_file_name_per_title(self, tmp_path):
        sink = DirectorySink(str(tmp_path))
        assert emit(record(), sink) == emit(record(), sink)

    def test_unwritable_directory(self, tmp_path):
        target = tmp_path / "blocked"
        target.write_text("a file, not a directory")
        rec = record()
        with pytest.raises(SinkUnavailable) as exc:
            emit(rec, DirectorySink(str(target)))
        assert exc.value.outbox == [rec]

    def test_tracker_sink(self, tracker):
        stub, url = tracker
        location = emit(record(), TrackerSink(url))
        assert int(location) in stub.issues

    def test_emit_all_keeps_failures_in_outbox(self, tmp_path):
        target = tmp_path / "blocked"
        target.write_text("x")
        records = [record("a"), record("b")]
        locations, outbox = emit_all(records, DirectorySink(str(target)))
        assert locations == [] and outbox == records
