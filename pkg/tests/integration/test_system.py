"""
Integration Tests for hidsense

End-to-end runs of firmware, bus and host monitor: report cadence, keep-alive
behaviour, host transcripts, determinism and pipeline equivalence.

Run tests with:
    pytest tests/integration/test_system.py -v
"""

import numpy as np
import pytest

from hidsense import Simulation, SimulationConfig
from hidsense.bus import PacketKind, SetupRequest, UsbBus
from hidsense.firmware import (
    TemperatureFirmware,
    adc_sample,
    long_to_str,
    make_report,
    parse_sensor_spec,
    remove_blank,
    sensor_eval,
)
from hidsense.host import STATUS_CONNECTED, STATUS_PLUGGED, STATUS_UNPLUGGED, HostEventKind, decode_report
from hidsense.tracer import parse, render


def run(sensor: str = "constant:2.5", duration_s: float = 13.0, **kwargs) -> Simulation:
    sim = Simulation(SimulationConfig(duration_s=duration_s, sensor=parse_sensor_spec(sensor), **kwargs))
    sim.run()
    return sim


@pytest.fixture(scope="module")
def default_run():
    """A 13 s run of the device at a constant 2.5 V."""
    return run()


class TestDefaultRun:
    """Test the default 13 s session."""

    def test_eleven_reads_of_250(self, default_run):
        reads = [e for e in default_run.app.events if e.kind is HostEventKind.READ]
        assert len(reads) == 11
        assert all(decode_report(e.payload) == ("250 ", 250) for e in reads)
        assert [e.time for e in reads] == [2_100_000 + k * 1_000_000 for k in range(11)]

    def test_report_cadence(self, default_run):
        times = [r.time_us for r in default_run.app.readings]
        assert all(abs((b - a) - 1_000_000) <= 10_000 for a, b in zip(times, times[1:]))
        assert default_run.summary.cadence_mean_ms == 1000.0
        assert default_run.summary.cadence_max_ms == 1000.0

    def test_keepalive_rate(self, default_run):
        services = np.array(
            [p.timestamp for p in default_run.trace.packets if p.kind is PacketKind.SERVICE], dtype=np.int64
        )
        for second in range(13):
            in_window = np.count_nonzero((services >= second * 1_000_000) & (services < (second + 1) * 1_000_000))
            assert in_window >= 1200
        assert int(np.diff(services).max()) <= 833
        assert default_run.bus.watchdog.tripped_at is None

    def test_transcript(self, default_run):
        transcript = default_run.app.transcript
        assert transcript[:2] == [STATUS_CONNECTED, STATUS_PLUGGED]
        assert transcript[-1] == STATUS_UNPLUGGED
        assert transcript[2:-1] == [
            f"{2.1 + k:.3f}s 250  C  [bar: 250/500]" for k in range(11)
        ]

    def test_reports_match_firmware_fifo(self, default_run):
        delivered = [
            p.payload for p in default_run.trace.packets if p.kind is PacketKind.DATA_IN and p.endpoint == 1
        ]
        assert delivered == [c.report.payload for c in default_run.firmware.conversions]
        assert default_run.bus.overwritten_reports == 0

    def test_trace_roundtrip(self, default_run):
        text = render(default_run.trace, verbose=True)
        assert parse(text) == default_run.trace
        assert render(parse(text), verbose=True) == text


class TestKeepAliveFailure:
    """Test the device with Timer0 interrupts disabled."""

    @pytest.fixture(scope="class")
    def silent_run(self):
        return run(duration_s=4.0, registers={"INTCON": 0x00})

    def test_watchdog_trips_within_window(self, silent_run):
        tripped_at = silent_run.bus.watchdog.tripped_at
        assert tripped_at is not None
        assert tripped_at <= silent_run.bus.watchdog.window + 1

    def test_every_poll_naks(self, silent_run):
        polls = [p for p in silent_run.trace.packets if p.endpoint == 1 and p.kind in (PacketKind.NAK, PacketKind.DATA_IN)]
        assert polls
        assert all(p.kind is PacketKind.NAK and p.annotation == "unresponsive" for p in polls)
        assert silent_run.app.readings == ()
        assert len(silent_run.firmware.conversions) == 2

    def test_enumeration_still_succeeds(self, silent_run):
        assert silent_run.app.transcript[:2] == [STATUS_CONNECTED, STATUS_PLUGGED]


class TestDeterminism:
    """Test replayability of seeded runs."""

    def test_identical_runs(self):
        a = run("sine:2.5:1:0.2", duration_s=6.0, seed=77)
        b = run("sine:2.5:1:0.2", duration_s=6.0, seed=77)
        assert render(a.trace, verbose=True) == render(b.trace, verbose=True)
        assert a.app.transcript == b.app.transcript

    def test_seed_changes_noisy_runs(self):
        sensor = parse_sensor_spec("constant:2.5").model_copy(update={"noise": 0.2})
        a = Simulation(SimulationConfig(duration_s=6.0, sensor=sensor, seed=1))
        b = Simulation(SimulationConfig(duration_s=6.0, sensor=sensor, seed=2))
        a.run()
        b.run()
        assert [r.value for r in a.app.readings] != [r.value for r in b.app.readings]


class TestPipeline:
    """Test that the host shows what the firmware computed."""

    def test_displayed_value_law(self):
        sim = run("ramp:0:0.35", duration_s=13.0)
        values = [r.value for r in sim.app.readings]
        assert values == sorted(values)
        assert values == [c.vin * 500 // 1024 for c in sim.firmware.conversions]

    def test_random_voltages_end_to_end(self):
        """Firmware encoding, bus transfer and host decoding agree with the direct computation."""
        bus = UsbBus()
        firmware = TemperatureFirmware()
        bus.attach(firmware)
        bus.reset()
        bus.control_transfer(SetupRequest.set_address(1))
        bus.control_transfer(SetupRequest.set_configuration(1))

        rng = np.random.default_rng(2025)
        for v in rng.uniform(0.0, 5.0, size=1000):
            bus.enqueue_report(1, make_report(adc_sample(float(v))).report.payload)
            data = bus.poll_interrupt_in(1)
            text, shown = decode_report(b"\x00" + data)
            expected = int(int(float(v) * 1024 / 5) * 5.0 / 1024.0 * 100.0)
            assert shown == expected
            assert text == remove_blank(long_to_str(expected)).text

    def test_sensor_drives_reports(self):
        sim = run("steps:1:0.5:0.25", duration_s=13.0)
        for t, conversion in zip(sim.firmware.report_times, sim.firmware.conversions):
            assert conversion.vin == adc_sample(sensor_eval(sim.firmware.signal, t))


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
