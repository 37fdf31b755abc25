"""
Unit Tests for the simulated USB bus

Covers the event scheduler, control transfers on EP0, interrupt-IN polling
and the keep-alive watchdog.

Run tests with:
    pytest tests/unit/test_bus.py -v
"""

import pytest

from hidsense.bus import (
    BusPacket,
    DeviceState,
    KeepAliveWatchdog,
    PacketKind,
    SetupRequest,
    SimClock,
    UsbBus,
)
from hidsense.descriptors import DescriptorType, build_paper_descriptor_set
from hidsense.utils.errors import BusStateError, ProtocolError


class FakeDevice:
    """Device that answers enumeration but never services the bus itself."""

    def __init__(self):
        self.descriptors = build_paper_descriptor_set()
        self.calls: list[str] = []

    def on_attach(self, bus):
        self.calls.append("attach")

    def on_configured(self):
        self.calls.append("configured")

    def on_detach(self):
        self.calls.append("detach")


class RecordingListener:
    def __init__(self):
        self.calls: list[str] = []

    def device_attached(self, bus):
        self.calls.append("attached")

    def device_detached(self, bus):
        self.calls.append("detached")


@pytest.fixture
def device():
    return FakeDevice()


@pytest.fixture
def bus(device):
    bus = UsbBus()
    bus.attach(device)
    return bus


@pytest.fixture
def configured_bus(bus):
    bus.reset()
    bus.control_transfer(SetupRequest.set_address(3))
    bus.control_transfer(SetupRequest.set_configuration(1))
    return bus


class TestSimClock:
    """Test the discrete-event scheduler."""

    def test_empty_queue_advances(self):
        clock = SimClock()
        assert clock.run_until(100) == 0
        assert clock.now == 100

    def test_ties_dispatch_in_insertion_order(self):
        clock = SimClock()
        order = []
        clock.schedule_at(50, lambda: order.append("b"))
        clock.schedule_at(10, lambda: order.append("a"))
        clock.schedule_at(50, lambda: order.append("c"))
        assert clock.run_until(50) == 3
        assert order == ["a", "b", "c"]

    def test_callbacks_may_schedule(self):
        clock = SimClock()
        seen = []

        def tick():
            seen.append(clock.now)
            clock.schedule_in(10, tick)

        clock.schedule_at(0, tick)
        clock.run_until(35)
        assert seen == [0, 10, 20, 30]
        assert clock.pending == 1

    def test_cancel(self):
        clock = SimClock()
        fired = []
        handle = clock.schedule_at(5, lambda: fired.append(1))
        handle.cancel()
        clock.run_until(10)
        assert fired == []
        assert not handle.pending

    def test_past_is_rejected(self):
        clock = SimClock(start=100)
        with pytest.raises(BusStateError):
            clock.schedule_at(99, lambda: None)
        with pytest.raises(BusStateError):
            clock.run_until(50)


class TestSetupRequest:
    """Test SETUP packet encoding."""

    def test_get_device_descriptor(self):
        req = SetupRequest.get_descriptor(DescriptorType.DEVICE, length=18)
        assert req.serialize() == bytes.fromhex("80 06 00 01 00 00 12 00")
        assert req.describe() == "GET_DESCRIPTOR(DEVICE,0)"

    def test_report_descriptor_goes_to_interface(self):
        req = SetupRequest.get_descriptor(DescriptorType.REPORT, length=47)
        assert req.serialize() == bytes.fromhex("81 06 00 22 00 00 2F 00")

    def test_from_bytes(self):
        req = SetupRequest.set_address(5)
        assert SetupRequest.from_bytes(req.serialize()) == req
        assert req.describe() == "SET_ADDRESS(5)"
        with pytest.raises(ProtocolError):
            SetupRequest.from_bytes(b"\x00\x05")


class TestAttachDetach:
    """Test device presence on the bus."""

    def test_attach_records_and_notifies(self, device):
        bus = UsbBus()
        listener = RecordingListener()
        bus.add_listener(listener)
        bus.attach(device)
        assert bus.attached
        assert bus.state is DeviceState.ATTACHED
        assert bus.packets[0].kind is PacketKind.ATTACH
        assert device.calls == ["attach"]
        assert listener.calls == ["attached"]

    def test_double_attach(self, bus):
        with pytest.raises(BusStateError):
            bus.attach(FakeDevice())

    def test_detach(self, bus, device):
        listener = RecordingListener()
        bus.add_listener(listener)
        bus.detach()
        assert not bus.attached
        assert bus.packets[-1].kind is PacketKind.DETACH
        assert device.calls == ["attach", "detach"]
        assert listener.calls == ["detached"]
        with pytest.raises(BusStateError):
            bus.detach()

    def test_sink_and_drain(self, bus):
        seen: list[BusPacket] = []
        bus.add_sink(seen.append)
        assert [p.kind for p in bus.drain()] == [PacketKind.ATTACH]
        bus.usb_service()
        assert bus.drain() == seen
        assert bus.drain() == []


class TestControlTransfers:
    """Test EP0 request handling."""

    def test_device_descriptor(self, bus):
        bus.reset()
        data = bus.control_transfer(SetupRequest.get_descriptor(DescriptorType.DEVICE, length=18))
        assert len(data) == 18
        setup, reply = bus.packets[-2:]
        assert setup.kind is PacketKind.SETUP
        assert setup.annotation == "GET_DESCRIPTOR(DEVICE,0)"
        assert reply.kind is PacketKind.DATA_IN
        assert reply.endpoint == 0

    def test_short_wlength_truncates(self, bus):
        bus.reset()
        data = bus.control_transfer(SetupRequest.get_descriptor(DescriptorType.DEVICE, length=8))
        assert data == bytes.fromhex("12 01 00 02 00 00 00 08")

    def test_configure(self, configured_bus, device):
        assert configured_bus.configured
        assert configured_bus.address == 3
        assert device.calls == ["attach", "configured"]
        assert configured_bus.packets[-1].annotation == "status"
        assert configured_bus.control_transfer(SetupRequest.get_configuration()) == b"\x01"
        assert configured_bus.control_transfer(SetupRequest.get_status()) == b"\x02\x00"

    def test_unconfigure(self, configured_bus):
        configured_bus.control_transfer(SetupRequest.set_configuration(0))
        assert configured_bus.state is DeviceState.ADDRESS

    def test_configuration_before_address_stalls(self, bus):
        with pytest.raises(ProtocolError):
            bus.control_transfer(SetupRequest.set_configuration(1))
        assert bus.packets[-1].kind is PacketKind.STALL

    def test_unknown_string_stalls(self, bus):
        bus.reset()
        with pytest.raises(ProtocolError):
            bus.control_transfer(SetupRequest.get_descriptor(DescriptorType.STRING, 5))
        assert bus.packets[-1].kind is PacketKind.STALL

    def test_unsupported_request(self, bus):
        bus.reset()
        with pytest.raises(ProtocolError, match="Unsupported request"):
            bus.control_transfer(SetupRequest(bm_request_type=0x80, b_request=0x33))


class TestInterruptIn:
    """Test interrupt-IN polling."""

    def test_poll_before_configuration(self, bus):
        with pytest.raises(ProtocolError):
            bus.poll_interrupt_in(1)

    def test_wrong_endpoint(self, configured_bus):
        with pytest.raises(ProtocolError):
            configured_bus.poll_interrupt_in(2)

    def test_nak_then_data(self, configured_bus):
        assert configured_bus.poll_interrupt_in(1) is None
        assert configured_bus.packets[-1].kind is PacketKind.NAK
        configured_bus.enqueue_report(1, b"250 ")
        assert configured_bus.poll_interrupt_in(1) == b"250 "
        packet = configured_bus.packets[-1]
        assert (packet.kind, packet.endpoint, packet.payload) == (PacketKind.DATA_IN, 1, b"250 ")
        assert configured_bus.poll_interrupt_in(1) is None

    def test_overwrite(self, configured_bus):
        configured_bus.enqueue_report(1, b"249 ")
        configured_bus.enqueue_report(1, b"250 ")
        assert configured_bus.poll_interrupt_in(1) == b"250 "
        assert configured_bus.packets[-1].annotation == "overwrote 1 report(s)"
        assert configured_bus.overwritten_reports == 1


class TestWatchdog:
    """Test the keep-alive watchdog."""

    def test_model(self):
        dog = KeepAliveWatchdog(window=10)
        dog.arm(0)
        assert not dog.check(10)
        assert dog.check(11)
        assert dog.tripped_at == 11
        dog.service(12)
        assert not dog.tripped
        assert dog.deadline == 23

    def test_disarmed_never_trips(self):
        dog = KeepAliveWatchdog(window=10)
        assert not dog.check(1000)

    def test_trip_and_recover(self, configured_bus):
        configured_bus.run_until(10_000)
        assert not configured_bus.watchdog.tripped
        configured_bus.run_until(10_001)
        assert configured_bus.watchdog.tripped_at == 10_001

        configured_bus.enqueue_report(1, b"250 ")
        assert configured_bus.poll_interrupt_in(1) is None
        assert configured_bus.packets[-1].annotation == "unresponsive"
        assert configured_bus.unresponsive

        configured_bus.usb_service()
        assert configured_bus.poll_interrupt_in(1) == b"250 "
        assert not configured_bus.unresponsive

    def test_control_transfers_unaffected(self, configured_bus):
        configured_bus.run_until(50_000)
        assert configured_bus.control_transfer(SetupRequest.get_configuration()) == b"\x01"


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
