# Copyright 2025 The hidsense Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
Discrete-event USB bus joining one virtual device to one virtual host.

Modelled at transaction level: attach/detach, control transfers on EP0,
interrupt-IN polling with NAK, and a keep-alive watchdog that makes the device
unresponsive when the firmware stops servicing the USB module.
"""

import heapq
import logging
from collections.abc import Callable
from enum import Enum, IntEnum
from typing import Protocol

from pydantic import BaseModel, ConfigDict, model_validator

from hidsense import config
from hidsense.descriptors import DescriptorSet, DescriptorType, TransferType
from hidsense.utils.errors import BusStateError, DescriptorError, ProtocolError
from hidsense.utils.log import log_struct

logger = logging.getLogger(__name__)

UNRESPONSIVE = "unresponsive"


# ---------------------------------------------------------------------------
# Scheduler
# ---------------------------------------------------------------------------


class EventHandle:
    """A scheduled callback; `cancel()` makes the clock skip it."""

    __slots__ = ("callback", "cancelled", "dispatched", "seq", "time")

    def __init__(self, time: int, seq: int, callback: Callable[[], None]) -> None:
        self.time = time
        self.seq = seq
        self.callback = callback
        self.cancelled = False
        self.dispatched = False

    def __lt__(self, other: "EventHandle") -> bool:
        return (self.time, self.seq) < (other.time, other.seq)

    def cancel(self) -> None:
        self.cancelled = True

    @property
    def pending(self) -> bool:
        return not (self.cancelled or self.dispatched)


class SimClock:
    """Microsecond clock with an event heap ordered by (time, insertion order)."""

    def __init__(self, start: int = 0) -> None:
        self.now = start
        self._queue: list[EventHandle] = []
        self._seq = 0

    def schedule_at(self, time: int, callback: Callable[[], None]) -> EventHandle:
        if time < self.now:
            raise BusStateError("Cannot schedule in the past", {"time": time, "now": self.now})
        handle = EventHandle(time, self._seq, callback)
        self._seq += 1
        heapq.heappush(self._queue, handle)
        return handle

    def schedule_in(self, delay: int, callback: Callable[[], None]) -> EventHandle:
        return self.schedule_at(self.now + delay, callback)

    def run_until(self, t_end: int) -> int:
        """Dispatch every event due at or before `t_end`, then set now = t_end.

        Returns:
            The number of callbacks dispatched
        """
        if t_end < self.now:
            raise BusStateError("run_until target is in the past", {"t_end": t_end, "now": self.now})
        dispatched = 0
        while self._queue and self._queue[0].time <= t_end:
            handle = heapq.heappop(self._queue)
            if handle.cancelled:
                continue
            self.now = handle.time
            handle.dispatched = True
            handle.callback()
            dispatched += 1
        self.now = t_end
        return dispatched

    @property
    def pending(self) -> int:
        return sum(1 for h in self._queue if not h.cancelled)


# ---------------------------------------------------------------------------
# Packets and requests
# ---------------------------------------------------------------------------


class PacketKind(str, Enum):
    SETUP = "SETUP"
    DATA_IN = "DATA_IN"
    DATA_OUT = "DATA_OUT"
    NAK = "NAK"
    STALL = "STALL"
    ATTACH = "ATTACH"
    DETACH = "DETACH"
    SERVICE = "SERVICE"


_EMPTY_KINDS = {PacketKind.NAK, PacketKind.STALL, PacketKind.ATTACH, PacketKind.DETACH, PacketKind.SERVICE}


class BusPacket(BaseModel):
    model_config = ConfigDict(frozen=True)

    timestamp: int
    kind: PacketKind
    endpoint: int | None = None
    payload: bytes = b""
    annotation: str = ""

    @model_validator(mode="after")
    def _check_payload(self) -> "BusPacket":
        if self.kind in _EMPTY_KINDS and self.payload:
            raise ValueError(f"{self.kind.value} packets carry no payload")
        if not self.annotation.isprintable():
            raise ValueError("annotation must be a single line of printable text")
        return self


class StandardRequest(IntEnum):
    GET_STATUS = 0x00
    CLEAR_FEATURE = 0x01
    SET_FEATURE = 0x03
    SET_ADDRESS = 0x05
    GET_DESCRIPTOR = 0x06
    SET_DESCRIPTOR = 0x07
    GET_CONFIGURATION = 0x08
    SET_CONFIGURATION = 0x09
    GET_INTERFACE = 0x0A
    SET_INTERFACE = 0x0B


class SetupRequest(BaseModel):
    """The 8-byte SETUP packet of a control transfer."""

    model_config = ConfigDict(frozen=True)

    bm_request_type: int
    b_request: int
    w_value: int = 0
    w_index: int = 0
    w_length: int = 0

    def serialize(self) -> bytes:
        try:
            return bytes([self.bm_request_type, self.b_request]) + b"".join(
                v.to_bytes(2, "little") for v in (self.w_value, self.w_index, self.w_length)
            )
        except (ValueError, OverflowError) as e:
            raise ProtocolError(f"Setup field out of range: {e}") from e

    @classmethod
    def from_bytes(cls, data: bytes) -> "SetupRequest":
        if len(data) != 8:
            raise ProtocolError("Setup packets are 8 bytes", {"length": len(data)})
        return cls(
            bm_request_type=data[0],
            b_request=data[1],
            w_value=int.from_bytes(data[2:4], "little"),
            w_index=int.from_bytes(data[4:6], "little"),
            w_length=int.from_bytes(data[6:8], "little"),
        )

    @classmethod
    def get_descriptor(
        cls, kind: DescriptorType, index: int = 0, length: int = 0xFF, lang: int = 0
    ) -> "SetupRequest":
        # Class descriptors (HID, report) are addressed to the interface.
        request_type = 0x81 if kind in (DescriptorType.HID, DescriptorType.REPORT) else 0x80
        return cls(
            bm_request_type=request_type,
            b_request=StandardRequest.GET_DESCRIPTOR,
            w_value=(kind << 8) | index,
            w_index=lang,
            w_length=length,
        )

    @classmethod
    def set_address(cls, address: int) -> "SetupRequest":
        return cls(bm_request_type=0x00, b_request=StandardRequest.SET_ADDRESS, w_value=address)

    @classmethod
    def set_configuration(cls, value: int) -> "SetupRequest":
        return cls(bm_request_type=0x00, b_request=StandardRequest.SET_CONFIGURATION, w_value=value)

    @classmethod
    def get_configuration(cls) -> "SetupRequest":
        return cls(bm_request_type=0x80, b_request=StandardRequest.GET_CONFIGURATION, w_length=1)

    @classmethod
    def get_status(cls) -> "SetupRequest":
        return cls(bm_request_type=0x80, b_request=StandardRequest.GET_STATUS, w_length=2)

    @property
    def device_to_host(self) -> bool:
        return bool(self.bm_request_type & 0x80)

    def describe(self) -> str:
        try:
            name = StandardRequest(self.b_request).name
        except ValueError:
            name = f"REQUEST_0x{self.b_request:02X}"
        if self.b_request == StandardRequest.GET_DESCRIPTOR:
            try:
                kind = DescriptorType(self.w_value >> 8).name
            except ValueError:
                kind = f"0x{self.w_value >> 8:02X}"
            return f"{name}({kind},{self.w_value & 0xFF})"
        if self.b_request in (StandardRequest.SET_ADDRESS, StandardRequest.SET_CONFIGURATION):
            return f"{name}({self.w_value})"
        return name


class DeviceState(IntEnum):
    DETACHED = 0
    ATTACHED = 1
    DEFAULT = 2
    ADDRESS = 3
    CONFIGURED = 4


# ---------------------------------------------------------------------------
# Watchdog
# ---------------------------------------------------------------------------


class KeepAliveWatchdog(BaseModel):
    """Trips once more than `window` microseconds pass without a service."""

    window: int = config.KEEPALIVE_WINDOW_US
    last_service: int = 0
    tripped: bool = False
    tripped_at: int | None = None
    armed: bool = False

    def arm(self, now: int) -> None:
        self.armed = True
        self.last_service = now
        self.tripped = False
        self.tripped_at = None

    def disarm(self) -> None:
        self.armed = False

    def service(self, now: int) -> None:
        self.last_service = now
        self.tripped = False

    @property
    def deadline(self) -> int:
        """First instant at which the watchdog counts as expired."""
        return self.last_service + self.window + 1

    def check(self, now: int) -> bool:
        """Update and return the tripped state at `now`."""
        if self.armed and not self.tripped and now - self.last_service > self.window:
            self.tripped = True
            if self.tripped_at is None:
                self.tripped_at = now
        return self.tripped


# ---------------------------------------------------------------------------
# Bus
# ---------------------------------------------------------------------------


class UsbDevice(Protocol):
    descriptors: DescriptorSet

    def on_attach(self, bus: "UsbBus") -> None: ...

    def on_configured(self) -> None: ...

    def on_detach(self) -> None: ...


class BusListener(Protocol):
    def device_attached(self, bus: "UsbBus") -> None: ...

    def device_detached(self, bus: "UsbBus") -> None: ...


class UsbBus:
    """One device, one host, one clock."""

    def __init__(
        self,
        clock: SimClock | None = None,
        keepalive_window_us: int = config.KEEPALIVE_WINDOW_US,
    ) -> None:
        self.clock = clock or SimClock()
        self.packets: list[BusPacket] = []
        self.device: UsbDevice | None = None
        self.state = DeviceState.DETACHED
        self.address = 0
        self.configuration_value = 0
        self.watchdog = KeepAliveWatchdog(window=keepalive_window_us)
        self.unresponsive = False
        self.overwritten_reports = 0
        self._listeners: list[BusListener] = []
        self._report: bytes | None = None
        self._pending_overwrites = 0
        self._watchdog_event: EventHandle | None = None
        self._sinks: list[Callable[[BusPacket], None]] = []
        self._drained = 0

    # -- trace sink ---------------------------------------------------------

    def add_listener(self, listener: BusListener) -> None:
        self._listeners.append(listener)

    def add_sink(self, sink: Callable[[BusPacket], None]) -> None:
        """Forward every recorded packet to `sink`, e.g. `TraceLog.record`."""
        self._sinks.append(sink)

    def record(
        self,
        kind: PacketKind,
        endpoint: int | None = None,
        payload: bytes = b"",
        annotation: str = "",
    ) -> BusPacket:
        packet = BusPacket(
            timestamp=self.clock.now, kind=kind, endpoint=endpoint, payload=payload, annotation=annotation
        )
        self.packets.append(packet)
        for sink in self._sinks:
            sink(packet)
        return packet

    def drain(self) -> list[BusPacket]:
        """Packets recorded since the previous drain."""
        fresh = self.packets[self._drained :]
        self._drained = len(self.packets)
        return fresh

    # -- state --------------------------------------------------------------

    @property
    def attached(self) -> bool:
        return self.device is not None

    @property
    def configured(self) -> bool:
        return self.state is DeviceState.CONFIGURED

    def _require_device(self) -> "UsbDevice":
        if self.device is None:
            raise BusStateError("No device attached")
        return self.device

    def attach(self, device: UsbDevice) -> None:
        if self.device is not None:
            raise BusStateError("A device is already attached")
        self.device = device
        self.state = DeviceState.ATTACHED
        self.address = 0
        self.configuration_value = 0
        self.unresponsive = False
        self._report = None
        self._pending_overwrites = 0
        self.record(PacketKind.ATTACH)
        log_struct(
            logger,
            {"event": "attach", "t_us": self.clock.now, "vid": device.descriptors.device.vid, "pid": device.descriptors.device.pid},
        )
        self.watchdog.arm(self.clock.now)
        self._schedule_watchdog()
        device.on_attach(self)
        for listener in self._listeners:
            listener.device_attached(self)

    def detach(self) -> None:
        device = self._require_device()
        self.record(PacketKind.DETACH)
        log_struct(logger, {"event": "detach", "t_us": self.clock.now})
        self.watchdog.disarm()
        if self._watchdog_event is not None:
            self._watchdog_event.cancel()
            self._watchdog_event = None
        self.device = None
        self.state = DeviceState.DETACHED
        self._report = None
        device.on_detach()
        for listener in self._listeners:
            listener.device_detached(self)

    def reset(self) -> None:
        """Bus reset issued by the host before enumeration."""
        self._require_device()
        self.state = DeviceState.DEFAULT
        self.address = 0
        self.configuration_value = 0

    # -- keep-alive ---------------------------------------------------------

    def usb_service(self) -> None:
        self._require_device()
        self.watchdog.service(self.clock.now)
        self.unresponsive = False
        self.record(PacketKind.SERVICE)
        self._schedule_watchdog()

    def _schedule_watchdog(self) -> None:
        if self._watchdog_event is not None:
            self._watchdog_event.cancel()
        self._watchdog_event = self.clock.schedule_at(self.watchdog.deadline, self._check_watchdog)

    def _check_watchdog(self) -> None:
        self._watchdog_event = None
        if self.watchdog.check(self.clock.now):
            log_struct(
                logger,
                {
                    "event": "watchdog_tripped",
                    "t_us": self.clock.now,
                    "last_service_us": self.watchdog.last_service,
                    "window_us": self.watchdog.window,
                },
                severity="WARNING",
            )

    # -- transfers ----------------------------------------------------------

    def enqueue_report(self, endpoint: int, payload: bytes) -> None:
        """Firmware side of an interrupt-IN transfer; the queue holds one report."""
        device = self._require_device()
        ep = device.descriptors.configuration.endpoint(endpoint, is_in=True)
        if ep is None:
            raise ProtocolError(f"EP{endpoint} IN is not declared", {"endpoint": endpoint})
        if self._report is not None:
            self._pending_overwrites += 1
            self.overwritten_reports += 1
            logger.debug(f"Report {self._report!r} overwritten before the host read it")
        self._report = payload

    def poll_interrupt_in(self, endpoint: int) -> bytes | None:
        """Host IN token on an interrupt endpoint.

        Returns:
            The report bytes, or None when the device answers NAK

        Raises:
            ProtocolError: If the device is not configured or `endpoint` is not interrupt-IN
        """
        if self.device is None or not self.configured:
            raise ProtocolError("Polling a device that is not configured", {"endpoint": endpoint})
        ep = self.device.descriptors.configuration.endpoint(endpoint, is_in=True)
        if ep is None or ep.transfer_type is not TransferType.INTERRUPT:
            raise ProtocolError(f"EP{endpoint} is not an interrupt IN endpoint", {"endpoint": endpoint})

        if self.watchdog.check(self.clock.now):
            self.unresponsive = True
            self.record(PacketKind.NAK, endpoint, annotation=UNRESPONSIVE)
            return None
        if self._report is None:
            self.record(PacketKind.NAK, endpoint)
            return None
        data = self._report[: ep.max_packet_size]
        self._report = None
        note = ""
        if self._pending_overwrites:
            note = f"overwrote {self._pending_overwrites} report(s)"
            self._pending_overwrites = 0
        self.record(PacketKind.DATA_IN, endpoint, data, annotation=note)
        return data

    def control_transfer(self, req: SetupRequest) -> bytes:
        """Run a control transfer on EP0 and return at most wLength bytes.

        Raises:
            BusStateError: If no device is attached
            ProtocolError: If the device stalls the request
        """
        device = self._require_device()
        self.record(PacketKind.SETUP, 0, req.serialize(), annotation=req.describe())
        try:
            response = self._handle_request(device, req)
        except (ProtocolError, DescriptorError) as e:
            self.record(PacketKind.STALL, 0, annotation=req.describe())
            log_struct(logger, {"event": "stall", "request": req.describe(), "reason": str(e)}, severity="WARNING")
            if isinstance(e, ProtocolError):
                raise
            raise ProtocolError(f"Request stalled: {e}", {"request": req.describe()}) from e
        data = response[: req.w_length]
        self.record(PacketKind.DATA_IN, 0, data, annotation="" if req.device_to_host else "status")
        if not req.device_to_host and req.b_request == StandardRequest.SET_CONFIGURATION and self.configured:
            device.on_configured()
        return data

    def _handle_request(self, device: UsbDevice, req: SetupRequest) -> bytes:
        descriptors = device.descriptors
        request = req.b_request
        if request == StandardRequest.GET_DESCRIPTOR and req.device_to_host:
            kind, index = req.w_value >> 8, req.w_value & 0xFF
            if kind == DescriptorType.DEVICE:
                return descriptors.device.serialize()
            if kind == DescriptorType.CONFIGURATION:
                return descriptors.configuration.serialize()
            if kind == DescriptorType.STRING:
                return descriptors.strings.descriptor(index)
            if kind == DescriptorType.REPORT:
                return descriptors.report.serialize()
            if kind == DescriptorType.HID:
                return descriptors.configuration.hid.serialize()
            raise ProtocolError(f"Unknown descriptor type 0x{kind:02X}")
        if request == StandardRequest.SET_ADDRESS and not req.device_to_host:
            if self.state not in (DeviceState.DEFAULT, DeviceState.ADDRESS):
                raise ProtocolError("SET_ADDRESS outside the Default/Address states", {"state": self.state.name})
            self.address = req.w_value & 0x7F
            self.state = DeviceState.ADDRESS if self.address else DeviceState.DEFAULT
            return b""
        if request == StandardRequest.SET_CONFIGURATION and not req.device_to_host:
            if self.state not in (DeviceState.ADDRESS, DeviceState.CONFIGURED):
                raise ProtocolError("SET_CONFIGURATION before SET_ADDRESS", {"state": self.state.name})
            value = req.w_value & 0xFF
            if value == 0:
                self.configuration_value = 0
                self.state = DeviceState.ADDRESS
                return b""
            if value != descriptors.configuration.configuration.configuration_value:
                raise ProtocolError("Unknown configuration", {"value": value})
            self.configuration_value = value
            self.state = DeviceState.CONFIGURED
            log_struct(logger, {"event": "configured", "t_us": self.clock.now, "address": self.address})
            return b""
        if request == StandardRequest.GET_CONFIGURATION and req.device_to_host:
            return bytes([self.configuration_value])
        if request == StandardRequest.GET_STATUS and req.device_to_host:
            cfg = descriptors.configuration.configuration
            status = (1 if cfg.self_powered else 0) | (2 if cfg.remote_wakeup else 0)
            return status.to_bytes(2, "little")
        raise ProtocolError(f"Unsupported request {req.describe()}", {"bmRequestType": req.bm_request_type})

    def run_until(self, t_end: int) -> int:
        return self.clock.run_until(t_end)
