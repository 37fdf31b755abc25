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
Virtual host: a HID controller with the mcHID.dll surface (enumeration,
VID/PID lookup, read notification) and the monitor form that turns its events
into status and temperature readouts.
"""

import csv
import logging
import re
from collections.abc import Callable
from enum import IntEnum
from pathlib import Path

from pydantic import BaseModel, ConfigDict

from hidsense import config
from hidsense.bus import EventHandle, SetupRequest, UsbBus
from hidsense.descriptors import (
    DescriptorType,
    decode_langid_descriptor,
    decode_string_descriptor,
    parse_configuration_tree,
    parse_device_descriptor,
    parse_report_descriptor,
)
from hidsense.utils.errors import DescriptorError, EnumerationError, HidSenseError, ReportDecodeError
from hidsense.utils.files import ensure_parent_dir
from hidsense.utils.log import log_struct

logger = logging.getLogger(__name__)

STATUS_CONNECTED = "Connected to HID..."
STATUS_PLUGGED = "USB Plugged....."
STATUS_UNPLUGGED = "USB Unplugged...."
BAR_MAX = 500
REPORT_TEXT_LENGTH = 4

_INTEGER_RE = re.compile(r"-?[0-9]+")


class HostEventKind(IntEnum):
    PLUGGED = 1
    UNPLUGGED = 2
    CHANGED = 3
    READ = 4


class HostEvent(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: HostEventKind
    handle: int
    vid: int = 0
    pid: int = 0
    payload: bytes = b""
    time: int = 0


class DeviceInfo(BaseModel):
    model_config = ConfigDict(frozen=True)

    handle: int
    vid: int
    pid: int
    version: int = 0
    manufacturer: str = ""
    product: str = ""
    serial_number: str = ""
    input_report_length: int = 0
    output_report_length: int = 0
    in_endpoint: int = 1


class Reading(BaseModel):
    model_config = ConfigDict(frozen=True)

    time_us: int
    text: str
    value: int | None


class DisplayState(BaseModel):
    model_config = ConfigDict(frozen=True)

    status_line: str = STATUS_CONNECTED
    temperature_text: str = ""
    temperature_int: int | None = None
    history: tuple[Reading, ...] = ()


def decode_report(payload: bytes) -> tuple[str, int | None]:
    """Split a Read buffer into its 4 display characters and their integer value.

    Raises:
        ReportDecodeError: If the buffer is short or carries a report ID
    """
    if len(payload) < 1 + REPORT_TEXT_LENGTH:
        raise ReportDecodeError("Read buffer too short", {"length": len(payload)})
    if payload[0] != 0:
        raise ReportDecodeError("Unexpected report ID", {"report_id": payload[0]})
    text = "".join(chr(b) for b in payload[1 : 1 + REPORT_TEXT_LENGTH])
    trimmed = text.strip(" ")
    value = int(trimmed) if _INTEGER_RE.fullmatch(trimmed) else None
    return text, value


def on_event(
    e: HostEvent,
    state: DisplayState,
    vendor_id: int = config.DEVICE_VENDOR_ID,
    product_id: int = config.DEVICE_PRODUCT_ID,
) -> DisplayState:
    """Fold one controller event into the display state.

    Events for other devices, undecodable reads and unknown kinds leave the
    state unchanged. CHANGED carries no display change; re-arming read
    notification is a side effect performed by the caller.
    """
    matches = e.vid == vendor_id and e.pid == product_id
    if e.kind is HostEventKind.PLUGGED and matches:
        return state.model_copy(update={"status_line": STATUS_PLUGGED})
    if e.kind is HostEventKind.UNPLUGGED and matches:
        return state.model_copy(update={"status_line": STATUS_UNPLUGGED})
    if e.kind is HostEventKind.READ and matches:
        try:
            text, value = decode_report(e.payload)
        except ReportDecodeError as err:
            logger.warning(f"Ignoring read: {err}")
            return state
        return state.model_copy(
            update={
                "temperature_text": text,
                "temperature_int": value,
                "history": (*state.history, Reading(time_us=e.time, text=text, value=value)),
            }
        )
    if e.kind is not HostEventKind.CHANGED and not matches:
        logger.debug(f"Ignoring {e.kind.name} for {e.vid:04X}:{e.pid:04X}")
    return state


def format_time(t_us: int) -> str:
    return f"{t_us / 1_000_000:.3f}s"


def format_reading(reading: Reading) -> str:
    bar = "-" if reading.value is None else str(min(max(reading.value, 0), BAR_MAX))
    return f"{format_time(reading.time_us)} {reading.text} C  [bar: {bar}/{BAR_MAX}]"


def render_status(state: DisplayState) -> list[str]:
    return [*(format_reading(r) for r in state.history), state.status_line]


class HidController:
    """Host HID stack: enumerates the attached device, polls its interrupt-IN
    endpoint and posts PLUGGED / UNPLUGGED / CHANGED / READ notifications.

    Only one device can be attached; handles are never reused.
    """

    def __init__(
        self,
        bus: UsbBus,
        poll_interval_ms: int = config.DEFAULT_HOST_POLL_MS,
        debounce_us: int = config.ATTACH_DEBOUNCE_US,
    ) -> None:
        self.bus = bus
        self.poll_interval_us = poll_interval_ms * 1000
        self.debounce_us = debounce_us
        self.devices: dict[int, DeviceInfo] = {}
        self._read_notify: dict[int, bool] = {}
        self._last_read: dict[int, bytes] = {}
        self._subscribers: list[Callable[[HostEvent], None]] = []
        self._next_handle = 1
        self._next_address = 1
        self._pending: EventHandle | None = None
        self._active: int | None = None
        bus.add_listener(self)

    def subscribe(self, callback: Callable[[HostEvent], None]) -> None:
        self._subscribers.append(callback)

    def _post(self, kind: HostEventKind, info: DeviceInfo, payload: bytes = b"") -> None:
        event = HostEvent(
            kind=kind, handle=info.handle, vid=info.vid, pid=info.pid, payload=payload, time=self.bus.clock.now
        )
        for callback in self._subscribers:
            callback(event)

    # -- bus listener -------------------------------------------------------

    def device_attached(self, bus: UsbBus) -> None:
        self._pending = bus.clock.schedule_in(self.debounce_us, self._open_device)

    def device_detached(self, bus: UsbBus) -> None:
        if self._pending is not None:
            self._pending.cancel()
            self._pending = None
        if self._active is None:
            return
        info = self.devices.pop(self._active)
        self._read_notify.pop(info.handle, None)
        self._last_read.pop(info.handle, None)
        self._active = None
        self._post(HostEventKind.UNPLUGGED, info)
        self._post(HostEventKind.CHANGED, info)

    def _open_device(self) -> None:
        self._pending = None
        try:
            info = self.enumerate()
        except EnumerationError as e:
            log_struct(logger, {"event": "enumeration_failed", "step": e.step, "error": e.message}, severity="ERROR")
            return
        self._post(HostEventKind.PLUGGED, info)
        self._post(HostEventKind.CHANGED, info)
        self._pending = self.bus.clock.schedule_in(self.poll_interval_us, self._poll)

    def _poll(self) -> None:
        self._pending = None
        if self._active is None or not self.bus.configured:
            return
        info = self.devices[self._active]
        data = self.bus.poll_interrupt_in(info.in_endpoint)
        if data is not None:
            buffer = b"\x00" + data
            self._last_read[info.handle] = buffer
            if self._read_notify.get(info.handle):
                self._post(HostEventKind.READ, info, buffer)
        self._pending = self.bus.clock.schedule_in(self.poll_interval_us, self._poll)

    # -- enumeration --------------------------------------------------------

    def _control(self, step: str, request: SetupRequest) -> bytes:
        try:
            return self.bus.control_transfer(request)
        except HidSenseError as e:
            raise EnumerationError(f"{step} failed: {e.message}", step=step) from e

    def enumerate(self) -> DeviceInfo:
        """Enumerate the attached device and register it under a new handle.

        Raises:
            EnumerationError: Naming the step that failed
        """
        if not self.bus.attached:
            raise EnumerationError("No device attached", step="attach")
        self.bus.reset()
        try:
            device = parse_device_descriptor(
                self._control("get_device_descriptor", SetupRequest.get_descriptor(DescriptorType.DEVICE, length=18))
            )
            address = self._next_address
            self._control("set_address", SetupRequest.set_address(address))
            self._next_address = address % 127 + 1

            head = self._control(
                "get_configuration_descriptor", SetupRequest.get_descriptor(DescriptorType.CONFIGURATION, length=9)
            )
            total_length = int.from_bytes(head[2:4], "little") if len(head) >= 4 else 0
            tree = parse_configuration_tree(
                self._control(
                    "get_configuration_descriptor",
                    SetupRequest.get_descriptor(DescriptorType.CONFIGURATION, length=total_length),
                )
            )
            self._control("set_configuration", SetupRequest.set_configuration(tree.configuration.configuration_value))

            report = parse_report_descriptor(
                self._control(
                    "get_report_descriptor",
                    SetupRequest.get_descriptor(DescriptorType.REPORT, length=tree.hid.report_length),
                )
            )

            lang_ids = decode_langid_descriptor(
                self._control("get_string_descriptor", SetupRequest.get_descriptor(DescriptorType.STRING, 0))
            )
        except DescriptorError as e:
            raise EnumerationError(f"Malformed descriptor: {e.message}", step="parse_descriptor") from e
        lang = 0x0409 if 0x0409 in lang_ids else (lang_ids[0] if lang_ids else 0)

        def fetch(index: int) -> str:
            if not index:
                return ""
            raw = self._control("get_string_descriptor", SetupRequest.get_descriptor(DescriptorType.STRING, index, lang=lang))
            try:
                return decode_string_descriptor(raw)
            except DescriptorError as e:
                raise EnumerationError(f"Malformed string {index}: {e.message}", step="get_string_descriptor") from e

        in_endpoint = next((ep.number for ep in tree.endpoints if ep.is_in), 1)
        info = DeviceInfo(
            handle=self._next_handle,
            vid=device.vid,
            pid=device.pid,
            version=device.bcd_device,
            manufacturer=fetch(device.i_manufacturer),
            product=fetch(device.i_product),
            serial_number=fetch(device.i_serial),
            input_report_length=report.input_report_bytes,
            output_report_length=report.output_report_bytes,
            in_endpoint=in_endpoint,
        )
        self._next_handle += 1
        self.devices[info.handle] = info
        self._active = info.handle
        log_struct(
            logger,
            {
                "event": "enumerated",
                "t_us": self.bus.clock.now,
                "handle": info.handle,
                "vid": info.vid,
                "pid": info.pid,
                "product": info.product,
                "input_report_length": info.input_report_length,
            },
        )
        return info

    # -- mcHID surface ------------------------------------------------------

    def get_item_count(self) -> int:
        return len(self.devices)

    def get_item(self, index: int) -> int:
        handles = sorted(self.devices)
        return handles[index] if 0 <= index < len(handles) else 0

    def get_handle(self, vendor_id: int, product_id: int) -> int:
        for info in self.devices.values():
            if info.vid == vendor_id and info.pid == product_id:
                return info.handle
        return 0

    def is_available(self, vendor_id: int, product_id: int) -> bool:
        return self.get_handle(vendor_id, product_id) != 0

    def _info(self, handle: int) -> DeviceInfo | None:
        return self.devices.get(handle)

    def get_vendor_id(self, handle: int) -> int:
        info = self._info(handle)
        return info.vid if info else 0

    def get_product_id(self, handle: int) -> int:
        info = self._info(handle)
        return info.pid if info else 0

    def get_version(self, handle: int) -> int:
        info = self._info(handle)
        return info.version if info else 0

    def get_vendor_name(self, handle: int) -> str:
        info = self._info(handle)
        return info.manufacturer if info else ""

    def get_product_name(self, handle: int) -> str:
        info = self._info(handle)
        return info.product if info else ""

    def get_serial_number(self, handle: int) -> str:
        info = self._info(handle)
        return info.serial_number if info else ""

    def get_input_report_length(self, handle: int) -> int:
        info = self._info(handle)
        return info.input_report_length if info else 0

    def get_output_report_length(self, handle: int) -> int:
        info = self._info(handle)
        return info.output_report_length if info else 0

    def set_read_notify(self, handle: int, value: bool) -> None:
        if handle in self.devices:
            self._read_notify[handle] = value

    def is_read_notify_enabled(self, handle: int) -> bool:
        return self._read_notify.get(handle, False)

    def read(self, handle: int) -> bytes | None:
        """Latest Read buffer (report-ID byte plus report) for `handle`."""
        return self._last_read.get(handle)


class MonitorApp:
    """The monitor form: status label, temperature readout and bar."""

    def __init__(
        self,
        controller: HidController,
        vendor_id: int = config.DEVICE_VENDOR_ID,
        product_id: int = config.DEVICE_PRODUCT_ID,
    ) -> None:
        self.controller = controller
        self.vendor_id = vendor_id
        self.product_id = product_id
        self.state = DisplayState()
        self.transcript: list[str] = [self.state.status_line]
        self.events: list[HostEvent] = []
        controller.subscribe(self.handle)

    def handle(self, e: HostEvent) -> None:
        self.events.append(e)
        previous = self.state
        self.state = on_event(e, previous, self.vendor_id, self.product_id)
        if e.kind is HostEventKind.CHANGED:
            handle = self.controller.get_handle(self.vendor_id, self.product_id)
            if handle:
                self.controller.set_read_notify(handle, True)
        if self.state.status_line != previous.status_line:
            self.transcript.append(self.state.status_line)
        if len(self.state.history) > len(previous.history):
            self.transcript.append(format_reading(self.state.history[-1]))

    @property
    def readings(self) -> tuple[Reading, ...]:
        return self.state.history

    def render(self) -> list[str]:
        return render_status(self.state)

    def export_csv(self, path: str | Path) -> Path:
        target = ensure_parent_dir(path)
        with target.open("w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["time_us", "text", "value"])
            for r in self.state.history:
                writer.writerow([r.time_us, r.text, "" if r.value is None else r.value])
        logger.info(f"Wrote {len(self.state.history)} readings to {target}")
        return target
