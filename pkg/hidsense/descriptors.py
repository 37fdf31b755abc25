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
USB descriptor set of the sensor: build, byte-exact serialization, parsing and
annotated rendering.

Fixed-layout descriptors (device, configuration, interface, HID, endpoint) are
described by a LAYOUT table of (field name, attribute, byte width) that drives
serialization, parsing and annotation alike. The HID report descriptor is a
stream of short items decoded by `parse_report_descriptor`.
"""

import logging
from enum import IntEnum
from typing import Any, ClassVar, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from hidsense import config
from hidsense.utils.errors import DescriptorError

logger = logging.getLogger(__name__)

USB_2_0 = 0x0200
HID_1_01 = 0x0101
HID_INTERFACE_CLASS = 0x03
LANGID_EN_US = 0x0409
MAX_STRING_CHARS = 126
LONG_ITEM_PREFIX = 0xFE


class DescriptorType(IntEnum):
    DEVICE = 0x01
    CONFIGURATION = 0x02
    STRING = 0x03
    INTERFACE = 0x04
    ENDPOINT = 0x05
    HID = 0x21
    REPORT = 0x22


class TransferType(IntEnum):
    CONTROL = 0
    ISOCHRONOUS = 1
    BULK = 2
    INTERRUPT = 3


class FieldRow(BaseModel):
    """One line of an annotated descriptor dump."""

    offset: int
    hex: str
    name: str
    value: str


_Layout = tuple[tuple[str, str, int], ...]
_D = TypeVar("_D", bound="_FixedDescriptor")


class _FixedDescriptor(BaseModel):
    model_config = ConfigDict(frozen=True)

    DESCRIPTOR_TYPE: ClassVar[DescriptorType]
    LAYOUT: ClassVar[_Layout]

    @classmethod
    def length(cls) -> int:
        return 2 + sum(size for _, _, size in cls.LAYOUT)

    def _raw_values(self) -> list[tuple[str, int, int]]:
        return [(name, int(getattr(self, attr)), size) for name, attr, size in self.LAYOUT]

    def serialize(self) -> bytes:
        out = bytearray([self.length(), self.DESCRIPTOR_TYPE])
        for name, value, size in self._raw_values():
            if not 0 <= value < 1 << (8 * size):
                raise DescriptorError(
                    f"{name} does not fit in {size} byte(s)", field=name, details={"value": value}
                )
            out += value.to_bytes(size, "little")
        return bytes(out)

    @classmethod
    def from_bytes(cls: type[_D], data: bytes) -> _D:
        length = cls.length()
        if len(data) < 2 or data[0] != length or len(data) < length:
            raise DescriptorError(
                f"{cls.__name__} needs {length} bytes",
                field="bLength",
                details={"bLength": data[0] if data else None, "available": len(data)},
            )
        if data[1] != cls.DESCRIPTOR_TYPE:
            raise DescriptorError(
                f"Expected descriptor type 0x{cls.DESCRIPTOR_TYPE:02X}, got 0x{data[1]:02X}",
                field="bDescriptorType",
            )
        values: dict[str, int] = {}
        offset = 2
        for _, attr, size in cls.LAYOUT:
            values[attr] = int.from_bytes(data[offset : offset + size], "little")
            offset += size
        try:
            return cls(**values)
        except ValidationError as e:
            raise DescriptorError(f"Invalid {cls.__name__}: {e}") from e

    def field_rows(self, base: int = 0) -> list[FieldRow]:
        rows = [
            FieldRow(offset=base, hex=f"{self.length():02X}", name="bLength", value=str(self.length())),
            FieldRow(
                offset=base + 1,
                hex=f"{self.DESCRIPTOR_TYPE:02X}",
                name="bDescriptorType",
                value=self.DESCRIPTOR_TYPE.name,
            ),
        ]
        offset = base + 2
        for name, value, size in self._raw_values():
            raw = value.to_bytes(size, "little") if 0 <= value < 1 << (8 * size) else b""
            rows.append(
                FieldRow(offset=offset, hex=raw.hex(" ").upper(), name=name, value=self._describe(name, value))
            )
            offset += size
        return rows

    def _describe(self, name: str, value: int) -> str:
        if name.startswith(("bcd", "id")):
            return f"0x{value:04X}"
        if name in ("bmAttributes", "bEndpointAddress"):
            return f"0x{value:02X}"
        return str(value)


class DeviceDescriptor(_FixedDescriptor):
    """Standard 18-byte device descriptor."""

    DESCRIPTOR_TYPE = DescriptorType.DEVICE
    LAYOUT = (
        ("bcdUSB", "bcd_usb", 2),
        ("bDeviceClass", "device_class", 1),
        ("bDeviceSubClass", "device_subclass", 1),
        ("bDeviceProtocol", "device_protocol", 1),
        ("bMaxPacketSize0", "max_packet_size0", 1),
        ("idVendor", "vid", 2),
        ("idProduct", "pid", 2),
        ("bcdDevice", "bcd_device", 2),
        ("iManufacturer", "i_manufacturer", 1),
        ("iProduct", "i_product", 1),
        ("iSerialNumber", "i_serial", 1),
        ("bNumConfigurations", "num_configurations", 1),
    )

    bcd_usb: int = USB_2_0
    device_class: int = 0
    device_subclass: int = 0
    device_protocol: int = 0
    max_packet_size0: int = 8
    vid: int = config.DEVICE_VENDOR_ID
    pid: int = config.DEVICE_PRODUCT_ID
    bcd_device: int = 0x0001
    i_manufacturer: int = 1
    i_product: int = 2
    i_serial: int = 0
    num_configurations: int = 1


class ConfigurationDescriptor(_FixedDescriptor):
    DESCRIPTOR_TYPE = DescriptorType.CONFIGURATION
    LAYOUT = (
        ("wTotalLength", "total_length", 2),
        ("bNumInterfaces", "num_interfaces", 1),
        ("bConfigurationValue", "configuration_value", 1),
        ("iConfiguration", "i_configuration", 1),
        ("bmAttributes", "attributes", 1),
        ("bMaxPower", "max_power", 1),
    )

    total_length: int = 0
    num_interfaces: int = 1
    configuration_value: int = 1
    i_configuration: int = 0
    attributes: int = 0xA0
    max_power: int = 50

    @property
    def self_powered(self) -> bool:
        return bool(self.attributes & 0x40)

    @property
    def remote_wakeup(self) -> bool:
        return bool(self.attributes & 0x20)


class InterfaceDescriptor(_FixedDescriptor):
    DESCRIPTOR_TYPE = DescriptorType.INTERFACE
    LAYOUT = (
        ("bInterfaceNumber", "number", 1),
        ("bAlternateSetting", "alternate_setting", 1),
        ("bNumEndpoints", "num_endpoints", 1),
        ("bInterfaceClass", "interface_class", 1),
        ("bInterfaceSubClass", "interface_subclass", 1),
        ("bInterfaceProtocol", "interface_protocol", 1),
        ("iInterface", "i_interface", 1),
    )

    number: int = 0
    alternate_setting: int = 0
    num_endpoints: int = 0
    interface_class: int = HID_INTERFACE_CLASS
    interface_subclass: int = 0
    interface_protocol: int = 0
    i_interface: int = 0


class HidDescriptor(_FixedDescriptor):
    """HID class descriptor announcing one report descriptor."""

    DESCRIPTOR_TYPE = DescriptorType.HID
    LAYOUT = (
        ("bcdHID", "bcd_hid", 2),
        ("bCountryCode", "country_code", 1),
        ("bNumDescriptors", "num_descriptors", 1),
        ("bDescriptorType", "report_type", 1),
        ("wDescriptorLength", "report_length", 2),
    )

    bcd_hid: int = HID_1_01
    country_code: int = 0
    num_descriptors: int = 1
    report_type: int = DescriptorType.REPORT
    report_length: int = 0


class EndpointDescriptor(_FixedDescriptor):
    DESCRIPTOR_TYPE = DescriptorType.ENDPOINT
    LAYOUT = (
        ("bEndpointAddress", "address", 1),
        ("bmAttributes", "transfer_type", 1),
        ("wMaxPacketSize", "max_packet_size", 2),
        ("bInterval", "interval_ms", 1),
    )

    address: int
    transfer_type: TransferType = TransferType.INTERRUPT
    max_packet_size: int = 4
    interval_ms: int = 1

    @property
    def number(self) -> int:
        return self.address & 0x0F

    @property
    def is_in(self) -> bool:
        return bool(self.address & 0x80)


class ConfigurationTree(BaseModel):
    """Configuration descriptor with its single HID interface and endpoints."""

    model_config = ConfigDict(frozen=True)

    configuration: ConfigurationDescriptor
    interface: InterfaceDescriptor
    hid: HidDescriptor
    endpoints: tuple[EndpointDescriptor, ...]

    @classmethod
    def build(
        cls,
        configuration: ConfigurationDescriptor,
        interface: InterfaceDescriptor,
        hid: HidDescriptor,
        endpoints: tuple[EndpointDescriptor, ...],
    ) -> "ConfigurationTree":
        """Assemble a tree, filling in wTotalLength, bNumInterfaces and bNumEndpoints."""
        return cls(
            configuration=configuration.model_copy(
                update={"total_length": cls.expected_total_length(len(endpoints)), "num_interfaces": 1}
            ),
            interface=interface.model_copy(update={"num_endpoints": len(endpoints)}),
            hid=hid,
            endpoints=endpoints,
        )

    @staticmethod
    def expected_total_length(endpoint_count: int) -> int:
        return (
            ConfigurationDescriptor.length()
            + InterfaceDescriptor.length()
            + HidDescriptor.length()
            + EndpointDescriptor.length() * endpoint_count
        )

    @property
    def total_length(self) -> int:
        return self.configuration.total_length

    def endpoint(self, number: int, is_in: bool) -> EndpointDescriptor | None:
        for ep in self.endpoints:
            if ep.number == number and ep.is_in == is_in:
                return ep
        return None

    def serialize(self) -> bytes:
        expected = self.expected_total_length(len(self.endpoints))
        if self.configuration.total_length != expected:
            raise DescriptorError(
                "wTotalLength does not match the tree",
                field="wTotalLength",
                details={"declared": self.configuration.total_length, "expected": expected},
            )
        if self.interface.num_endpoints != len(self.endpoints):
            raise DescriptorError(
                "bNumEndpoints does not match the endpoint list", field="bNumEndpoints"
            )
        return b"".join(
            [
                self.configuration.serialize(),
                self.interface.serialize(),
                self.hid.serialize(),
                *(ep.serialize() for ep in self.endpoints),
            ]
        )

    def parts(self) -> list[_FixedDescriptor]:
        return [self.configuration, self.interface, self.hid, *self.endpoints]


# ---------------------------------------------------------------------------
# HID report descriptor
# ---------------------------------------------------------------------------


class ItemType(IntEnum):
    MAIN = 0
    GLOBAL = 1
    LOCAL = 2
    RESERVED = 3


_ITEM_NAMES: dict[tuple[ItemType, int], str] = {
    (ItemType.MAIN, 0x8): "INPUT",
    (ItemType.MAIN, 0x9): "OUTPUT",
    (ItemType.MAIN, 0xA): "COLLECTION",
    (ItemType.MAIN, 0xB): "FEATURE",
    (ItemType.MAIN, 0xC): "END_COLLECTION",
    (ItemType.GLOBAL, 0x0): "USAGE_PAGE",
    (ItemType.GLOBAL, 0x1): "LOGICAL_MINIMUM",
    (ItemType.GLOBAL, 0x2): "LOGICAL_MAXIMUM",
    (ItemType.GLOBAL, 0x3): "PHYSICAL_MINIMUM",
    (ItemType.GLOBAL, 0x4): "PHYSICAL_MAXIMUM",
    (ItemType.GLOBAL, 0x5): "UNIT_EXPONENT",
    (ItemType.GLOBAL, 0x6): "UNIT",
    (ItemType.GLOBAL, 0x7): "REPORT_SIZE",
    (ItemType.GLOBAL, 0x8): "REPORT_ID",
    (ItemType.GLOBAL, 0x9): "REPORT_COUNT",
    (ItemType.GLOBAL, 0xA): "PUSH",
    (ItemType.GLOBAL, 0xB): "POP",
    (ItemType.LOCAL, 0x0): "USAGE",
    (ItemType.LOCAL, 0x1): "USAGE_MINIMUM",
    (ItemType.LOCAL, 0x2): "USAGE_MAXIMUM",
    (ItemType.LOCAL, 0x3): "DESIGNATOR_INDEX",
    (ItemType.LOCAL, 0x7): "STRING_INDEX",
    (ItemType.LOCAL, 0xA): "DELIMITER",
}

_SIZE_CODES = {0: 0, 1: 1, 2: 2, 4: 3}
_COLLECTION_KINDS = ("Physical", "Application", "Logical", "Report", "Named Array", "Usage Switch", "Usage Modifier")


class HidItem(BaseModel):
    """A short item: 1 prefix byte plus 0, 1, 2 or 4 little-endian data bytes."""

    model_config = ConfigDict(frozen=True)

    tag: int = Field(ge=0, le=0xF)
    type: ItemType
    size: int
    data: int = Field(default=0, ge=0)

    @property
    def prefix(self) -> int:
        return (self.tag << 4) | (self.type << 2) | _SIZE_CODES[self.size]

    @property
    def name(self) -> str:
        return _ITEM_NAMES.get((self.type, self.tag), f"{self.type.name}_{self.tag:X}")

    def serialize(self) -> bytes:
        if self.size not in _SIZE_CODES:
            raise DescriptorError("HID item size must be 0, 1, 2 or 4", field="bSize", details={"size": self.size})
        if self.data >= 1 << (8 * self.size):
            raise DescriptorError(
                f"{self.name} data does not fit in {self.size} byte(s)", field=self.name, details={"data": self.data}
            )
        return bytes([self.prefix]) + self.data.to_bytes(self.size, "little")

    def describe(self) -> str:
        if self.type is ItemType.MAIN and self.tag in (0x8, 0x9, 0xB):
            return ",".join(
                (
                    "Const" if self.data & 0x01 else "Data",
                    "Var" if self.data & 0x02 else "Array",
                    "Rel" if self.data & 0x04 else "Abs",
                )
            )
        if self.name == "COLLECTION":
            return _COLLECTION_KINDS[self.data] if self.data < len(_COLLECTION_KINDS) else f"0x{self.data:02X}"
        if self.name == "USAGE_PAGE" and self.data >= 0xFF00:
            return f"0x{self.data:04X} (Vendor Defined)"
        if self.size == 0:
            return ""
        return str(self.data)


def short_item(name: str, data: int = 0, size: int | None = None) -> HidItem:
    """Build an item by name, picking the smallest size that holds `data`."""
    for (item_type, tag), item_name in _ITEM_NAMES.items():
        if item_name == name:
            break
    else:
        raise DescriptorError(f"Unknown HID item {name!r}", field=name)
    if size is None:
        size = 0 if data == 0 and name in ("END_COLLECTION", "PUSH", "POP") else 1
        while data >= 1 << (8 * size) and size < 4:
            size = 4 if size == 2 else size + 1
    return HidItem(tag=tag, type=item_type, size=size, data=data)


class ReportDescriptor(BaseModel):
    """Ordered HID items plus the per-direction report byte totals."""

    model_config = ConfigDict(frozen=True)

    items: tuple[HidItem, ...]
    input_report_bytes: int = 0
    output_report_bytes: int = 0
    feature_report_bytes: int = 0

    @classmethod
    def from_items(cls, items: tuple[HidItem, ...] | list[HidItem]) -> "ReportDescriptor":
        return parse_report_descriptor(b"".join(item.serialize() for item in items))

    def serialize(self) -> bytes:
        return b"".join(item.serialize() for item in self.items)

    @property
    def summary(self) -> tuple[int, int, int]:
        return (self.input_report_bytes, self.output_report_bytes, self.feature_report_bytes)

    def field_rows(self, base: int = 0) -> list[FieldRow]:
        rows = []
        offset = base
        for item in self.items:
            raw = item.serialize()
            rows.append(FieldRow(offset=offset, hex=raw.hex(" ").upper(), name=item.name, value=item.describe()))
            offset += len(raw)
        return rows


def parse_report_descriptor(data: bytes) -> ReportDescriptor:
    """Decode a short-item report descriptor and total its report sizes.

    Every INPUT, OUTPUT or FEATURE item adds REPORT_SIZE * REPORT_COUNT / 8
    bytes to its direction. PUSH and POP save and restore the global state.

    Raises:
        DescriptorError: On truncated items, long items or unbalanced collections
    """
    items: list[HidItem] = []
    globals_: dict[str, int] = {}
    stack: list[dict[str, int]] = []
    totals = {"INPUT": 0, "OUTPUT": 0, "FEATURE": 0}
    depth = 0
    pos = 0
    while pos < len(data):
        prefix = data[pos]
        if prefix == LONG_ITEM_PREFIX:
            raise DescriptorError("Long items are not supported", field="prefix", details={"offset": pos})
        size = (0, 1, 2, 4)[prefix & 0x03]
        if pos + 1 + size > len(data):
            raise DescriptorError(
                f"Truncated {size}-byte item",
                field="prefix",
                details={"offset": pos, "prefix": f"0x{prefix:02X}"},
            )
        item = HidItem(
            tag=prefix >> 4,
            type=ItemType((prefix >> 2) & 0x03),
            size=size,
            data=int.from_bytes(data[pos + 1 : pos + 1 + size], "little"),
        )
        items.append(item)
        pos += 1 + size

        name = item.name
        if item.type is ItemType.GLOBAL:
            if name == "PUSH":
                stack.append(dict(globals_))
            elif name == "POP":
                if not stack:
                    raise DescriptorError("POP without PUSH", field="POP", details={"offset": pos - 1})
                globals_ = stack.pop()
            else:
                globals_[name] = item.data
        elif name == "COLLECTION":
            depth += 1
        elif name == "END_COLLECTION":
            if depth == 0:
                raise DescriptorError(
                    "END_COLLECTION without COLLECTION", field="END_COLLECTION", details={"offset": pos - 1}
                )
            depth -= 1
        elif name in totals:
            bits = globals_.get("REPORT_SIZE", 0) * globals_.get("REPORT_COUNT", 0)
            totals[name] += bits // 8
    if depth:
        raise DescriptorError("Unclosed COLLECTION", field="COLLECTION", details={"open": depth})
    return ReportDescriptor(
        items=tuple(items),
        input_report_bytes=totals["INPUT"],
        output_report_bytes=totals["OUTPUT"],
        feature_report_bytes=totals["FEATURE"],
    )


# ---------------------------------------------------------------------------
# Strings
# ---------------------------------------------------------------------------


def encode_string_descriptor(s: str) -> bytes:
    units = s.encode("utf-16-le")
    if len(units) // 2 > MAX_STRING_CHARS:
        raise DescriptorError(
            f"String longer than {MAX_STRING_CHARS} UTF-16 units", field="bString", details={"length": len(units) // 2}
        )
    return bytes([2 + len(units), DescriptorType.STRING]) + units


def decode_string_descriptor(data: bytes) -> str:
    if len(data) < 2 or data[0] != len(data) or data[0] % 2:
        raise DescriptorError("String descriptor length mismatch", field="bLength", details={"available": len(data)})
    if data[1] != DescriptorType.STRING:
        raise DescriptorError("Not a string descriptor", field="bDescriptorType")
    try:
        return data[2:].decode("utf-16-le")
    except UnicodeDecodeError as e:
        raise DescriptorError(f"Invalid UTF-16 string: {e}", field="bString") from e


def encode_langid_descriptor(lang_ids: tuple[int, ...]) -> bytes:
    body = b"".join(lang.to_bytes(2, "little") for lang in lang_ids)
    return bytes([2 + len(body), DescriptorType.STRING]) + body


def decode_langid_descriptor(data: bytes) -> tuple[int, ...]:
    if len(data) < 2 or data[0] != len(data) or data[0] % 2 or data[1] != DescriptorType.STRING:
        raise DescriptorError("Malformed LangID descriptor", field="bLength")
    return tuple(int.from_bytes(data[i : i + 2], "little") for i in range(2, len(data), 2))


class StringDescriptorTable(BaseModel):
    model_config = ConfigDict(frozen=True)

    lang_ids: tuple[int, ...] = (LANGID_EN_US,)
    strings: dict[int, str] = Field(default_factory=dict)

    def descriptor(self, index: int) -> bytes:
        if index == 0:
            return encode_langid_descriptor(self.lang_ids)
        if index not in self.strings:
            raise DescriptorError(f"No string at index {index}", field="iString", details={"index": index})
        return encode_string_descriptor(self.strings[index])

    def indices(self) -> list[int]:
        return [0, *sorted(self.strings)]


# ---------------------------------------------------------------------------
# Descriptor set
# ---------------------------------------------------------------------------


class HidProfile(BaseModel):
    """Settings a HID descriptor generator asks for."""

    model_config = ConfigDict(frozen=True)

    vendor_name: str = "mikroElektronika"
    product_name: str = "mikroC HID Library test"
    serial_number: str | None = None
    vendor_id: int = Field(default=config.DEVICE_VENDOR_ID, ge=0, le=0xFFFF)
    product_id: int = Field(default=config.DEVICE_PRODUCT_ID, ge=0, le=0xFFFF)
    version: int = Field(default=0x0001, ge=0, le=0xFFFF)
    ep0_packet_size: int = 8
    packet_size: int = Field(default=4, ge=1, le=64)
    interval_ms: int = Field(default=1, ge=1, le=255)
    bus_powered: bool = True
    remote_wakeup: bool = True
    max_power_ma: int = Field(default=100, ge=0, le=500)
    usage_page: int = 0xFFA0
    usage: int = 0x01
    input_report_bytes: int = Field(default=4, ge=0, le=255)
    output_report_bytes: int = Field(default=4, ge=0, le=255)
    feature_report_bytes: int = Field(default=2, ge=0, le=255)


SENSOR_PROFILE = HidProfile()


class DescriptorSet(BaseModel):
    model_config = ConfigDict(frozen=True)

    device: DeviceDescriptor
    configuration: ConfigurationTree
    report: ReportDescriptor
    strings: StringDescriptorTable

    def named_blobs(self) -> dict[str, bytes]:
        """Serialized descriptors keyed by dump file stem."""
        blobs = {
            "device": self.device.serialize(),
            "configuration": self.configuration.serialize(),
            "report": self.report.serialize(),
        }
        for index in self.strings.indices():
            blobs[f"string{index}"] = self.strings.descriptor(index)
        return blobs


def _report_block(usage: int, report_bytes: int, main: str) -> list[HidItem]:
    return [
        short_item("USAGE", usage),
        short_item("LOGICAL_MINIMUM", 0),
        short_item("LOGICAL_MAXIMUM", 255, size=2),
        short_item("REPORT_SIZE", 8),
        short_item("REPORT_COUNT", report_bytes),
        short_item(main, 0x02),
    ]


def build_descriptor_set(profile: HidProfile) -> DescriptorSet:
    """Generate the descriptor set for a vendor-defined HID device."""
    items = [
        short_item("USAGE_PAGE", profile.usage_page),
        short_item("USAGE", profile.usage),
        short_item("COLLECTION", 0x01),
    ]
    for usage, count, main in (
        (0x03, profile.input_report_bytes, "INPUT"),
        (0x04, profile.output_report_bytes, "OUTPUT"),
        (0x05, profile.feature_report_bytes, "FEATURE"),
    ):
        if count:
            items += _report_block(usage, count, main)
    items.append(short_item("END_COLLECTION"))
    report = ReportDescriptor.from_items(items)

    strings = {1: profile.vendor_name, 2: profile.product_name}
    if profile.serial_number:
        strings[3] = profile.serial_number
    device = DeviceDescriptor(
        max_packet_size0=profile.ep0_packet_size,
        vid=profile.vendor_id,
        pid=profile.product_id,
        bcd_device=profile.version,
        i_serial=3 if profile.serial_number else 0,
    )
    attributes = 0x80 | (0 if profile.bus_powered else 0x40) | (0x20 if profile.remote_wakeup else 0)
    endpoints = (
        EndpointDescriptor(address=0x81, max_packet_size=profile.packet_size, interval_ms=profile.interval_ms),
        EndpointDescriptor(address=0x01, max_packet_size=profile.packet_size, interval_ms=profile.interval_ms),
    )
    tree = ConfigurationTree.build(
        ConfigurationDescriptor(attributes=attributes, max_power=profile.max_power_ma // 2),
        InterfaceDescriptor(),
        HidDescriptor(report_length=len(report.serialize())),
        endpoints,
    )
    return DescriptorSet(
        device=device,
        configuration=tree,
        report=report,
        strings=StringDescriptorTable(strings=strings),
    )


def build_paper_descriptor_set() -> DescriptorSet:
    return build_descriptor_set(SENSOR_PROFILE)


def serialize(d: Any) -> bytes:
    """Serialize any descriptor object, or a string as a string descriptor."""
    if isinstance(d, str):
        return encode_string_descriptor(d)
    if isinstance(d, (_FixedDescriptor, ConfigurationTree, ReportDescriptor, HidItem)):
        return d.serialize()
    raise DescriptorError(f"Cannot serialize {type(d).__name__}")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


def parse_device_descriptor(data: bytes) -> DeviceDescriptor:
    if len(data) != DeviceDescriptor.length():
        raise DescriptorError(
            "Device descriptor must be 18 bytes", field="bLength", details={"available": len(data)}
        )
    return DeviceDescriptor.from_bytes(data)


def parse_hid_descriptor(data: bytes) -> HidDescriptor:
    hid = HidDescriptor.from_bytes(data)
    if hid.num_descriptors != 1:
        raise DescriptorError("Only one class descriptor is supported", field="bNumDescriptors")
    return hid


def parse_configuration_tree(data: bytes, strict: bool = True) -> ConfigurationTree:
    """Walk a configuration descriptor and its subordinates by bLength.

    Args:
        data: Configuration descriptor followed by interface, HID and endpoint descriptors
        strict: Reject unknown descriptor types instead of skipping them

    Raises:
        DescriptorError: On missing parts, truncation or a wTotalLength mismatch
    """
    if len(data) < 2 or data[1] != DescriptorType.CONFIGURATION:
        raise DescriptorError("Missing configuration descriptor", field="bDescriptorType")
    configuration = ConfigurationDescriptor.from_bytes(data)
    if configuration.total_length != len(data):
        raise DescriptorError(
            "wTotalLength does not match the descriptor bytes",
            field="wTotalLength",
            details={"declared": configuration.total_length, "actual": len(data)},
        )
    interface: InterfaceDescriptor | None = None
    hid: HidDescriptor | None = None
    endpoints: list[EndpointDescriptor] = []
    pos = configuration.length()
    while pos < len(data):
        length = data[pos]
        if length < 2 or pos + length > len(data):
            raise DescriptorError("Truncated descriptor", field="bLength", details={"offset": pos})
        chunk = data[pos : pos + length]
        kind = chunk[1]
        if kind == DescriptorType.INTERFACE:
            if interface is not None:
                raise DescriptorError("Only one interface is supported", field="bInterfaceNumber")
            interface = InterfaceDescriptor.from_bytes(chunk)
        elif kind == DescriptorType.HID:
            hid = parse_hid_descriptor(chunk)
        elif kind == DescriptorType.ENDPOINT:
            endpoints.append(EndpointDescriptor.from_bytes(chunk))
        elif strict:
            raise DescriptorError(
                f"Unknown descriptor type 0x{kind:02X}", field="bDescriptorType", details={"offset": pos}
            )
        else:
            logger.warning(f"Skipping unknown descriptor type 0x{kind:02X} at offset {pos}")
        pos += length

    if interface is None or hid is None:
        raise DescriptorError("Configuration lacks an interface or HID descriptor", field="bDescriptorType")
    if interface.num_endpoints != len(endpoints):
        raise DescriptorError(
            "bNumEndpoints does not match the endpoint descriptors",
            field="bNumEndpoints",
            details={"declared": interface.num_endpoints, "found": len(endpoints)},
        )
    if configuration.num_interfaces != 1:
        raise DescriptorError("bNumInterfaces must be 1", field="bNumInterfaces")
    return ConfigurationTree(
        configuration=configuration, interface=interface, hid=hid, endpoints=tuple(endpoints)
    )


ParsedDescriptor = DeviceDescriptor | ConfigurationTree | ReportDescriptor | str | tuple[int, ...]


def parse_descriptor(data: bytes, kind: str | None = None, strict: bool = True) -> ParsedDescriptor:
    """Parse `data` as `kind`, or guess it from bDescriptorType.

    A string descriptor whose index is unknown is decoded as text; an explicit
    kind of "langid" decodes the language list. Anything that does not look
    like a standard descriptor is treated as a report descriptor.
    """
    if kind is None:
        kinds: dict[int, str] = {
            DescriptorType.DEVICE: "device",
            DescriptorType.CONFIGURATION: "configuration",
            DescriptorType.STRING: "string",
        }
        # A standard type byte wins even when bLength overruns the buffer.
        kind = kinds.get(data[1], "report") if len(data) >= 2 else "report"
    if kind == "device":
        return parse_device_descriptor(data)
    if kind == "configuration":
        return parse_configuration_tree(data, strict=strict)
    if kind == "string":
        return decode_string_descriptor(data)
    if kind == "langid":
        return decode_langid_descriptor(data)
    if kind == "report":
        return parse_report_descriptor(data)
    raise DescriptorError(f"Unknown descriptor kind {kind!r}")


def annotate(d: ParsedDescriptor | _FixedDescriptor) -> list[FieldRow]:
    """Offset / hex / field / value rows for any parsed descriptor."""
    if isinstance(d, (_FixedDescriptor, ReportDescriptor)):
        return d.field_rows()
    if isinstance(d, ConfigurationTree):
        rows: list[FieldRow] = []
        offset = 0
        for part in d.parts():
            rows += part.field_rows(offset)
            offset += part.length()
        return rows
    if isinstance(d, str):
        raw = encode_string_descriptor(d)
        return [
            FieldRow(offset=0, hex=f"{raw[0]:02X}", name="bLength", value=str(raw[0])),
            FieldRow(offset=1, hex=f"{raw[1]:02X}", name="bDescriptorType", value="STRING"),
            FieldRow(offset=2, hex=raw[2:].hex(" ").upper(), name="bString", value=repr(d)),
        ]
    raw = encode_langid_descriptor(d)
    return [
        FieldRow(offset=0, hex=f"{raw[0]:02X}", name="bLength", value=str(raw[0])),
        FieldRow(offset=1, hex=f"{raw[1]:02X}", name="bDescriptorType", value="STRING"),
        *(
            FieldRow(offset=2 + 2 * i, hex=lang.to_bytes(2, "little").hex(" ").upper(), name="wLANGID", value=f"0x{lang:04X}")
            for i, lang in enumerate(d)
        ),
    ]
