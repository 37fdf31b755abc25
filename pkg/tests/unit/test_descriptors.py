"""
Unit Tests for USB descriptors

Covers serialization of the device's descriptor set, the HID report item
parser, string descriptors and the configuration tree walker.

Run tests with:
    pytest tests/unit/test_descriptors.py -v
"""

import logging

import numpy as np
import pytest

from hidsense.descriptors import (
    ConfigurationTree,
    DeviceDescriptor,
    HidProfile,
    ReportDescriptor,
    annotate,
    build_descriptor_set,
    build_paper_descriptor_set,
    decode_langid_descriptor,
    decode_string_descriptor,
    encode_string_descriptor,
    parse_configuration_tree,
    parse_descriptor,
    parse_device_descriptor,
    parse_report_descriptor,
    serialize,
    short_item,
)
from hidsense.utils.errors import DescriptorError

DEVICE_BYTES = bytes.fromhex("12 01 00 02 00 00 00 08 34 12 01 00 01 00 01 02 00 01")
CONFIGURATION_BYTES = bytes.fromhex(
    "09 02 29 00 01 01 00 A0 32"
    "09 04 00 00 02 03 00 00 00"
    "09 21 01 01 00 01 22 2F 00"
    "07 05 81 03 04 00 01"
    "07 05 01 03 04 00 01"
)
REPORT_BYTES = bytes.fromhex(
    "06 A0 FF 09 01 A1 01"
    "09 03 15 00 26 FF 00 75 08 95 04 81 02"
    "09 04 15 00 26 FF 00 75 08 95 04 91 02"
    "09 05 15 00 26 FF 00 75 08 95 02 B1 02"
    "C0"
)


@pytest.fixture
def descriptors():
    return build_paper_descriptor_set()


class TestDescriptorSet:
    """Test the serialized descriptor set of the temperature device."""

    def test_device_descriptor(self, descriptors):
        assert descriptors.device.serialize() == DEVICE_BYTES

    def test_configuration_tree(self, descriptors):
        data = descriptors.configuration.serialize()
        assert data == CONFIGURATION_BYTES
        assert descriptors.configuration.total_length == len(data) == 41

    def test_report_descriptor(self, descriptors):
        assert descriptors.report.serialize() == REPORT_BYTES
        assert len(descriptors.report.items) == 22
        assert descriptors.report.summary == (4, 4, 2)
        assert descriptors.configuration.hid.report_length == len(REPORT_BYTES)

    def test_attributes(self, descriptors):
        cfg = descriptors.configuration.configuration
        assert not cfg.self_powered
        assert cfg.remote_wakeup
        ep_in = descriptors.configuration.endpoint(1, is_in=True)
        assert ep_in.max_packet_size == 4
        assert ep_in.interval_ms == 1

    def test_named_blobs(self, descriptors):
        blobs = descriptors.named_blobs()
        assert list(blobs) == ["device", "configuration", "report", "string0", "string1", "string2"]
        assert blobs["string0"] == bytes.fromhex("04 03 09 04")

    def test_profile_without_feature_report(self):
        d = build_descriptor_set(HidProfile(feature_report_bytes=0, serial_number="SN1"))
        assert d.report.summary == (4, 4, 0)
        assert len(d.report.items) == 16
        assert d.configuration.hid.report_length == len(d.report.serialize())
        assert d.device.i_serial == 3
        assert decode_string_descriptor(d.strings.descriptor(3)) == "SN1"

    def test_field_out_of_range(self):
        with pytest.raises(DescriptorError) as exc:
            DeviceDescriptor(vid=0x10000).serialize()
        assert exc.value.field == "idVendor"

    def test_inconsistent_tree(self, descriptors):
        tree = descriptors.configuration
        broken = tree.model_copy(update={"endpoints": tree.endpoints[:1]})
        with pytest.raises(DescriptorError) as exc:
            broken.serialize()
        assert exc.value.field == "wTotalLength"

    def test_serialize_dispatch(self, descriptors):
        assert serialize(descriptors.device) == DEVICE_BYTES
        assert serialize("") == b"\x02\x03"
        with pytest.raises(DescriptorError):
            serialize(3.5)


class TestReportItems:
    """Test HID short-item parsing."""

    def test_parse_sensor_report(self):
        report = parse_report_descriptor(REPORT_BYTES)
        assert report.serialize() == REPORT_BYTES
        assert [item.name for item in report.items[:3]] == ["USAGE_PAGE", "USAGE", "COLLECTION"]
        assert report.items[0].describe() == "0xFFA0 (Vendor Defined)"
        assert report.items[2].describe() == "Application"
        assert report.items[-1].name == "END_COLLECTION"

    def test_logical_maximum_is_little_endian(self):
        item = parse_report_descriptor(REPORT_BYTES).items[5]
        assert item.name == "LOGICAL_MAXIMUM"
        assert item.data == 255

    def test_prefix_matches_bytes(self):
        for item in parse_report_descriptor(REPORT_BYTES).items:
            assert item.serialize()[0] == item.prefix

    def test_main_item_flags(self):
        assert short_item("INPUT", 0x02).describe() == "Data,Var,Abs"
        assert short_item("FEATURE", 0x01).describe() == "Const,Array,Abs"

    def test_push_pop(self):
        """POP restores REPORT_COUNT saved by PUSH."""
        report = parse_report_descriptor(bytes.fromhex("75 08 95 02 A4 95 06 81 02 B4 91 02"))
        assert report.summary == (6, 2, 0)

    @pytest.mark.parametrize(
        "data, message",
        [
            (b"\xc0", "END_COLLECTION without COLLECTION"),
            (b"\x26\xff", "Truncated 2-byte item"),
            (b"\xfe\x01\x00", "Long items are not supported"),
            (b"\xa1\x01", "Unclosed COLLECTION"),
            (b"\xb4", "POP without PUSH"),
        ],
    )
    def test_malformed(self, data, message):
        with pytest.raises(DescriptorError, match=message):
            parse_report_descriptor(data)

    def test_from_items(self):
        items = [short_item("REPORT_SIZE", 8), short_item("REPORT_COUNT", 3), short_item("OUTPUT", 2)]
        assert ReportDescriptor.from_items(items).output_report_bytes == 3

    def test_unknown_item_name(self):
        with pytest.raises(DescriptorError):
            short_item("BOGUS")


class TestStrings:
    """Test UTF-16LE string and LangID descriptors."""

    def test_manufacturer(self):
        raw = encode_string_descriptor("mikroElektronika")
        assert raw[:2] == bytes([34, 3])
        assert decode_string_descriptor(raw) == "mikroElektronika"

    def test_product(self, descriptors):
        raw = descriptors.strings.descriptor(2)
        assert len(raw) == 48
        assert decode_string_descriptor(raw) == "mikroC HID Library test"

    def test_too_long(self):
        encode_string_descriptor("x" * 126)
        with pytest.raises(DescriptorError):
            encode_string_descriptor("x" * 127)

    def test_length_mismatch(self):
        with pytest.raises(DescriptorError):
            decode_string_descriptor(b"\x06\x03a\x00")

    def test_langid(self):
        assert decode_langid_descriptor(bytes.fromhex("04 03 09 04")) == (0x0409,)

    def test_missing_index(self, descriptors):
        with pytest.raises(DescriptorError):
            descriptors.strings.descriptor(5)


class TestParsing:
    """Test parsing of raw descriptor bytes."""

    def test_configuration_roundtrip(self, descriptors):
        assert parse_configuration_tree(CONFIGURATION_BYTES) == descriptors.configuration

    def test_total_length_mismatch(self):
        data = bytearray(CONFIGURATION_BYTES)
        data[2] = 40
        with pytest.raises(DescriptorError) as exc:
            parse_configuration_tree(bytes(data))
        assert exc.value.field == "wTotalLength"

    def test_missing_configuration(self):
        with pytest.raises(DescriptorError, match="Missing configuration"):
            parse_configuration_tree(DEVICE_BYTES)

    def test_unknown_descriptor_strict_and_lenient(self, caplog):
        extra = bytes.fromhex("04 24 00 00")
        data = bytearray(CONFIGURATION_BYTES[:18] + extra + CONFIGURATION_BYTES[18:])
        data[2] = len(data)
        with pytest.raises(DescriptorError, match="Unknown descriptor type 0x24"):
            parse_configuration_tree(bytes(data))
        with caplog.at_level(logging.WARNING):
            tree = parse_configuration_tree(bytes(data), strict=False)
        assert len(tree.endpoints) == 2
        assert "Skipping unknown descriptor type 0x24" in caplog.text

    def test_device_length(self):
        with pytest.raises(DescriptorError):
            parse_device_descriptor(DEVICE_BYTES[:17])

    def test_guess_kind(self, descriptors):
        assert isinstance(parse_descriptor(DEVICE_BYTES), DeviceDescriptor)
        assert isinstance(parse_descriptor(CONFIGURATION_BYTES), ConfigurationTree)
        assert isinstance(parse_descriptor(REPORT_BYTES), ReportDescriptor)
        assert parse_descriptor(descriptors.strings.descriptor(1)) == "mikroElektronika"
        assert parse_descriptor(bytes.fromhex("04 03 09 04"), "langid") == (0x0409,)

    @pytest.mark.parametrize("blob", [DEVICE_BYTES[:9], CONFIGURATION_BYTES[:20], bytes.fromhex("30 03 6D 00")])
    def test_guess_kind_truncated(self, blob):
        """A standard type byte selects the typed parser even when bLength overruns the buffer."""
        with pytest.raises(DescriptorError):
            parse_descriptor(blob)

    def test_random_device_descriptors(self):
        """Serialize-then-parse keeps every field for arbitrary IDs."""
        rng = np.random.default_rng(2024)
        for vid, pid, version in rng.integers(0, 0x10000, size=(50, 3)):
            d = DeviceDescriptor(vid=int(vid), pid=int(pid), bcd_device=int(version))
            assert parse_device_descriptor(d.serialize()) == d

    def test_annotate(self):
        rows = annotate(parse_device_descriptor(DEVICE_BYTES))
        vendor = next(r for r in rows if r.name == "idVendor")
        assert (vendor.offset, vendor.hex, vendor.value) == (8, "34 12", "0x1234")
        config_rows = annotate(parse_configuration_tree(CONFIGURATION_BYTES))
        assert config_rows[-1].offset == 40
        assert len(annotate(parse_report_descriptor(REPORT_BYTES))) == 22


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
