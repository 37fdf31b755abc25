"""
Unit Tests for the supporting utilities

Covers configuration helpers, the error hierarchy, structured logging,
span export and output directories.

Run tests with:
    pytest tests/unit/test_utils.py -v
"""

import logging

import pytest
from google.cloud.logging.handlers import StructuredLogHandler
from pydantic import ValidationError

from hidsense import config
from hidsense.utils.errors import DescriptorError, EnumerationError, HidSenseError, TraceFormatError
from hidsense.utils.files import ensure_dir, ensure_parent_dir
from hidsense.utils.log import log_struct, setup_logging
from hidsense.utils.tracing import LoggingSpanExporter, configure_tracing, get_tracer
from hidsense.utils.typing import SimulationConfig


@pytest.fixture
def restore_root_logger():
    root = logging.getLogger()
    handlers, level = list(root.handlers), root.level
    yield root
    for handler in list(root.handlers):
        root.removeHandler(handler)
    for handler in handlers:
        root.addHandler(handler)
    root.setLevel(level)


class TestConfig:
    """Test environment-backed configuration."""

    @pytest.mark.parametrize("text, expected", [("0", 0), ("42", 42), ("0x10", 16), (str(2**64 - 1), 2**64 - 1)])
    def test_parse_seed(self, text, expected):
        assert config.parse_seed(text) == expected

    @pytest.mark.parametrize("text", ["-1", "abc", str(2**64)])
    def test_parse_seed_rejects(self, text):
        with pytest.raises(HidSenseError):
            config.parse_seed(text)

    def test_seed_from_env(self, monkeypatch):
        monkeypatch.delenv(config.SEED_ENV_VAR, raising=False)
        assert config.get_seed(default=7) == 7
        monkeypatch.setenv(config.SEED_ENV_VAR, "99")
        assert config.get_seed(default=7) == 99

    def test_log_settings(self, monkeypatch):
        monkeypatch.setenv(config.LOG_LEVEL_ENV_VAR, "debug")
        monkeypatch.setenv(config.STRUCTURED_LOGS_ENV_VAR, "TRUE")
        assert config.get_log_level() == "DEBUG"
        assert config.structured_logs_enabled()

    def test_simulation_config(self):
        cfg = SimulationConfig(duration_s=13)
        assert cfg.duration_us == 13_000_000
        with pytest.raises(ValidationError):
            SimulationConfig(duration_s=0)
        with pytest.raises(ValidationError):
            SimulationConfig(duration_s=float("inf"))
        with pytest.raises(ValidationError):
            SimulationConfig(duration_s=1, unknown=True)


class TestErrors:
    """Test the error hierarchy."""

    def test_message_and_details(self):
        e = HidSenseError("Bad thing", {"a": 1, "b": "x"})
        assert str(e) == "Bad thing (a=1, b=x)"
        assert e.details == {"a": 1, "b": "x"}
        assert str(HidSenseError("Plain")) == "Plain"

    def test_descriptor_field(self):
        e = DescriptorError("Too big", field="idVendor")
        assert e.field == "idVendor"
        assert e.details["field"] == "idVendor"

    def test_enumeration_step(self):
        assert EnumerationError("x", step="set_address").details == {"step": "set_address"}

    def test_trace_position(self):
        e = TraceFormatError("Bad hex", line=3, column=12)
        assert (e.line, e.column) == (3, 12)
        assert str(e) == "Bad hex (line=3, column=12)"


class TestLogging:
    """Test structured logging helpers."""

    def test_log_struct(self, caplog):
        logger = logging.getLogger("hidsense.test")
        with caplog.at_level(logging.INFO, logger="hidsense.test"):
            log_struct(logger, {"event": "attach", "t_us": 0, "vid": 4660})
        record = caplog.records[-1]
        assert record.getMessage() == "attach t_us=0 vid=4660"
        assert record.json_fields == {"event": "attach", "t_us": 0, "vid": 4660}

    def test_log_struct_severity(self, caplog):
        logger = logging.getLogger("hidsense.test")
        with caplog.at_level(logging.DEBUG, logger="hidsense.test"):
            log_struct(logger, {"event": "watchdog_tripped"}, severity="WARNING")
        assert caplog.records[-1].levelno == logging.WARNING

    def test_setup_plain(self, restore_root_logger):
        setup_logging("debug")
        assert restore_root_logger.level == logging.DEBUG
        assert not any(isinstance(h, StructuredLogHandler) for h in restore_root_logger.handlers)

    def test_setup_structured(self, restore_root_logger):
        setup_logging("WARNING", structured=True)
        assert restore_root_logger.level == logging.WARNING
        assert isinstance(restore_root_logger.handlers[0], StructuredLogHandler)


class TestTracing:
    """Test span export through the logger."""

    def test_spans_become_log_records(self, caplog):
        span_logger = logging.getLogger("hidsense.test.spans")
        provider = configure_tracing(LoggingSpanExporter(span_logger=span_logger, max_attribute_chars=8))
        tracer = get_tracer(__name__, provider)
        with caplog.at_level(logging.DEBUG, logger="hidsense.test.spans"):
            with tracer.start_as_current_span("simulate") as span:
                span.set_attribute("hidsense.sensor", "constant-with-a-long-name")
                span.set_attribute("hidsense.reports", 11)
        provider.shutdown()

        fields = caplog.records[-1].json_fields
        assert fields["event"] == "span"
        assert fields["name"] == "simulate"
        assert fields["service_name"] == "hidsense"
        assert fields["attributes"]["hidsense.sensor"] == "constant..."
        assert fields["attributes"]["hidsense.reports"] == 11
        assert len(fields["trace_id"]) == 32

    def test_shutdown_exporter_fails(self):
        exporter = LoggingSpanExporter()
        exporter.shutdown()
        assert exporter.export([]).name == "FAILURE"


class TestFiles:
    """Test output directory helpers."""

    def test_ensure_parent_dir(self, tmp_path):
        target = ensure_parent_dir(tmp_path / "a" / "b" / "run.trace")
        assert target.parent.is_dir()
        assert ensure_parent_dir(target) == target

    def test_ensure_dir(self, tmp_path):
        assert ensure_dir(tmp_path / "dump").is_dir()
        assert ensure_dir(tmp_path / "dump").is_dir()


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
