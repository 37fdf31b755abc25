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

import json
import logging
from collections.abc import Sequence

from opentelemetry import trace
from opentelemetry.sdk.resources import Resource
from opentelemetry.sdk.trace import ReadableSpan, TracerProvider
from opentelemetry.sdk.trace.export import (
    SimpleSpanProcessor,
    SpanExporter,
    SpanExportResult,
)

from hidsense.utils.log import log_struct

SERVICE_NAME = "hidsense"

logger = logging.getLogger(__name__)


class LoggingSpanExporter(SpanExporter):
    """
    Span exporter that writes every finished span as a structured log record.

    Simulation spans are short and carry only a handful of attributes, so the
    whole span is logged; attribute values longer than `max_attribute_chars`
    are cut to keep log lines readable.
    """

    def __init__(
        self,
        span_logger: logging.Logger | None = None,
        max_attribute_chars: int = 256,
        debug: bool = False,
    ) -> None:
        """
        Initialize the exporter.

        :param span_logger: Logger the span records are emitted on
        :param max_attribute_chars: Longest attribute value kept verbatim
        :param debug: Also print each span dict to stdout
        """
        self.logger = span_logger or logger
        self.max_attribute_chars = max_attribute_chars
        self.debug = debug
        self._shutdown = False

    def export(self, spans: Sequence[ReadableSpan]) -> SpanExportResult:
        """
        Export the spans as log records.

        :param spans: A sequence of spans to export
        :return: The result of the export operation
        """
        if self._shutdown:
            return SpanExportResult.FAILURE
        for span in spans:
            span_context = span.get_span_context()
            span_dict = json.loads(span.to_json())
            span_dict["trace_id"] = format(span_context.trace_id, "032x")
            span_dict["span_id"] = format(span_context.span_id, "016x")
            span_dict["attributes"] = self._truncate_attributes(
                span_dict.get("attributes") or {}
            )

            if self.debug:
                print(span_dict)

            log_struct(
                self.logger,
                {
                    "event": "span",
                    "service_name": SERVICE_NAME,
                    "name": span_dict.get("name"),
                    "trace_id": span_dict["trace_id"],
                    "span_id": span_dict["span_id"],
                    "attributes": span_dict["attributes"],
                },
                severity="DEBUG",
            )
        return SpanExportResult.SUCCESS

    def shutdown(self) -> None:
        self._shutdown = True

    def _truncate_attributes(self, attributes: dict) -> dict:
        trimmed = {}
        for key, value in attributes.items():
            text = value if isinstance(value, str) else json.dumps(value)
            if len(text) > self.max_attribute_chars:
                value = text[: self.max_attribute_chars] + "..."
            trimmed[key] = value
        return trimmed


def configure_tracing(exporter: SpanExporter | None = None) -> TracerProvider:
    """Create a tracer provider that exports through `exporter`.

    The provider is passed explicitly to `get_tracer`; the global provider
    stays the no-op default.

    Args:
        exporter: Span exporter; defaults to LoggingSpanExporter

    Returns:
        The new provider
    """
    provider = TracerProvider(resource=Resource.create({"service.name": SERVICE_NAME}))
    provider.add_span_processor(SimpleSpanProcessor(exporter or LoggingSpanExporter()))
    return provider


def get_tracer(
    name: str, provider: trace.TracerProvider | None = None
) -> trace.Tracer:
    """Return a tracer from `provider`, or from the global provider."""
    return trace.get_tracer(name, tracer_provider=provider)
