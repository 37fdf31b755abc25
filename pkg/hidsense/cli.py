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
hidsense command line: simulate a run, dump or parse descriptors, decode
register bytes and analyze saved traces.

Exit codes: 0 ok, 1 runtime error, 2 usage or configuration error.
"""

import argparse
import logging
import sys
from pathlib import Path

from opentelemetry.sdk.trace import TracerProvider
from pydantic import ValidationError

from hidsense import config
from hidsense.descriptors import (
    ConfigurationTree,
    DeviceDescriptor,
    ParsedDescriptor,
    ReportDescriptor,
    annotate,
    build_paper_descriptor_set,
    parse_descriptor,
)
from hidsense.firmware import SensorSignal, load_sensor_file, parse_sensor_spec
from hidsense.registers import REGISTER_DECODERS
from hidsense.simulation import Simulation
from hidsense.templates import descriptor_dump, trace_summary
from hidsense.tracer import read_trace, render, summarize, write_trace
from hidsense.utils.errors import ConfigError, HidSenseError
from hidsense.utils.files import ensure_dir
from hidsense.utils.log import setup_logging
from hidsense.utils.tracing import configure_tracing, get_tracer
from hidsense.utils.typing import SimulationConfig

logger = logging.getLogger(__name__)

DEFAULT_SENSOR = "constant:2.5"
DESCRIPTOR_KINDS = ("device", "configuration", "report", "string", "langid")


def _byte(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value <= 0xFF:
        raise argparse.ArgumentTypeError(f"{text} is not a byte value")
    return value


def _seed(text: str) -> int:
    try:
        return config.parse_seed(text)
    except ConfigError as e:
        raise argparse.ArgumentTypeError(e.message) from e


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hidsense", description="USB HID skin-temperature telemetry simulator")
    parser.add_argument("--log-level", default=config.get_log_level(), help="Logging level (env HIDSENSE_LOG_LEVEL)")
    parser.add_argument(
        "--structured-logs",
        action="store_true",
        default=config.structured_logs_enabled(),
        help="Emit JSON log lines (env HIDSENSE_STRUCTURED_LOGS=true)",
    )
    parser.add_argument("--otel", action="store_true", help="Export OpenTelemetry spans as log records")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Run device, bus and host for a simulated duration")
    source = sim.add_mutually_exclusive_group()
    source.add_argument("--sensor", help=f"Sensor spec kind:arg:... (default {DEFAULT_SENSOR})")
    source.add_argument("--sensor-file", type=Path, help="Sensor key=value file")
    sim.add_argument("--duration", type=float, default=13.0, help="Simulated seconds")
    sim.add_argument("--trace-out", type=Path, default=Path(config.DEFAULT_TRACE_OUT), help="Trace file to write")
    sim.add_argument("--csv-out", type=Path, help="Optional CSV of host readings")
    sim.add_argument("--seed", type=_seed, help="Noise seed (env HIDSENSE_SEED)")
    sim.add_argument("--host-poll-ms", type=int, default=config.DEFAULT_HOST_POLL_MS, help="Host interrupt-IN polling interval")
    sim.add_argument(
        "--register",
        action="append",
        default=[],
        metavar="NAME=VALUE",
        help="Override a firmware register, e.g. INTCON=0x00 (repeatable)",
    )
    sim.add_argument("--keep-attached", action="store_true", help="Leave the device plugged in at the end")
    sim.add_argument("--verbose", action="store_true", help="Also print the trace summary")
    sim.set_defaults(func=cmd_simulate)

    desc = sub.add_parser("descriptors", help="Dump or parse USB descriptors")
    mode = desc.add_mutually_exclusive_group(required=True)
    mode.add_argument("--dump", action="store_true", help="Write the device's descriptors")
    mode.add_argument("--parse", type=Path, metavar="FILE", help="Parse a binary descriptor file")
    desc.add_argument("--out", type=Path, default=Path("descriptors"), help="Dump directory")
    desc.add_argument("--kind", choices=DESCRIPTOR_KINDS, help="Descriptor kind (guessed when omitted)")
    desc.add_argument("--lenient", action="store_true", help="Skip unknown descriptors inside a configuration")
    desc.set_defaults(func=cmd_descriptors)

    dec = sub.add_parser("decode", help="Decode a special function register byte")
    dec.add_argument("--reg", type=str.upper, choices=sorted(REGISTER_DECODERS), required=True)
    dec.add_argument("--value", type=_byte, required=True, help="Byte value, e.g. 0xA6")
    dec.set_defaults(func=cmd_decode)

    ana = sub.add_parser("analyze", help="Summarize a saved trace")
    ana.add_argument("path", type=Path)
    ana.add_argument("--verbose", action="store_true", help="Echo NAK and SERVICE lines")
    ana.set_defaults(func=cmd_analyze)
    return parser


def _parse_register_overrides(items: list[str]) -> dict[str, int]:
    overrides: dict[str, int] = {}
    for item in items:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"Expected NAME=VALUE, got {item!r}")
        try:
            overrides[name.strip().upper()] = int(value.strip(), 0)
        except ValueError as e:
            raise ConfigError(f"Invalid register value in {item!r}") from e
    return overrides


def _resolve_sensor(args: argparse.Namespace) -> tuple[SensorSignal, int]:
    if args.sensor_file:
        sensor = load_sensor_file(args.sensor_file)
    else:
        sensor = parse_sensor_spec(args.sensor or DEFAULT_SENSOR)
    file_seed = sensor.seed if "seed" in sensor.model_fields_set else 0
    if args.seed is not None:
        seed = args.seed
    else:
        seed = config.get_seed(default=file_seed)
    return sensor, seed


def cmd_simulate(args: argparse.Namespace, provider: TracerProvider | None = None) -> int:
    sensor, seed = _resolve_sensor(args)
    cfg = SimulationConfig(
        duration_s=args.duration,
        sensor=sensor,
        registers=_parse_register_overrides(args.register),
        host_poll_ms=args.host_poll_ms,
        trace_out=args.trace_out,
        csv_out=args.csv_out,
        seed=seed,
        keep_attached=args.keep_attached,
    )
    sim = Simulation(cfg, tracer_provider=provider)
    summary = sim.run()
    for line in sim.app.transcript:
        print(line)
    if cfg.trace_out is not None:
        write_trace(cfg.trace_out, sim.trace)
    if cfg.csv_out is not None:
        sim.app.export_csv(cfg.csv_out)
    if args.verbose:
        print(trace_summary.render(counts=summary.counts, s=summary), end="")
    return 0


def _headline(d: ParsedDescriptor) -> str:
    if isinstance(d, DeviceDescriptor):
        return f"vid=0x{d.vid:04X} pid=0x{d.pid:04X}"
    if isinstance(d, ConfigurationTree):
        return f"total_length={d.total_length} endpoints={len(d.endpoints)}"
    if isinstance(d, ReportDescriptor):
        return (
            f"items={len(d.items)} input={d.input_report_bytes} "
            f"output={d.output_report_bytes} feature={d.feature_report_bytes}"
        )
    if isinstance(d, str):
        return f"string={d!r}"
    return "langids=" + ",".join(f"0x{lang:04X}" for lang in d)


def _dump_kind(name: str) -> str:
    if name == "string0":
        return "langid"
    return "string" if name.startswith("string") else name


def cmd_descriptors(args: argparse.Namespace, provider: TracerProvider | None = None) -> int:
    if args.dump:
        out = ensure_dir(args.out)
        sections = []
        for name, blob in build_paper_descriptor_set().named_blobs().items():
            (out / f"{name}.bin").write_bytes(blob)
            parsed = parse_descriptor(blob, _dump_kind(name))
            sections.append(descriptor_dump.render(title=name, length=len(blob), rows=annotate(parsed)))
            print(f"{name}.bin: {len(blob)} bytes, {_headline(parsed)}")
        (out / "descriptors.txt").write_text("\n".join(sections), encoding="utf-8")
        return 0

    try:
        data = args.parse.read_bytes()
    except OSError as e:
        logger.error(f"Cannot read {args.parse}: {e}")
        return 1
    parsed = parse_descriptor(data, args.kind, strict=not args.lenient)
    print(_headline(parsed))
    print(descriptor_dump.render(title=args.parse.name, length=len(data), rows=annotate(parsed)), end="")
    return 0


def cmd_decode(args: argparse.Namespace, provider: TracerProvider | None = None) -> int:
    fields = REGISTER_DECODERS[args.reg](args.value)
    for name, value in fields.describe():
        print(f"{name}={value}")
    return 0


def cmd_analyze(args: argparse.Namespace, provider: TracerProvider | None = None) -> int:
    with get_tracer(__name__, provider).start_as_current_span("analyze"):
        log = read_trace(args.path)
    print(render(log, verbose=args.verbose), end="")
    summary = summarize(log)
    print(trace_summary.render(counts=summary.counts, s=summary), end="")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level, args.structured_logs)
    provider = configure_tracing() if args.otel else None
    try:
        return args.func(args, provider)
    except ValidationError as e:
        parser.error(f"invalid configuration: {e.errors()[0]['loc']}: {e.errors()[0]['msg']}")
    except ConfigError as e:
        parser.error(str(e))
    except HidSenseError as e:
        logger.error(str(e))
        return 1
    finally:
        if provider is not None:
            provider.shutdown()
    return 2


if __name__ == "__main__":
    sys.exit(main())
