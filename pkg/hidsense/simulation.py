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

import logging

from opentelemetry import trace

from hidsense.bus import SimClock, UsbBus
from hidsense.firmware import TemperatureFirmware
from hidsense.host import HidController, MonitorApp
from hidsense.registers import RegisterFile
from hidsense.tracer import TraceLog, TraceSummary, summarize
from hidsense.utils.log import log_struct
from hidsense.utils.tracing import get_tracer
from hidsense.utils.typing import SimulationConfig

logger = logging.getLogger(__name__)


class Simulation:
    """Device, bus and host wired together for one run.

    The device is plugged in at t=0 and, unless `keep_attached` is set,
    unplugged when the run ends.
    """

    def __init__(
        self,
        cfg: SimulationConfig,
        tracer_provider: trace.TracerProvider | None = None,
    ) -> None:
        self.cfg = cfg
        self.tracer = get_tracer(__name__, tracer_provider)
        self.clock = SimClock()
        self.bus = UsbBus(self.clock, keepalive_window_us=cfg.keepalive_window_us)
        self.trace = TraceLog()
        self.bus.add_sink(self.trace.record)
        self.controller = HidController(self.bus, poll_interval_ms=cfg.host_poll_ms)
        self.app = MonitorApp(self.controller)
        self.registers = RegisterFile.firmware_defaults().with_overrides(cfg.registers)
        self.summary: TraceSummary | None = None
        self.firmware = TemperatureFirmware(
            registers=self.registers,
            signal=cfg.sensor.model_copy(update={"seed": cfg.seed}),
        )

    def run(self) -> TraceSummary:
        end = self.clock.now + self.cfg.duration_us
        with self.tracer.start_as_current_span("simulate") as span:
            span.set_attribute("hidsense.duration_us", self.cfg.duration_us)
            span.set_attribute("hidsense.sensor", self.cfg.sensor.kind.value)
            span.set_attribute("hidsense.seed", str(self.cfg.seed))

            self.bus.attach(self.firmware)
            with self.tracer.start_as_current_span("enumerate"):
                self.bus.run_until(min(self.clock.now + self.controller.debounce_us, end))
            self.bus.run_until(end)
            if not self.cfg.keep_attached and self.bus.attached:
                self.firmware.stop()

            summary = self.summary = summarize(self.trace)
            span.set_attribute("hidsense.reports", summary.reports)
            span.set_attribute("hidsense.packets", len(self.trace))

        log_struct(
            logger,
            {
                "event": "run_complete",
                "duration_us": self.cfg.duration_us,
                "packets": len(self.trace),
                "reports": summary.reports,
                "readings": len(self.app.readings),
                "watchdog_tripped_at": self.bus.watchdog.tripped_at,
            },
        )
        return summary
