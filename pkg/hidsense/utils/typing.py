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
from pathlib import Path

from pydantic import (
    BaseModel,
    Field,
)

from hidsense import config
from hidsense.firmware import SensorSignal


class SimulationConfig(BaseModel):
    """Represents the inputs of one simulated run."""

    duration_s: float = Field(gt=0, allow_inf_nan=False)
    sensor: SensorSignal = Field(default_factory=SensorSignal)
    registers: dict[str, int] = Field(default_factory=dict)
    host_poll_ms: int = Field(default=config.DEFAULT_HOST_POLL_MS, ge=1)
    keepalive_window_us: int = Field(default=config.KEEPALIVE_WINDOW_US, ge=1)
    trace_out: Path | None = Path(config.DEFAULT_TRACE_OUT)
    csv_out: Path | None = None
    seed: int = Field(default=0, ge=0, le=config.MAX_SEED)
    keep_attached: bool = False

    model_config = {"extra": "forbid"}

    @property
    def duration_us(self) -> int:
        return round(self.duration_s * 1_000_000)
