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
Emulation of the sensor firmware: sensor waveform, 10-bit quantization, the
Celsius conversion pipeline, the Timer0 keep-alive interrupt and the
one-second main loop.

Timer arithmetic uses one tick per 1/f_cpu (0.02083 us at 48 MHz), which is
how the Timer0 interval of 0.832 ms is derived for this design; the silicon
actually clocks Timer0 at Fosc/4.
"""

import logging
import math
from collections.abc import Callable
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import TYPE_CHECKING, Annotated

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from hidsense import config
from hidsense.descriptors import DescriptorSet, build_paper_descriptor_set
from hidsense.registers import RegisterFile, validate_firmware_config
from hidsense.utils.errors import ClockConfigError, ConfigError, FirmwareError
from hidsense.utils.log import log_struct

if TYPE_CHECKING:
    from hidsense.bus import EventHandle, UsbBus

logger = logging.getLogger(__name__)

V_MIN = 0.0
V_MAX = 5.0
ADC_BITS = 10
ADC_MAX_CODE = (1 << ADC_BITS) - 1
OP_WIDTH = 12
REPORT_LENGTH = 4
IN_ENDPOINT = 1

AdcCode = Annotated[int, Field(ge=0, le=ADC_MAX_CODE)]


# ---------------------------------------------------------------------------
# Sensor
# ---------------------------------------------------------------------------


class SignalKind(str, Enum):
    CONSTANT = "constant"
    RAMP = "ramp"
    SINE = "sine"
    STEPS = "steps"


class SensorSignal(BaseModel):
    """Voltage waveform standing in for the sensor on AN0.

    constant: `volts`; ramp: `volts + rate * t`; sine:
    `offset + amplitude * sin(2 pi freq t)`; steps: `volts` rising by
    `amplitude` every `1/freq` seconds. Uniform noise of +/- `noise` volts is
    added before clamping to the 0-5 V input range.
    """

    model_config = ConfigDict(frozen=True)

    kind: SignalKind = SignalKind.CONSTANT
    volts: float = 0.0
    rate: float = 0.0
    freq: float = Field(default=0.0, ge=0.0)
    amplitude: float = 0.0
    offset: float = 0.0
    noise: float = Field(default=0.0, ge=0.0)
    seed: int = Field(default=0, ge=0, le=config.MAX_SEED)


def sensor_eval(signal: SensorSignal, t: int) -> float:
    """Evaluate the sensor voltage at simulated time `t` (microseconds).

    Noise is drawn from a generator keyed by (seed, t), so replays match.
    """
    if t < 0:
        raise FirmwareError("Sensor evaluated at negative time", {"t": t})
    seconds = t / 1_000_000
    if signal.kind is SignalKind.CONSTANT:
        volts = signal.volts
    elif signal.kind is SignalKind.RAMP:
        volts = signal.volts + signal.rate * seconds
    elif signal.kind is SignalKind.SINE:
        volts = signal.offset + signal.amplitude * math.sin(
            2.0 * math.pi * signal.freq * seconds
        )
    else:
        steps = math.floor(seconds * signal.freq) if signal.freq > 0 else 0
        volts = signal.volts + signal.amplitude * steps
    if signal.noise > 0:
        rng = np.random.default_rng([signal.seed, t])
        volts += float(rng.uniform(-signal.noise, signal.noise))
    return min(max(volts, V_MIN), V_MAX)


_SPEC_FIELDS: dict[SignalKind, tuple[str, ...]] = {
    SignalKind.CONSTANT: ("volts",),
    SignalKind.RAMP: ("volts", "rate"),
    SignalKind.SINE: ("offset", "amplitude", "freq"),
    SignalKind.STEPS: ("volts", "amplitude", "freq"),
}

_FILE_KEYS = ("kind", "volts", "rate", "freq", "amplitude", "offset", "noise", "seed")


def parse_sensor_spec(text: str) -> SensorSignal:
    """Parse the `kind:arg:arg...` flag grammar, e.g. `ramp:0:0.5`.

    Raises:
        ConfigError: For unknown kinds, wrong argument counts or bad numbers
    """
    kind_text, *args = text.strip().split(":")
    try:
        kind = SignalKind(kind_text.lower())
    except ValueError as e:
        raise ConfigError(f"Unknown sensor kind: {kind_text!r}") from e
    names = _SPEC_FIELDS[kind]
    if len(args) != len(names):
        raise ConfigError(
            f"Sensor kind {kind.value!r} takes {len(names)} argument(s): "
            + ":".join(names),
            {"spec": text},
        )
    try:
        values = {name: float(arg) for name, arg in zip(names, args)}
        return SensorSignal(kind=kind, **values)
    except (ValueError, ValidationError) as e:
        raise ConfigError(f"Invalid sensor spec {text!r}: {e}") from e


def load_sensor_file(path: str | Path) -> SensorSignal:
    """Load a sensor from a key=value file (`#` starts a comment).

    Keys: kind, volts, rate, freq, amplitude, offset, noise, seed. Whether the
    file set a seed is visible through `model_fields_set`.

    Raises:
        ConfigError: If the file is missing, malformed or has unknown keys
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as e:
        raise ConfigError(f"Cannot read sensor file {path}: {e}") from e
    values: dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip().lower()
        if not sep or not value.strip():
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        if key not in _FILE_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value.strip()
    try:
        if "seed" in values:
            values["seed"] = str(config.parse_seed(values["seed"]))
        return SensorSignal.model_validate(values)
    except ValidationError as e:
        raise ConfigError(f"Invalid sensor file {path}: {e}") from e


# ---------------------------------------------------------------------------
# Conversion pipeline
# ---------------------------------------------------------------------------


class TemperatureReport(BaseModel):
    """The 4 ASCII characters sent with Hid_Write(&Temperature, 4)."""

    model_config = ConfigDict(frozen=True)

    payload: bytes
    truncated: bool = False

    @field_validator("payload")
    @classmethod
    def _check_payload(cls, payload: bytes) -> bytes:
        if len(payload) != REPORT_LENGTH:
            raise ValueError(f"report must be {REPORT_LENGTH} bytes, got {len(payload)}")
        if any(b not in b"0123456789- " for b in payload):
            raise ValueError(f"report has characters outside digits/-/space: {payload!r}")
        if b" " in payload.rstrip(b" "):
            raise ValueError(f"report characters are not left-packed: {payload!r}")
        return payload

    @property
    def text(self) -> str:
        return self.payload.decode("ascii")


class ConversionTrace(BaseModel):
    """Every intermediate of one pass through the main loop."""

    model_config = ConfigDict(frozen=True)

    vin: AdcCode
    voltage: float
    celsius: float
    cint: int
    op: str
    report: TemperatureReport


def adc_sample(v: float) -> int:
    """Quantize a voltage to a 10-bit code: floor(v * 1024 / 5), capped at 1023."""
    code = math.floor(v * 1024 / V_MAX)
    return min(max(code, 0), ADC_MAX_CODE)


def code_to_voltage(c: int) -> float:
    # Voltage = (Vin * 5.0) / 1024.0
    return (c * 5.0) / 1024.0


def voltage_to_celsius(v: float) -> float:
    return v * 100.0


def celsius_to_int(c: float) -> int:
    """C cast semantics: truncate toward zero."""
    return int(c)


def long_to_str(n: int) -> str:
    """LongToStr into op[12]: right-justified, space-padded decimal.

    Raises:
        FirmwareError: If the decimal text needs more than 11 characters
    """
    digits = str(n)
    if len(digits) > OP_WIDTH - 1:
        raise FirmwareError("LongToStr field overflow", {"value": n})
    return digits.rjust(OP_WIDTH)


def remove_blank(op: str) -> TemperatureReport:
    """Copy the non-blank characters of `op` into a 4-slot buffer of spaces.

    Copying stops after 4 characters and the report is flagged `truncated`
    (the original loop would write past the end of its buffer).
    """
    chars = [c for c in op if c != " "]
    payload = "".join(chars[:REPORT_LENGTH]).ljust(REPORT_LENGTH)
    try:
        return TemperatureReport(
            payload=payload.encode("ascii"), truncated=len(chars) > REPORT_LENGTH
        )
    except (ValidationError, UnicodeEncodeError) as e:
        raise FirmwareError(f"op array is not a LongToStr result: {op!r}") from e


def make_report(c: int) -> ConversionTrace:
    """Run one ADC code through the main-loop pipeline."""
    if not 0 <= c <= ADC_MAX_CODE:
        raise FirmwareError("ADC code out of range", {"code": c})
    voltage = code_to_voltage(c)
    celsius = voltage_to_celsius(voltage)
    cint = celsius_to_int(celsius)
    op = long_to_str(cint)
    return ConversionTrace(
        vin=c,
        voltage=voltage,
        celsius=celsius,
        cint=cint,
        op=op,
        report=remove_blank(op),
    )


# ---------------------------------------------------------------------------
# Clocks and Timer0
# ---------------------------------------------------------------------------


def timer0_interval(
    prescale: int, reload: int, f_cpu: int | float, counter_bits: int = 8
) -> Fraction:
    """Timer0 overflow interval in microseconds, as an exact fraction.

    (2**counter_bits - reload) * prescale ticks of 1/f_cpu each; at 48 MHz,
    prescale 256 and reload 100 this is exactly 832 us.
    """
    if prescale < 1:
        raise ConfigError("Timer0 prescale must be >= 1", {"prescale": prescale})
    if not 0 <= reload <= 0xFF:
        raise ConfigError("TMR0L reload out of range", {"reload": reload})
    if f_cpu <= 0:
        raise ConfigError("CPU clock must be positive", {"f_cpu": f_cpu})
    ticks = ((1 << counter_bits) - reload) * prescale
    return Fraction(ticks * 1_000_000) / Fraction(f_cpu)


class ClockSource(str, Enum):
    PLL = "pll"
    OSCILLATOR = "oscillator"


PLL_INPUT_HZ = 4_000_000
PLL_OUTPUT_HZ = 96_000_000
_PLLDIV_CHOICES = (1, 2, 3, 4, 5, 6, 10, 12)


class ClockPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    crystal_hz: float
    plldiv: int
    cpudiv_source: ClockSource
    cpudiv: int
    usbdiv: int
    cpu_hz: float
    usb_hz: float

    @property
    def full_speed_usb(self) -> bool:
        return self.usb_hz == 48_000_000


def derive_clocks(
    crystal_hz: float,
    plldiv: int,
    usbdiv: int,
    cpu_source: ClockSource,
    cpudiv: int,
) -> ClockPlan:
    """Derive CPU and USB clocks from the oscillator configuration bits.

    The PLL prescaler (`plldiv`) must bring the crystal down to 4 MHz; the
    96 MHz PLL output is halved for USB when `usbdiv` is 2 (usbdiv 1 feeds
    the oscillator straight through) and feeds the CPU as 96 MHz / 2 / cpudiv.

    Raises:
        ClockConfigError: For unsupported dividers or a PLL input other than 4 MHz
    """
    if plldiv not in _PLLDIV_CHOICES:
        raise ClockConfigError("Unsupported PLL prescaler", {"plldiv": plldiv})
    if usbdiv not in (1, 2):
        raise ClockConfigError("USBDIV selects 1 (oscillator) or 2 (PLL/2)", {"usbdiv": usbdiv})
    if cpudiv not in (1, 2, 3, 4):
        raise ClockConfigError("Unsupported CPU divider", {"cpudiv": cpudiv})
    uses_pll = cpu_source is ClockSource.PLL or usbdiv == 2
    if uses_pll and crystal_hz != PLL_INPUT_HZ * plldiv:
        raise ClockConfigError(
            "PLL input must be 4 MHz",
            {"pll_input_mhz": round(crystal_hz / plldiv / 1e6, 2)},
        )
    if cpu_source is ClockSource.PLL:
        cpu_hz = PLL_OUTPUT_HZ / 2 / cpudiv
    else:
        cpu_hz = crystal_hz / cpudiv
    usb_hz = PLL_OUTPUT_HZ / 2 if usbdiv == 2 else crystal_hz
    return ClockPlan(
        crystal_hz=crystal_hz,
        plldiv=plldiv,
        cpudiv_source=cpu_source,
        cpudiv=cpudiv,
        usbdiv=usbdiv,
        cpu_hz=cpu_hz,
        usb_hz=usb_hz,
    )


# _PLL_DIV2_1L, _USBDIV_2_1L, CPUDIV_OSC1_PLL2_1L, _FOSC_HSPLL_HS_1H
BOARD_CLOCK_PLAN = derive_clocks(config.CRYSTAL_HZ, 2, 2, ClockSource.PLL, 1)


# ---------------------------------------------------------------------------
# Device
# ---------------------------------------------------------------------------


class HidLibrary:
    """Device-side HID library: Hid_Enable, Hid_Write, HID_InterruptProc and
    Hid_Disable on top of the simulated bus.

    Hid_Enable returns once the host has configured the device; here that is
    modelled by a continuation invoked at configuration time.
    """

    def __init__(self, bus: "UsbBus") -> None:
        self.bus = bus
        self.enabled = False
        self._on_ready: Callable[[], None] | None = None

    def enable(self, on_ready: Callable[[], None]) -> None:
        self.enabled = True
        self._on_ready = on_ready
        if self.bus.configured:
            self.on_configured()

    def on_configured(self) -> None:
        if self._on_ready is not None:
            callback, self._on_ready = self._on_ready, None
            callback()

    def write(self, payload: bytes) -> None:
        if not self.enabled:
            raise FirmwareError("Hid_Write before Hid_Enable")
        self.bus.enqueue_report(IN_ENDPOINT, payload)

    def interrupt_proc(self) -> None:
        self.bus.usb_service()

    def disable(self) -> None:
        self.enabled = False
        self._on_ready = None
        if self.bus.attached:
            self.bus.detach()


class TemperatureFirmware:
    """The device program: Timer0 keep-alive ISR plus the 1 s report loop.

    The firmware is a state machine driven by bus scheduler callbacks. Attach
    starts it, detach halts it; re-attaching restarts from main().
    """

    def __init__(
        self,
        registers: RegisterFile | None = None,
        signal: SensorSignal | None = None,
        clock: ClockPlan = BOARD_CLOCK_PLAN,
        descriptors: DescriptorSet | None = None,
    ) -> None:
        self.registers = registers or RegisterFile.firmware_defaults()
        self.signal = signal or SensorSignal()
        self.clock = clock
        self.descriptors = descriptors or build_paper_descriptor_set()

        findings = validate_firmware_config(self.registers)
        fatal = [f for f in findings if f.fatal]
        if fatal:
            raise ConfigError(
                "Register configuration prevents sampling AN0",
                {"findings": "; ".join(str(f) for f in fatal)},
            )
        for finding in findings:
            log_struct(
                logger,
                {"event": "register_finding", "register": finding.register_name, "message": finding.message},
                severity="WARNING",
            )

        # Adc_Read(0) selects AN0 and sets ADON itself.
        self.adc = self.registers.model_copy(update={"adcon0": 0x01}).adc_config()
        self.timer0 = self.registers.timer0_config()
        self.isr_enabled = self.registers.keepalive_interrupt_enabled()
        self.timer_period_us = timer0_interval(
            self.timer0.prescale,
            self.timer0.reload,
            self.clock.cpu_hz,
            counter_bits=8 if self.timer0.eight_bit_mode else 16,
        )

        self.bus: UsbBus | None = None
        self.hid: HidLibrary | None = None
        self.running = False
        self.portb = 0
        self.tmr0l = self.timer0.reload
        self.isr_count = 0
        self.conversions: list[ConversionTrace] = []
        self.report_times: list[int] = []
        self._timer_start = 0
        self._handles: list[EventHandle] = []

    def on_attach(self, bus: "UsbBus") -> None:
        """main(): init registers, start Timer0, Hid_Enable, then the delays."""
        self.bus = bus
        self.hid = HidLibrary(bus)
        self.running = True
        self.portb = 0
        self.tmr0l = self.timer0.reload
        self._timer_start = bus.clock.now
        if self.isr_enabled:
            self._schedule_overflow(1)
        else:
            logger.warning("Timer0 interrupt disabled; the USB link will not be kept alive")
        self.hid.enable(self._after_hid_enable)

    def on_configured(self) -> None:
        if self.hid is not None:
            self.hid.on_configured()

    def on_detach(self) -> None:
        self.running = False
        for handle in self._handles:
            handle.cancel()
        self._handles.clear()

    def stop(self) -> None:
        """Hid_Disable: leave the bus; the loop halts through on_detach."""
        if self.hid is not None:
            self.hid.disable()

    def _schedule(self, at: int, callback: Callable[[], None]) -> None:
        assert self.bus is not None
        self._handles = [h for h in self._handles if h.pending]
        self._handles.append(self.bus.clock.schedule_at(at, callback))

    def _schedule_overflow(self, k: int) -> None:
        at = self._timer_start + math.floor(k * self.timer_period_us)
        self._schedule(at, lambda: self._timer0_isr(k))

    def _timer0_isr(self, k: int) -> None:
        if not self.running or self.hid is None:
            return
        self.hid.interrupt_proc()  # Keep alive
        self.tmr0l = self.timer0.reload
        self.isr_count += 1
        self._schedule_overflow(k + 1)

    def _after_hid_enable(self) -> None:
        assert self.bus is not None
        self._schedule(self.bus.clock.now + config.STARTUP_DELAY_US, self._main_loop)

    def _main_loop(self) -> None:
        if not self.running or self.bus is None or self.hid is None:
            return
        now = self.bus.clock.now
        trace = make_report(adc_sample(sensor_eval(self.signal, now)))
        self.portb = trace.cint & 0xFF
        self.conversions.append(trace)
        self.report_times.append(now)
        self.hid.write(trace.report.payload)
        self._schedule(now + config.REPORT_PERIOD_US, self._main_loop)


def device_run(
    bus: "UsbBus",
    regs: RegisterFile | None = None,
    signal: SensorSignal | None = None,
    clock: ClockPlan = BOARD_CLOCK_PLAN,
) -> TemperatureFirmware:
    """Build the firmware and plug it into `bus`; returns the running device."""
    firmware = TemperatureFirmware(registers=regs, signal=signal, clock=clock)
    bus.attach(firmware)
    return firmware
