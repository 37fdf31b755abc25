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
Special-function registers of the PIC18F4550 that configure the sensor device.

The decoders are total: any byte decodes, and selections the chip does not
implement (ADCON0 channels 13-15) are flagged instead of rejected so that
traces of misconfigured firmware remain analyzable.
"""

from collections.abc import Callable
from enum import Enum
from typing import Annotated, Any

from pydantic import BaseModel, ConfigDict, Field

from hidsense.utils.errors import ConfigError

Byte = Annotated[int, Field(ge=0, le=0xFF)]

NUM_ANALOG_CHANNELS = 13
ACQUISITION_TAD = (0, 2, 4, 6, 8, 12, 16, 20)


class ClockDivider(str, Enum):
    FOSC2 = "Fosc/2"
    FOSC4 = "Fosc/4"
    FOSC8 = "Fosc/8"
    FOSC16 = "Fosc/16"
    FOSC32 = "Fosc/32"
    FOSC64 = "Fosc/64"
    FRC = "FRC"


# ADCS2:ADCS0 -> divider; FRC appears twice (011 and 111).
_ADCS_DIVIDERS = (
    ClockDivider.FOSC2,
    ClockDivider.FOSC8,
    ClockDivider.FOSC32,
    ClockDivider.FRC,
    ClockDivider.FOSC4,
    ClockDivider.FOSC16,
    ClockDivider.FOSC64,
    ClockDivider.FRC,
)


def _flag(value: bool) -> str:
    return "on" if value else "off"


class _Fields(BaseModel):
    model_config = ConfigDict(frozen=True)

    def describe(self) -> list[tuple[str, str]]:
        """Ordered (name, value) pairs as printed by `hidsense decode`."""
        return [(name, _flag(v) if isinstance(v, bool) else str(v)) for name, v in self]


class Adcon0Fields(_Fields):
    channel: int
    go_done: bool
    enabled: bool
    unimplemented: bool

    def describe(self) -> list[tuple[str, str]]:
        channel = f"AN{self.channel}" + (" (unimplemented)" if self.unimplemented else "")
        return [
            ("channel", channel),
            ("go_done", _flag(self.go_done)),
            ("enabled", _flag(self.enabled)),
        ]


class Adcon1Fields(_Fields):
    vref_minus_external: bool
    vref_plus_external: bool
    analog_map: tuple[bool, ...]

    @property
    def analog_channel_count(self) -> int:
        return sum(self.analog_map)

    def describe(self) -> list[tuple[str, str]]:
        analog = [f"AN{k}" for k, is_analog in enumerate(self.analog_map) if is_analog]
        return [
            ("vref_minus", "AN2" if self.vref_minus_external else "VSS"),
            ("vref_plus", "AN3" if self.vref_plus_external else "VDD"),
            ("analog", ",".join(analog) or "none"),
        ]


class Adcon2Fields(_Fields):
    right_justified: bool
    acquisition_tad: int
    clock_code: int = Field(ge=0, le=7)

    @property
    def clock_divider(self) -> ClockDivider:
        return _ADCS_DIVIDERS[self.clock_code]

    def describe(self) -> list[tuple[str, str]]:
        return [
            ("justification", "right" if self.right_justified else "left"),
            ("acquisition", f"{self.acquisition_tad}TAD"),
            ("clock", self.clock_divider.value),
        ]


class IntconFields(_Fields):
    gie: bool
    peie: bool
    tmr0ie: bool
    int0ie: bool
    rbie: bool
    tmr0if: bool
    int0if: bool
    rbif: bool


class Timer0Config(_Fields):
    enabled: bool
    eight_bit_mode: bool
    prescale: int
    reload: int = Field(default=0, ge=0, le=0xFF)
    overflow_interrupt_enabled: bool = False

    @property
    def counter_modulus(self) -> int:
        return 256 if self.eight_bit_mode else 65536

    def describe(self) -> list[tuple[str, str]]:
        return [
            ("enabled", _flag(self.enabled)),
            ("mode", "8-bit" if self.eight_bit_mode else "16-bit"),
            ("prescale", f"1:{self.prescale}"),
        ]


class AdcConfig(BaseModel):
    """Composite A/D configuration assembled from ADCON0/1/2."""

    model_config = ConfigDict(frozen=True)

    channel: int = Field(ge=0, le=12)
    enabled: bool
    right_justified: bool
    acquisition_tad: int
    clock_divider: ClockDivider
    vref_plus_external: bool
    vref_minus_external: bool
    analog_channel_count: int = Field(ge=0, le=NUM_ANALOG_CHANNELS)


def decode_adcon0(value: int) -> Adcon0Fields:
    """Decode ADCON0: CHS3:CHS0 in bits 5-2, GO/DONE bit 1, ADON bit 0."""
    channel = (value >> 2) & 0x0F
    return Adcon0Fields(
        channel=channel,
        go_done=bool(value & 0x02),
        enabled=bool(value & 0x01),
        unimplemented=channel >= NUM_ANALOG_CHANNELS,
    )


def decode_adcon1(value: int) -> Adcon1Fields:
    """Decode ADCON1: VCFG1 bit 5, VCFG0 bit 4, PCFG3:PCFG0 bits 3-0.

    PCFG 0000, 0001 and 0010 all leave AN0-AN12 analog; from 0011 on each
    step turns the highest remaining analog channel digital.
    """
    pcfg = value & 0x0F
    count = NUM_ANALOG_CHANNELS if pcfg <= 2 else 15 - pcfg
    return Adcon1Fields(
        vref_minus_external=bool(value & 0x20),
        vref_plus_external=bool(value & 0x10),
        analog_map=tuple(k < count for k in range(NUM_ANALOG_CHANNELS)),
    )


def decode_adcon2(value: int) -> Adcon2Fields:
    """Decode ADCON2: ADFM bit 7, ACQT2:ACQT0 bits 5-3, ADCS2:ADCS0 bits 2-0."""
    return Adcon2Fields(
        right_justified=bool(value & 0x80),
        acquisition_tad=ACQUISITION_TAD[(value >> 3) & 0x07],
        clock_code=value & 0x07,
    )


def encode_adcon2(fields: Adcon2Fields) -> int:
    """Inverse of decode_adcon2 over the implemented bits (bit 6 reads as 0)."""
    try:
        acqt = ACQUISITION_TAD.index(fields.acquisition_tad)
    except ValueError as e:
        raise ConfigError(
            f"Acquisition time {fields.acquisition_tad} TAD is not selectable"
        ) from e
    return (0x80 if fields.right_justified else 0) | (acqt << 3) | fields.clock_code


def decode_t0con(value: int) -> Timer0Config:
    """Decode T0CON: TMR0ON bit 7, T08BIT bit 6, PSA bit 3, T0PS2:T0PS0 bits 2-0.

    PSA set bypasses the prescaler. Reload and interrupt enable live in other
    registers and keep their defaults here.
    """
    prescaler_assigned = not value & 0x08
    return Timer0Config(
        enabled=bool(value & 0x80),
        eight_bit_mode=bool(value & 0x40),
        prescale=2 ** ((value & 0x07) + 1) if prescaler_assigned else 1,
    )


def decode_intcon(value: int) -> IntconFields:
    """Decode INTCON, one flag per bit from GIE (bit 7) down to RBIF (bit 0)."""
    return IntconFields(
        gie=bool(value & 0x80),
        peie=bool(value & 0x40),
        tmr0ie=bool(value & 0x20),
        int0ie=bool(value & 0x10),
        rbie=bool(value & 0x08),
        tmr0if=bool(value & 0x04),
        int0if=bool(value & 0x02),
        rbif=bool(value & 0x01),
    )


REGISTER_DECODERS: dict[str, Callable[[int], _Fields]] = {
    "ADCON0": decode_adcon0,
    "ADCON1": decode_adcon1,
    "ADCON2": decode_adcon2,
    "T0CON": decode_t0con,
    "INTCON": decode_intcon,
}


class RegisterFile(BaseModel):
    """The register bytes written by the firmware's init functions."""

    model_config = ConfigDict(frozen=True)

    adcon0: Byte = 0
    adcon1: Byte = 0
    adcon2: Byte = 0
    t0con: Byte = 0
    intcon: Byte = 0
    intcon2: Byte = 0
    intcon3: Byte = 0
    trisa: Byte = 0
    trisb: Byte = 0
    tmr0l_reload: Byte = 0

    @classmethod
    def firmware_defaults(cls) -> "RegisterFile":
        """Register state after System_init, Interrupt_Dis, Timer0_init and
        Interrupt_En; ADCON0 as Adc_Read(0) leaves it."""
        return cls(
            adcon0=0x01,
            adcon1=0x00,
            adcon2=0xA6,
            t0con=0xC7,
            intcon=0xE0,
            intcon2=0xF5,
            intcon3=0xC0,
            trisa=0xFF,
            trisb=0x00,
            tmr0l_reload=100,
        )

    def with_overrides(self, overrides: dict[str, int]) -> "RegisterFile":
        """Return a copy with registers replaced by name (case-insensitive).

        "TMR0L" is accepted as an alias for the reload value.

        Raises:
            ConfigError: For unknown register names or values outside 0..255
        """
        update: dict[str, Any] = {}
        for name, value in overrides.items():
            key = name.lower()
            if key == "tmr0l":
                key = "tmr0l_reload"
            if key not in type(self).model_fields:
                raise ConfigError(f"Unknown register: {name}")
            if not 0 <= value <= 0xFF:
                raise ConfigError(f"Register value out of range: {name}={value}")
            update[key] = value
        return self.model_copy(update=update)

    def adc_config(self) -> AdcConfig:
        """Assemble the A/D configuration.

        Raises:
            ConfigError: If ADCON0 enables the converter on an unimplemented channel
        """
        adcon0 = decode_adcon0(self.adcon0)
        if adcon0.enabled and adcon0.unimplemented:
            raise ConfigError(f"A/D enabled on unimplemented channel {adcon0.channel}")
        adcon1 = decode_adcon1(self.adcon1)
        adcon2 = decode_adcon2(self.adcon2)
        return AdcConfig(
            channel=min(adcon0.channel, NUM_ANALOG_CHANNELS - 1),
            enabled=adcon0.enabled,
            right_justified=adcon2.right_justified,
            acquisition_tad=adcon2.acquisition_tad,
            clock_divider=adcon2.clock_divider,
            vref_plus_external=adcon1.vref_plus_external,
            vref_minus_external=adcon1.vref_minus_external,
            analog_channel_count=adcon1.analog_channel_count,
        )

    def timer0_config(self) -> Timer0Config:
        return decode_t0con(self.t0con).model_copy(
            update={
                "reload": self.tmr0l_reload,
                "overflow_interrupt_enabled": decode_intcon(self.intcon).tmr0ie,
            }
        )

    def keepalive_interrupt_enabled(self) -> bool:
        """True when Timer0 overflows actually reach the interrupt routine."""
        intcon = decode_intcon(self.intcon)
        return decode_t0con(self.t0con).enabled and intcon.gie and intcon.tmr0ie


class Finding(BaseModel):
    """One deviation from the intended firmware configuration."""

    model_config = ConfigDict(frozen=True)

    register_name: str
    message: str
    fatal: bool = False

    def __str__(self) -> str:
        return self.message


def validate_firmware_config(regs: RegisterFile) -> list[Finding]:
    """Cross-check a register file against the intended configuration.

    Returns an empty list iff the file matches ADCON1=0x00, ADCON2=0xA6,
    TRISA=0xFF, TRISB=0x00, T0CON running with a 1:256 prescaler, INTCON=0xE0,
    INTCON2=0xF5, INTCON3=0xC0 and TMR0L reload 100. Findings that stop the device from sampling AN0 are
    marked fatal.
    """
    findings: list[Finding] = []

    if regs.adcon1 != 0x00:
        an0_digital = not decode_adcon1(regs.adcon1).analog_map[0]
        findings.append(
            Finding(
                register_name="ADCON1",
                message=(
                    f"ADCON1 is 0x{regs.adcon1:02X}, not all channels analog with "
                    "Vref=VDD/VSS" + ("; AN0 is digital" if an0_digital else "")
                ),
                fatal=an0_digital,
            )
        )
    if regs.adcon2 != 0xA6:
        adcon2 = decode_adcon2(regs.adcon2)
        findings.append(
            Finding(
                register_name="ADCON2",
                message=(
                    f"A/D set to {adcon2.clock_divider.value}, {adcon2.acquisition_tad}TAD, "
                    f"{'right' if adcon2.right_justified else 'left'}-justified "
                    "(expected Fosc/64, 8TAD, right-justified)"
                ),
            )
        )
    if regs.trisa != 0xFF:
        findings.append(
            Finding(
                register_name="TRISA",
                message="PORTA not configured as input",
                fatal=not regs.trisa & 0x01,
            )
        )
    if regs.trisb != 0x00:
        findings.append(Finding(register_name="TRISB", message="PORTB not configured as output"))

    t0con = decode_t0con(regs.t0con)
    if not t0con.enabled:
        findings.append(Finding(register_name="T0CON", message="Timer0 is not running"))
    if t0con.prescale != 256:
        findings.append(
            Finding(
                register_name="T0CON",
                message=f"Timer0 prescaler is 1:{t0con.prescale} (expected 1:256)",
            )
        )
    if not t0con.eight_bit_mode:
        findings.append(Finding(register_name="T0CON", message="Timer0 is not in 8-bit mode"))

    if regs.intcon != 0xE0:
        findings.append(
            Finding(
                register_name="INTCON",
                message=(
                    f"INTCON is 0x{regs.intcon:02X} (expected 0xE0: GIE, PEIE, TMR0IE)"
                ),
            )
        )
    if regs.intcon2 != 0xF5:
        findings.append(
            Finding(
                register_name="INTCON2",
                message=f"INTCON2 is 0x{regs.intcon2:02X} (expected 0xF5)",
            )
        )
    if regs.intcon3 != 0xC0:
        findings.append(
            Finding(
                register_name="INTCON3",
                message=f"INTCON3 is 0x{regs.intcon3:02X} (expected 0xC0)",
            )
        )
    if regs.tmr0l_reload != 100:
        findings.append(
            Finding(
                register_name="TMR0L",
                message=f"TMR0L reload is {regs.tmr0l_reload} (expected 100)",
            )
        )
    return findings
