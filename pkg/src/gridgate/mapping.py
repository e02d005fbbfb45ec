"""Register-to-IEEE-2030.5 mapping cache and Reading payload builder.

A field mapping ties one holding register to a ReadingType template plus
the decode transform that turns the raw word into an engineering value:

    value = (raw - offset) * scale

rounded half away from zero to an integer. The cache is keyed by device
type, versioned, and safe to read while an update swaps in a complete
replacement set.

Unit-of-measure codes follow the IEC 61968 unit-symbol enumeration used
by IEEE 2030.5 (5 = A, 29 = V, 33 = Hz, 38 = W, 63 = VAr); beyond
non-negativity they are carried as opaque integers.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, fields as dc_fields
from fractions import Fraction
from importlib import resources
from typing import Mapping

# Serialization order of ReadingType keys in telemetry payloads.
READING_TYPE_FIELDS = (
    "description",
    "accumulationBehaviour",
    "commodity",
    "dataQualifier",
    "flowDirection",
    "intervalLength",
    "kind",
    "numberOfConsumptionBlocks",
    "numberOfTouTiers",
    "phase",
    "powerOfTenMultiplier",
    "tieredConsumptionBlocks",
    "uom",
)

READING_FIELDS = ("consumptionBlock", "qualityFlags", "timePeriod", "touTier", "value")

UOM_NAMES = {5: "Amperes", 29: "Volts", 33: "Hertz", 38: "Watts", 63: "VAR"}

BASE_DEVICE_TYPE = "fronius_primo"
BASE_MAPPING_VERSION = 1


class MappingValidationError(ValueError):
    """Mapping document rejected; message names the offending field."""


def round_half_away(x: Fraction | float) -> int:
    if isinstance(x, Fraction):
        num, den = x.numerator, x.denominator
        if num >= 0:
            return (2 * num + den) // (2 * den)
        return -((-2 * num + den) // (2 * den))
    return round_half_away(Fraction(x))


def _as_fraction(value) -> Fraction:
    """Accept int, float, "n/d" string or [num, den] pair as a scale.

    Floats go through their decimal literal so 0.1 means exactly 1/10.
    """
    if isinstance(value, bool):
        raise MappingValidationError(f"decode.scale: expected a number, got {value!r}")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    if isinstance(value, str):
        try:
            return Fraction(value)
        except (ValueError, ZeroDivisionError) as exc:
            raise MappingValidationError(f"decode.scale: {exc}") from exc
    if isinstance(value, (list, tuple)) and len(value) == 2:
        try:
            return Fraction(int(value[0]), int(value[1]))
        except (ValueError, ZeroDivisionError) as exc:
            raise MappingValidationError(f"decode.scale: {exc}") from exc
    raise MappingValidationError(f"decode.scale: cannot interpret {value!r}")


def _scale_to_json(scale: Fraction):
    if scale.denominator == 1:
        return scale.numerator
    return [scale.numerator, scale.denominator]


@dataclass(frozen=True)
class Decode:
    """Raw-word to engineering-value transform."""

    scale: Fraction = Fraction(1)
    offset: int = 0

    def apply(self, raw: int) -> int:
        return round_half_away((Fraction(raw) - self.offset) * self.scale)


@dataclass(frozen=True)
class FieldMapping:
    """One register's ReadingType template plus decode rule.

    ReadingType attributes keep their wire spelling so serialization is a
    straight copy; ``duration`` feeds Reading.timePeriod.duration.
    """

    register: int
    field_path: str
    description: str
    uom: int
    accumulationBehaviour: int = 12
    commodity: int = 1
    dataQualifier: int = 0
    flowDirection: int = 1
    intervalLength: int = 3600
    kind: int = 0
    numberOfConsumptionBlocks: int = 0
    numberOfTouTiers: int = 0
    phase: int = 0
    powerOfTenMultiplier: int = 0
    tieredConsumptionBlocks: str = "false"
    decode: Decode = field(default_factory=Decode)
    duration: int = 60

    def validate(self) -> None:
        if not 0 <= self.register <= 0xFFFF:
            raise MappingValidationError(f"register: {self.register} outside uint16 range")
        if not self.field_path:
            raise MappingValidationError("field_path: must be non-empty")
        if self.decode.scale == 0:
            raise MappingValidationError("decode.scale: must be nonzero")
        for name in READING_TYPE_FIELDS:
            if name in ("description", "tieredConsumptionBlocks"):
                continue
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 0:
                raise MappingValidationError(f"{name}: must be a non-negative integer")
        if self.duration <= 0:
            raise MappingValidationError("duration: must be positive")

    def reading_type(self) -> dict:
        return {name: getattr(self, name) for name in READING_TYPE_FIELDS}

    def to_json(self) -> dict:
        doc = {"field_path": self.field_path}
        doc.update(self.reading_type())
        doc["decode"] = {"scale": _scale_to_json(self.decode.scale), "offset": self.decode.offset}
        doc["duration"] = self.duration
        return doc

    @classmethod
    def from_json(cls, register: int, doc: Mapping) -> "FieldMapping":
        if not isinstance(doc, Mapping):
            raise MappingValidationError(f"register {register}: mapping must be an object")
        known = {f.name for f in dc_fields(cls)} - {"register", "decode"}
        kwargs = {}
        for key, value in doc.items():
            if key == "decode":
                if not isinstance(value, Mapping):
                    raise MappingValidationError("decode: must be an object")
                kwargs["decode"] = Decode(
                    scale=_as_fraction(value.get("scale", 1)),
                    offset=int(value.get("offset", 0)),
                )
            elif key in known:
                kwargs[key] = value
            else:
                raise MappingValidationError(f"unknown mapping field {key!r}")
        for required in ("field_path", "description", "uom"):
            if required not in kwargs:
                raise MappingValidationError(f"{required}: missing")
        mapping = cls(register=register, **kwargs)
        mapping.validate()
        return mapping


def uom_name(code: int) -> str:
    return UOM_NAMES.get(code, f"uom-{code}")


# ---------------------------------------------------------------------------
# Mapping sets (the wire/file format exchanged with the cloud)


def mapping_set_to_json(device_type: str, version: int, mappings: Mapping[int, FieldMapping]) -> dict:
    return {
        "device_type": device_type,
        "version": version,
        "mappings": {str(reg): m.to_json() for reg, m in sorted(mappings.items())},
    }


def mapping_set_from_json(doc: Mapping) -> tuple[str, int, dict[int, FieldMapping]]:
    if not isinstance(doc, Mapping):
        raise MappingValidationError("mapping set must be an object")
    device_type = doc.get("device_type")
    if not device_type or not isinstance(device_type, str):
        raise MappingValidationError("device_type: missing or not a string")
    version = doc.get("version")
    if not isinstance(version, int) or isinstance(version, bool) or version < 1:
        raise MappingValidationError("version: must be a positive integer")
    raw = doc.get("mappings")
    if not isinstance(raw, Mapping) or not raw:
        raise MappingValidationError("mappings: must be a non-empty object")
    mappings: dict[int, FieldMapping] = {}
    for key, entry in raw.items():
        try:
            register = int(key)
        except (TypeError, ValueError):
            raise MappingValidationError(f"mappings: key {key!r} is not a register number") from None
        mappings[register] = FieldMapping.from_json(register, entry)
    return device_type, version, mappings


def base_mapping() -> dict[int, FieldMapping]:
    """The shipped register map for the reference single-phase inverter."""
    doc = json.loads(resources.files("gridgate.data").joinpath("base_mapping.json").read_text())
    _, _, mappings = mapping_set_from_json(doc)
    return mappings


def base_mapping_set() -> dict:
    return json.loads(resources.files("gridgate.data").joinpath("base_mapping.json").read_text())


# ---------------------------------------------------------------------------
# Cache


class MappingCache:
    """Versioned per-device-type register mappings.

    Readers see either the whole previous set or the whole new one: an
    update builds a complete replacement dict and publishes it with one
    reference assignment. The version increases by exactly 1 per accepted
    update; provisioning installs adopt the version the cloud declares.
    """

    def __init__(self):
        self._entries: dict[str, dict[int, FieldMapping]] = {}
        self._version = 0
        self._lock = threading.Lock()

    @property
    def version(self) -> int:
        return self._version

    def device_types(self) -> list[str]:
        return sorted(self._entries)

    def lookup(self, device_type: str, register: int) -> FieldMapping | None:
        return self._entries.get(device_type, {}).get(register)

    def registers(self, device_type: str) -> dict[int, FieldMapping]:
        """Snapshot of one device type's mappings, ordered by register."""
        entries = self._entries.get(device_type, {})
        return dict(sorted(entries.items()))

    @staticmethod
    def _validated(mappings: Mapping[int, FieldMapping]) -> dict[int, FieldMapping]:
        if not mappings:
            raise MappingValidationError("mappings: must be non-empty")
        for register, m in mappings.items():
            if register != m.register:
                raise MappingValidationError(
                    f"register {register}: key does not match mapping register {m.register}"
                )
            m.validate()
        return dict(mappings)

    def update(self, device_type: str, mappings: Mapping[int, FieldMapping]) -> int:
        """Replace one device type's set atomically; returns new version."""
        accepted = self._validated(mappings)
        with self._lock:
            merged = dict(self._entries)
            merged[device_type] = accepted
            self._entries = merged
            self._version += 1
            return self._version

    def install(self, device_type: str, mappings: Mapping[int, FieldMapping], version: int) -> int:
        """Provisioning-time install that adopts the declared version."""
        if version < 1:
            raise MappingValidationError(f"version: must be >= 1, got {version}")
        accepted = self._validated(mappings)
        with self._lock:
            merged = dict(self._entries)
            merged[device_type] = accepted
            self._entries = merged
            self._version = version
            return self._version


# ---------------------------------------------------------------------------
# Reading documents


@dataclass(frozen=True)
class ReadingDocument:
    """One register's Reading + ReadingType, as shipped to the cloud."""

    register: int
    reading_type: dict
    reading: dict

    @property
    def period_start(self) -> int:
        return self.reading["timePeriod"]["start"]

    @property
    def value(self) -> int:
        return self.reading["value"]

    def as_dict(self) -> dict:
        return {str(self.register): {"ReadingType": self.reading_type, "Reading": self.reading}}


def build_reading(mapping: FieldMapping, raw: int, now: float) -> ReadingDocument:
    """Decode ``raw`` through ``mapping`` into a timestamped document."""
    if not 0 <= raw <= 0xFFFF:
        raise MappingValidationError(f"raw word {raw} outside uint16 range")
    reading = {
        "consumptionBlock": "0 - N/A",
        "qualityFlags": "01",
        "timePeriod": {"duration": mapping.duration, "start": int(now)},
        "touTier": "0 - N/A",
        "value": mapping.decode.apply(raw),
    }
    return ReadingDocument(mapping.register, mapping.reading_type(), reading)


def serialize(docs: list[ReadingDocument]) -> bytes:
    """UTF-8 JSON array of single-register documents, input order kept."""
    return json.dumps([d.as_dict() for d in docs], indent=2).encode()


class ReadingValidationError(ValueError):
    """Telemetry payload rejected."""


def _check_int(value, what: str) -> int:
    if not isinstance(value, int) or isinstance(value, bool):
        raise ReadingValidationError(f"{what}: expected an integer, got {value!r}")
    return value


def _parse_document(item) -> ReadingDocument:
    if not isinstance(item, dict) or len(item) != 1:
        raise ReadingValidationError("each document must be a single-register object")
    key, body = next(iter(item.items()))
    try:
        register = int(key)
    except (TypeError, ValueError):
        raise ReadingValidationError(f"document key {key!r} is not a register number") from None
    if not isinstance(body, dict) or set(body) != {"ReadingType", "Reading"}:
        raise ReadingValidationError(f"register {register}: expected ReadingType and Reading")
    rtype = body["ReadingType"]
    reading = body["Reading"]
    if not isinstance(rtype, dict) or set(rtype) != set(READING_TYPE_FIELDS):
        raise ReadingValidationError(f"register {register}: malformed ReadingType")
    if not isinstance(reading, dict) or set(reading) != set(READING_FIELDS):
        raise ReadingValidationError(f"register {register}: malformed Reading")
    for name in READING_TYPE_FIELDS:
        if name in ("description", "tieredConsumptionBlocks"):
            if not isinstance(rtype[name], str):
                raise ReadingValidationError(f"register {register}: {name} must be a string")
        else:
            _check_int(rtype[name], f"register {register}: {name}")
    period = reading["timePeriod"]
    if not isinstance(period, dict) or set(period) != {"duration", "start"}:
        raise ReadingValidationError(f"register {register}: malformed timePeriod")
    _check_int(period["duration"], f"register {register}: duration")
    _check_int(period["start"], f"register {register}: start")
    _check_int(reading["value"], f"register {register}: value")
    for name in ("consumptionBlock", "qualityFlags", "touTier"):
        if not isinstance(reading[name], str):
            raise ReadingValidationError(f"register {register}: {name} must be a string")
    ordered_rtype = {name: rtype[name] for name in READING_TYPE_FIELDS}
    ordered_reading = {name: reading[name] for name in READING_FIELDS}
    ordered_reading["timePeriod"] = {"duration": period["duration"], "start": period["start"]}
    return ReadingDocument(register, ordered_rtype, ordered_reading)


def parse_readings(data: bytes | str | list) -> list[ReadingDocument]:
    """Strict inverse of :func:`serialize`; raises on any malformed entry."""
    if isinstance(data, (bytes, str)):
        try:
            payload = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ReadingValidationError(f"not valid JSON: {exc}") from exc
    else:
        payload = data
    if not isinstance(payload, list):
        raise ReadingValidationError("telemetry payload must be an array")
    return [_parse_document(item) for item in payload]
