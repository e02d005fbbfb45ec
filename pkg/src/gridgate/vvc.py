"""Volt-VAR curves: parsing, validation, setpoint math, atomic hot-swap.

A curve maps terminal voltage to a reactive-power setpoint with the
standard droop shape: full export below V90, a linear ramp down to unity
at V95, a deadband through V105, a ramp to full absorb at V110, and
saturation beyond. Voltages exactly on a threshold take the adjacent flat
segment's value, which keeps the map continuous and closed on both ends.

Curve limits are interpreted as percent of nameplate apparent power by
default; an absolute-VAr interpretation is available via the gateway's
``vvc_limits_mode`` setting.
"""

from __future__ import annotations

import hashlib
import json
import threading
from dataclasses import dataclass, replace


class CurveValidationError(ValueError):
    """Curve JSON rejected; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class VoltVarCurve:
    v90: float
    v95: float
    v105: float
    v110: float
    q_export: float
    q_absorb: float
    unity: float
    active_power_limit: float
    curve_id: str

    def validate(self) -> None:
        if not self.v90 < self.v95 < self.v105 < self.v110:
            raise CurveValidationError(
                "VOLTAGE_THRESHOLDS",
                f"must be strictly increasing, got "
                f"{self.v90}/{self.v95}/{self.v105}/{self.v110}",
            )
        if not self.q_absorb <= self.unity <= self.q_export:
            raise CurveValidationError(
                "REACTIVE_POWER_LIMITS",
                f"need Q_ABSORB <= UNITY <= Q_EXPORT, got "
                f"{self.q_absorb}/{self.unity}/{self.q_export}",
            )
        if not 0 < self.active_power_limit <= 100:
            raise CurveValidationError(
                "ACTIVE_POWER_LIMIT", f"must be in (0, 100], got {self.active_power_limit}"
            )

    def as_dict(self) -> dict:
        return {
            "VOLTAGE_THRESHOLDS": {
                "V90": self.v90,
                "V95": self.v95,
                "V105": self.v105,
                "V110": self.v110,
            },
            "REACTIVE_POWER_LIMITS": {
                "Q_EXPORT": self.q_export,
                "Q_ABSORB": self.q_absorb,
                "UNITY": self.unity,
            },
            "ACTIVE_POWER_LIMIT": self.active_power_limit,
            "curve_id": self.curve_id,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict())


def _fingerprint(thresholds: dict, limits: dict, active_limit: float) -> str:
    canonical = json.dumps([thresholds, limits, active_limit], sort_keys=True)
    return "vvc-" + hashlib.sha1(canonical.encode()).hexdigest()[:8]


def _require(obj: dict, key: str, where: str) -> object:
    if key not in obj:
        raise CurveValidationError(f"{where}{key}" if where else key, "missing")
    return obj[key]


def _number(obj: dict, key: str, where: str) -> float:
    value = _require(obj, key, where)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise CurveValidationError(f"{where}{key}", f"expected a number, got {value!r}")
    return float(value)


def parse_curve(data: bytes | str | dict, curve_id: str | None = None) -> VoltVarCurve:
    """Parse curve JSON (pretty or compact) and validate its invariants.

    ``curve_id`` wins over an id embedded in the document; with neither,
    a stable fingerprint of the bounds is assigned.
    """
    if isinstance(data, (bytes, str)):
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as exc:
            raise CurveValidationError("json", f"not valid JSON: {exc}") from exc
    else:
        doc = data
    if not isinstance(doc, dict):
        raise CurveValidationError("json", "curve document must be an object")

    thresholds = _require(doc, "VOLTAGE_THRESHOLDS", "")
    limits = _require(doc, "REACTIVE_POWER_LIMITS", "")
    if not isinstance(thresholds, dict):
        raise CurveValidationError("VOLTAGE_THRESHOLDS", "must be an object")
    if not isinstance(limits, dict):
        raise CurveValidationError("REACTIVE_POWER_LIMITS", "must be an object")

    curve = VoltVarCurve(
        v90=_number(thresholds, "V90", "VOLTAGE_THRESHOLDS."),
        v95=_number(thresholds, "V95", "VOLTAGE_THRESHOLDS."),
        v105=_number(thresholds, "V105", "VOLTAGE_THRESHOLDS."),
        v110=_number(thresholds, "V110", "VOLTAGE_THRESHOLDS."),
        q_export=_number(limits, "Q_EXPORT", "REACTIVE_POWER_LIMITS."),
        q_absorb=_number(limits, "Q_ABSORB", "REACTIVE_POWER_LIMITS."),
        unity=_number(limits, "UNITY", "REACTIVE_POWER_LIMITS."),
        active_power_limit=_number(doc, "ACTIVE_POWER_LIMIT", ""),
        curve_id=curve_id or str(doc.get("curve_id") or ""),
    )
    if not curve.curve_id:
        curve = replace(
            curve,
            curve_id=_fingerprint(
                {"V90": curve.v90, "V95": curve.v95, "V105": curve.v105, "V110": curve.v110},
                {"Q_EXPORT": curve.q_export, "Q_ABSORB": curve.q_absorb, "UNITY": curve.unity},
                curve.active_power_limit,
            ),
        )
    curve.validate()
    return curve


def setpoint(curve: VoltVarCurve, voltage: float) -> float:
    """Reactive setpoint at ``voltage``, in the curve's limit units."""
    if voltage <= curve.v90:
        return curve.q_export
    if voltage < curve.v95:
        frac = (voltage - curve.v90) / (curve.v95 - curve.v90)
        return curve.q_export + frac * (curve.unity - curve.q_export)
    if voltage <= curve.v105:
        return curve.unity
    if voltage < curve.v110:
        frac = (voltage - curve.v105) / (curve.v110 - curve.v105)
        return curve.unity + frac * (curve.q_absorb - curve.unity)
    return curve.q_absorb


def setpoint_percent(
    curve: VoltVarCurve, voltage: float, rated_va: float, limits_mode: str = "percent"
) -> float:
    """Setpoint normalized to percent of nameplate VA.

    ``limits_mode`` selects how the curve's Q limits are read: "percent"
    of nameplate VA (default) or "absolute" VAr.
    """
    q = setpoint(curve, voltage)
    if limits_mode == "percent":
        return q
    if limits_mode == "absolute":
        return 100.0 * q / rated_va
    raise ValueError(f"unknown limits_mode {limits_mode!r}")


class ActiveCurveSlot:
    """Holder for the curve the control loop is executing.

    Curves are immutable, so readers grab a complete curve with a plain
    attribute read; ``swap`` replaces it atomically.
    """

    def __init__(self, current: VoltVarCurve):
        self._lock = threading.Lock()
        self._current = current
        self._swapped_at: float | None = None

    @property
    def current(self) -> VoltVarCurve:
        return self._current

    @property
    def swapped_at(self) -> float | None:
        return self._swapped_at

    def swap(self, next_curve: VoltVarCurve, now: float) -> str:
        """Install ``next_curve``; returns the replaced curve's id."""
        next_curve.validate()
        with self._lock:
            previous = self._current
            self._current = next_curve
            self._swapped_at = now
        return previous.curve_id
