"""Exception hierarchy shared by every trayforge module."""


class TrayforgeError(Exception):
    """Base class for all trayforge errors."""


class ParseError(TrayforgeError, ValueError):
    """Input file could not be parsed."""


class ValidationError(TrayforgeError, ValueError):
    """A record violates a domain invariant."""


class UnknownInstrument(TrayforgeError, KeyError):
    """A checklist or event references an id missing from the catalog."""

    def __str__(self):
        return Exception.__str__(self)


class PackingError(TrayforgeError):
    """Base class for packing failures."""


class WidthOverflow(PackingError):
    """The longest instrument of a group does not fit across the tray width."""

    def __init__(self, instrument_id, length_mm, tray_width_mm):
        self.instrument_id = instrument_id
        super().__init__(
            f"tray width overflow: instrument {instrument_id!r} "
            f"(length {length_mm} mm plus padding) exceeds tray width {tray_width_mm} mm"
        )


class DepthOverflow(PackingError):
    """A single instrument is taller than the tray depth."""

    def __init__(self, instrument_id, height_mm, tray_depth_mm):
        self.instrument_id = instrument_id
        super().__init__(
            f"tray depth overflow: instrument {instrument_id!r} "
            f"(height {height_mm} mm) exceeds tray depth {tray_depth_mm} mm"
        )


class LengthOverflow(PackingError):
    """Columns exceed the tray length at every merge level."""

    def __init__(self, required_mm, tray_length_mm, levels_tried):
        self.required_mm = required_mm
        self.levels_tried = levels_tried
        super().__init__(
            f"tray length overflow: columns need {required_mm:.1f} mm but tray "
            f"length is {tray_length_mm} mm (merge levels 0..{levels_tried - 1} tried)"
        )


class InvalidLayout(TrayforgeError, ValueError):
    """A layout failed validation where a valid one was required."""

    def __init__(self, violations):
        self.violations = list(violations)
        lines = "; ".join(str(v) for v in self.violations[:5])
        super().__init__(f"invalid layout ({len(self.violations)} violations): {lines}")


class EmptyMask(TrayforgeError, ValueError):
    pass


class SingularCalibration(TrayforgeError, ValueError):
    pass


class DegeneratePolygon(TrayforgeError, ValueError):
    pass


class AlreadyComplete(TrayforgeError):
    """A detection arrived after the plan was finished."""


class StageFull(TrayforgeError):
    """Holding another instrument would exceed the stage capacity."""


class PlacementSamplingExhausted(TrayforgeError):
    pass


class ZeroVariance(TrayforgeError, ZeroDivisionError):
    pass
