"""Exception hierarchy for vesselmode."""


class VesselModeError(Exception):
    """Base class for all library errors."""


class GeometryError(VesselModeError, ValueError):
    pass


class RegularityError(GeometryError):
    pass


class RefinementError(GeometryError):
    pass


class MeshError(VesselModeError, ValueError):
    pass


class InsufficientDataError(VesselModeError, ValueError):
    pass


class DomainError(VesselModeError, ValueError):
    pass


class InterfaceError(VesselModeError, ValueError):
    pass


class MaterialError(VesselModeError, ValueError):
    pass


class CompatibilityError(VesselModeError, ArithmeticError):
    pass


class IncompatibilityError(VesselModeError, ValueError):
    """Raised when a divergence datum contradicts the divergence theorem."""


class UnsupportedParameterError(VesselModeError, ValueError):
    pass


class NearEigenvalueError(VesselModeError, ArithmeticError):
    def __init__(self, message, lam=None):
        super().__init__(message)
        self.lam = lam


class CertificateFailure(VesselModeError):
    def __init__(self, message, offending=()):
        super().__init__(message)
        self.offending = list(offending)


class ConfigError(VesselModeError, ValueError):
    def __init__(self, message, section=None, key=None, line=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if section is not None:
            where.append(f"[{section}]" + (f" {key}" if key else ""))
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
        self.section = section
        self.key = key
        self.line = line
