class XSectionError(Exception):
    """Base class for all toolkit errors."""


class GeometryError(XSectionError, ValueError):
    pass


class FormatError(XSectionError, ValueError):
    """Malformed or unreadable file content."""


class DataError(XSectionError, ValueError):
    """Inputs that are well-formed but unusable (empty, inconsistent, ...)."""


class NotWatertightError(DataError):
    pass
