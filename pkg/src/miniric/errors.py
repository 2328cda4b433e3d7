"""Exception taxonomy shared by every miniric component.

The class name doubles as the wire-level error name printed by the CLI and
returned in JSON error bodies, so names here are part of the interface.
"""


class MiniRicError(Exception):
    """Base class; ``code`` is the HTTP status used by REST facades."""

    code = 400

    @property
    def name(self) -> str:
        return type(self).__name__

    def to_json(self) -> dict:
        return {"error": self.name, "detail": str(self)}


# core messaging
class DuplicateName(MiniRicError):
    pass


class DuplicateCode(MiniRicError):
    pass


class UnknownMtype(MiniRicError):
    pass


# route tables
class RouteTableError(MiniRicError):
    pass


class MissingHeader(RouteTableError):
    pass


class MissingFooter(RouteTableError):
    pass


class MalformedEntry(RouteTableError):
    def __init__(self, line_no: int, line: str, reason: str = ""):
        self.line_no = line_no
        self.line = line
        msg = f"line {line_no}: {line!r}"
        if reason:
            msg += f" ({reason})"
        super().__init__(msg)


class CountMismatch(RouteTableError):
    pass


# bus / RMR
class RmrError(MiniRicError):
    pass


class NoRoute(RmrError):
    code = 404

    def __init__(self, mtype):
        self.mtype = mtype
        super().__init__(f"No route table entry for mtype={mtype}")


class UnresolvedMeid(RmrError):
    code = 404


class NameDoesNotResolve(RmrError):
    def __init__(self, endpoint: str):
        self.endpoint = endpoint
        super().__init__(f"Name does not resolve: {endpoint}")


class QueueFull(RmrError):
    pass


class DuplicateEndpoint(RmrError):
    code = 409


class NotRegistered(RmrError):
    pass


class PayloadTooLarge(RmrError):
    pass


# descriptors
class DescriptorError(MiniRicError):
    pass


class MalformedJson(DescriptorError):
    pass


class MissingField(DescriptorError):
    def __init__(self, path: str):
        self.path = path
        super().__init__(f"missing field: {path}")


class ConfigNotFound(DescriptorError):
    code = 404


# app manager
class ValidationFailed(MiniRicError):
    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))

    def to_json(self) -> dict:
        return {"error": self.name, "detail": str(self), "violations": self.violations}


class DuplicateChart(MiniRicError):
    code = 409


class ImageNotFound(MiniRicError):
    code = 404


class RegistrationTimeout(MiniRicError):
    code = 504


class RegistrationFailed(MiniRicError):
    code = 502


class NotFound(MiniRicError):
    code = 404


class ChartNotFound(NotFound):
    pass


class NotRunning(MiniRicError):
    code = 409


class UnknownInstance(MiniRicError):
    code = 404


class AlreadyRegistered(MiniRicError):
    code = 409


class AlreadyInstalled(MiniRicError):
    code = 409


class RepositoryUnavailable(MiniRicError):
    code = 503


# SDL
class SdlUnavailable(MiniRicError):
    code = 503


# A1
class DuplicateInstance(MiniRicError):
    code = 409


class UnknownPolicyType(MiniRicError):
    code = 404


class MalformedResponse(MiniRicError):
    pass


# subscriptions
class UnknownSubid(MiniRicError):
    code = 404


class NotASubscriber(MiniRicError):
    code = 403


class UnknownMeid(MiniRicError):
    code = 404


class MalformedBody(MiniRicError):
    pass


class NotificationTimeout(MiniRicError):
    code = 504


# E2
class DuplicateNode(MiniRicError):
    code = 409


class UnknownRanFunction(MiniRicError):
    code = 404


class UnsupportedActionType(MiniRicError):
    pass


class UnknownParameter(MiniRicError):
    pass


class DecodeError(MiniRicError):
    def __init__(self, position: int, reason: str):
        self.position = position
        super().__init__(f"at byte {position}: {reason}")


# framework / REST
class DuplicateHandler(MiniRicError):
    code = 409


class DuplicateRoute(MiniRicError):
    code = 409


class BackendUnavailable(MiniRicError):
    code = 503


def error_from_json(payload, status: int = 400) -> MiniRicError:
    """Rebuild an error from its JSON body (the inverse of ``to_json``)."""
    name = payload.get("error", "") if isinstance(payload, dict) else ""
    detail = payload.get("detail", "") if isinstance(payload, dict) else str(payload)
    cls = globals().get(name)
    if isinstance(cls, type) and issubclass(cls, MiniRicError):
        exc = cls.__new__(cls)
        Exception.__init__(exc, detail)
        if cls is ValidationFailed:
            exc.violations = list(payload.get("violations", []))
        return exc
    exc = MiniRicError(detail or f"HTTP {status}")
    exc.code = status
    return exc
