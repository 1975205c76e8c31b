"""Toolkit error type. CLI failure paths render these as one
`error: ...` diagnostic line and a nonzero exit status."""


class DSGError(Exception):
    pass
