"""Exception types shared across the package (and mapped to CLI exit codes)."""

from __future__ import annotations


class FloodTwinError(Exception):
    """Base class for package errors."""


class ConfigError(FloodTwinError):
    """Invalid or inconsistent experiment configuration."""


class MissingForcingError(FloodTwinError):
    """A boundary forcing lookup fell outside the provided time span."""


class MissingArtifactError(FloodTwinError):
    """A pipeline stage requires files that a previous stage did not produce."""


class SolverDivergenceError(FloodTwinError):
    """The shallow-water integration produced a non-finite value."""

    def __init__(self, row: int, col: int, time: float):
        self.row = row
        self.col = col
        self.time = time
        super().__init__(f"non-finite state at cell (row={row}, col={col}), t={time:.3f} s")


class MemberDivergenceError(SolverDivergenceError):
    """An ensemble member diverged during a cycle."""

    def __init__(self, cause: SolverDivergenceError, member: int, window_index: int):
        super().__init__(cause.row, cause.col, cause.time)
        self.member = member
        self.window_index = window_index
        self.args = (f"member {member} diverged in window {window_index}: {cause}",)
