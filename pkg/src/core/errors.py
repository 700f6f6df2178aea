# Copyright (C) 2024-2026 Kenes Yerassyl
# This file is part of BasePose Lab.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program. If not, see <https://www.gnu.org/licenses/>.


from typing import Optional


class BasePoseError(Exception):
    """Root of every error raised by the library."""


class ConfigError(BasePoseError, ValueError):
    """Invalid or unknown configuration value."""


class FormatError(BasePoseError, ValueError):
    """Malformed artifact file."""

    def __init__(self, message: str, offset: Optional[int] = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class UnsupportedVersionError(FormatError):
    """Artifact written by a newer format version."""


class SamplingError(BasePoseError, RuntimeError):
    """Retry budget exhausted while sampling scenes or datasets."""


class OutOfBoundsError(BasePoseError, ValueError):
    """A pose lies outside the world bounds."""


class ShapeError(BasePoseError, ValueError):
    """Tensor shapes do not fit the requested operation."""


class NonFiniteError(BasePoseError, FloatingPointError):
    """An operation produced NaN or Inf."""


class MissingWeightsError(BasePoseError, FileNotFoundError):
    """A learned method was requested without a checkpoint."""


class AblationError(BasePoseError, ValueError):
    """Training runs cannot be compared (too few runs or mismatched budgets)."""
