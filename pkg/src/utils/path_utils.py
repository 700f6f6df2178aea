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


import os
import sys
import tempfile
from typing import Union
from pathlib import Path


def resource_path(relative_path: Union[str, Path], to_string: bool = False) -> Union[Path, str]:
    """Get path to resource file, handling both development and PyInstaller bundle.

    Args:
        relative_path: Path relative to project root (e.g., 'resources/configs/desk.yaml')
        to_string: If True, return string instead of Path object

    Returns:
        Absolute path to resource
    """
    if hasattr(sys, "_MEIPASS"):
        base_path = Path(sys._MEIPASS)
    else:
        # Development - go up two levels from src/utils/ to project root
        base_path = Path(__file__).resolve().parent.parent.parent

    final_path = base_path / relative_path

    if to_string:
        return str(final_path)

    return final_path


def atomic_write_bytes(path: Union[str, Path], payload: bytes) -> Path:
    """Write bytes through a temporary sibling file and rename it into place.

    Args:
        path: Destination file
        payload: Complete file contents

    Returns:
        The destination path
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(payload)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    return path


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """Text variant of :func:`atomic_write_bytes` (UTF-8)."""
    return atomic_write_bytes(path, text.encode("utf-8"))
