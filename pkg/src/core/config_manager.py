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


import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Union

import yaml

from src.core.config import RunConfig
from src.core.errors import ConfigError
from src.utils.path_utils import resource_path


logger = logging.getLogger(__name__)


class ConfigManager:
    """Discovers named configuration presets and loads run configurations from YAML."""

    def __init__(self, presets_path: Optional[Path] = None):
        self.presets_path = Path(presets_path) if presets_path else resource_path('resources/configs')
        self.presets: Dict[str, Path] = {}

        if self.presets_path.is_dir():
            for entry in os.scandir(self.presets_path):
                if entry.is_file() and entry.name.endswith('.yaml'):
                    self.presets[entry.name.replace('.yaml', '')] = Path(entry.path)

    def preset_names(self) -> List[str]:
        return sorted(self.presets)

    def get_preset(self, name: str) -> RunConfig:
        """Load a shipped preset by name.

        Args:
            name: Preset name (e.g., 'desk', 'full', 'tiny')

        Returns:
            Validated RunConfig

        Raises:
            ConfigError: If the preset doesn't exist or is invalid
        """
        if name not in self.presets:
            raise ConfigError(f"Non-existent config preset: {name} (known: {', '.join(self.preset_names())})")
        return self.load(self.presets[name])

    def load(self, path: Union[str, Path]) -> RunConfig:
        """Load a YAML configuration file.

        A file may start from a preset with a top-level ``preset: <name>`` key; the
        remaining keys override that preset section by section.

        Args:
            path: YAML file

        Returns:
            Validated RunConfig

        Raises:
            ConfigError: If the file is missing, unparsable or fails validation
        """
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path, 'r') as file:
                data = yaml.safe_load(file) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Failed to parse config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config {path} must contain a mapping")

        base_name = data.pop('preset', None)
        if base_name is not None:
            merged = _deep_merge(self.get_preset(base_name).to_dict(), data)
        else:
            merged = data
        config = RunConfig.from_dict(merged)
        logger.debug(f"Loaded config {path} (preset: {base_name})")
        return config


def _deep_merge(base: Dict, overrides: Dict) -> Dict:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


# Global singleton instance
config_manager = ConfigManager()
