# Copyright 2025 The hidsense Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

import logging
from pathlib import Path


def ensure_parent_dir(path: str | Path) -> Path:
    """Creates the parent directory of an output file if it doesn't already exist.

    Args:
        path: Output file the caller is about to write

    Returns:
        `path` as a Path
    """
    target = Path(path)
    parent = target.parent
    if parent.exists():
        logging.debug(f"Directory {parent} already exists")
    else:
        parent.mkdir(parents=True)
        logging.info(f"Created directory {parent}")
    return target


def ensure_dir(path: str | Path) -> Path:
    """Creates an output directory (and its parents) if needed."""
    target = Path(path)
    if not target.is_dir():
        target.mkdir(parents=True)
        logging.info(f"Created directory {target}")
    return target
