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
import sys
from typing import Any

from google.cloud.logging.handlers import StructuredLogHandler

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

_SEVERITY_LEVELS = {
    "DEBUG": logging.DEBUG,
    "INFO": logging.INFO,
    "NOTICE": logging.INFO,
    "WARNING": logging.WARNING,
    "ERROR": logging.ERROR,
    "CRITICAL": logging.CRITICAL,
}


def setup_logging(level: str = "INFO", structured: bool = False) -> None:
    """Configure the root logger for a CLI run.

    Logs always go to stderr so that stdout stays reserved for command output.

    Args:
        level: Name of the minimum level to emit
        structured: Emit one JSON object per record instead of plain text
    """
    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
    if structured:
        handler: logging.Handler = StructuredLogHandler(stream=sys.stderr)
        root.addHandler(handler)
        root.setLevel(level.upper())
    else:
        logging.basicConfig(level=level.upper(), format=LOG_FORMAT, stream=sys.stderr)


def log_struct(
    logger: logging.Logger,
    payload: dict[str, Any],
    severity: str = "INFO",
    message: str | None = None,
) -> None:
    """Log a structured payload.

    With the structured handler the payload becomes top-level JSON fields;
    with the plain formatter it is appended to the message.

    Args:
        logger: Logger to emit on
        payload: JSON-serializable fields
        severity: Cloud Logging style severity name
        message: Optional message; defaults to the payload's "event" field
    """
    level = _SEVERITY_LEVELS.get(severity.upper(), logging.INFO)
    text = message or str(payload.get("event", "struct"))
    fields = " ".join(f"{k}={v}" for k, v in payload.items() if k != "event")
    logger.log(
        level,
        f"{text} {fields}".rstrip(),
        extra={"json_fields": payload},
    )
