"""
See the NOTICE file distributed with this work for additional information
regarding copyright ownership.


Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at
http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
"""

import logging
import sys
from typing import Optional, TextIO

import ecs_logging

# Loggers owned by the servers we embed; they must not double-log via root.
_EMBEDDED_LOGGERS = ("uvicorn", "uvicorn.error", "uvicorn.access")


def configure_logging(
    level: int,
    service_name: str,
    mode: str = "live",
    seed: Optional[int] = None,
    stream: Optional[TextIO] = None,
) -> None:
    """
    Install one ECS JSON handler on the root logger.

    The lab mode (live or deterministic) and the seed are attached as ECS
    labels so that transcripts from two runs can be told apart in a log store.
    """
    labels = {"lab_mode": mode}
    if seed is not None:
        labels["seed"] = str(seed)

    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(
        ecs_logging.StdlibFormatter(
            extra={"service": {"name": service_name}, "labels": labels},
            exclude_fields=["log.original", "color_message"],
        )
    )

    root_logger = logging.getLogger()
    root_logger.handlers = [handler]
    root_logger.setLevel(level)

    for logger_name in _EMBEDDED_LOGGERS:
        embedded_logger = logging.getLogger(logger_name)
        embedded_logger.handlers = [handler]
        embedded_logger.setLevel(level)
        embedded_logger.propagate = False


def hexdump(data: bytes, limit: int = 256) -> str:
    """Uppercase hex of at most `limit` bytes, suffixed with the total size if cut."""
    if len(data) <= limit:
        return data.hex().upper()
    return f"{data[:limit].hex().upper()}...({len(data)} bytes)"
