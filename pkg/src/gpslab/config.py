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

from starlette.config import Config
from starlette.datastructures import CommaSeparatedStrings

from gpslab.logconfig import configure_logging

VERSION = "0.1.0"
SERVICE_NAME = "gpslab"
API_PATH = "/OpenAPIV2.asmx"

config = Config(".env")

DEBUG: bool = config("DEBUG", cast=bool, default=False)
PROJECT_NAME: str = config("PROJECT_NAME", default="GPS Tracker Lab Platform")
ALLOWED_HOSTS: list[str] = config(
    "ALLOWED_HOSTS",
    cast=CommaSeparatedStrings,
    default="*",
)

# Network defaults, all loopback unless explicitly unlocked
BIND_HOST: str = config("BIND_HOST", default="127.0.0.1")
UNSAFE_BIND: bool = config("UNSAFE_BIND", cast=bool, default=False)
HQ_PORT: int = config("HQ_PORT", cast=int, default=8011)
YY_PORT: int = config("YY_PORT", cast=int, default=8841)
AGPS_PORT: int = config("AGPS_PORT", cast=int, default=56447)
HTTP_PORT: int = config("HTTP_PORT", cast=int, default=8080)
SMS_GATEWAY_PORT: int = config("SMS_GATEWAY_PORT", cast=int, default=7575)
CONNECT_TIMEOUT: float = config("CONNECT_TIMEOUT", cast=float, default=3.0)
# a UDP relay forgets a device address after this long without a datagram
RELAY_IDLE_S: float = config("RELAY_IDLE_S", cast=float, default=120.0)

# Platform behaviour
HISTORY_FILE: str = config("HISTORY_FILE", default="./data/history.tsv")
DEVICE_ID_BASE: int = config("DEVICE_ID_BASE", cast=int, default=82383)

# Simulation
SIM_START: str = config("SIM_START", default="2019-01-09T10:54:17Z")
DEFAULT_SEED: int = config("DEFAULT_SEED", cast=int, default=7)
CELL_REPORT_EVERY: int = config("CELL_REPORT_EVERY", cast=int, default=3)

# AGPS assistance service
AGPS_BANNER: str = config(
    "AGPS_BANNER", default="u-blox a-gps server (c) 1997-2009 u-blox AG"
)
AGPS_CONTENT_TYPE: str = config("AGPS_CONTENT_TYPE", default="application/ubx")
AGPS_BLOB_SIZE: int = config("AGPS_BLOB_SIZE", cast=int, default=2856)
# trackers with AGPS credentials fetch assistance at start and then this often
AGPS_REFRESH_S: int = config("AGPS_REFRESH_S", cast=int, default=3600)

# logging configuration
LOGGING_LEVEL = logging.DEBUG if DEBUG else logging.INFO
configure_logging(LOGGING_LEVEL, SERVICE_NAME)
