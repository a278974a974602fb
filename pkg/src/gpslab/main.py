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
import os
from contextlib import asynccontextmanager

from fastapi import FastAPI
from prometheus_client import CollectorRegistry
from prometheus_fastapi_instrumentator import Instrumentator
from starlette.middleware.cors import CORSMiddleware

from gpslab.config import ALLOWED_HOSTS, DEBUG, PROJECT_NAME, VERSION
from gpslab.platform.service import Platform
from gpslab.resources.openapi import router as openapi_router
from gpslab.resources.portal import router as portal_router


@asynccontextmanager
async def lifespan(app: FastAPI):
    logger = logging.getLogger("uvicorn.worker")
    logger.info(
        f"Platform {app.state.platform.name} serving HTTP (PID: {os.getpid()})"
    )
    yield


def get_application(platform: Platform) -> FastAPI:
    application = FastAPI(
        title=PROJECT_NAME, debug=DEBUG, version=VERSION, lifespan=lifespan
    )
    application.state.platform = platform

    application.add_middleware(
        CORSMiddleware,
        allow_origins=ALLOWED_HOSTS or ["*"],
        allow_credentials=True,
        allow_methods=["GET", "POST"],
        allow_headers=["*"],
    )

    application.include_router(openapi_router)
    application.include_router(portal_router)

    # one registry per platform; a scenario runs several in one process
    Instrumentator(excluded_handlers=["/metrics"], registry=CollectorRegistry()).instrument(
        application,
        latency_lowr_buckets=(0.01, 0.025, 0.05, 0.1, 0.25, 0.5, 1, 2.5, 5, 10),
    ).expose(application, include_in_schema=False)

    return application
