"""
Customer web portal.

/login hands out a session cookie. /history wants a session but never checks
that it belongs to the serial asked for. /geofence and /engine want nothing
at all.
"""

import logging
from typing import Annotated, Optional

from fastapi import APIRouter, Cookie, Depends, Header, responses

from gpslab.dependencies import Dependencies
from gpslab.error_response import portal_error, response_error_handler
from gpslab.exceptions import PortalError
from gpslab.platform.service import Platform
from gpslab.schemas.core import GeoPosition, Geofence
from gpslab.schemas.portal import (
    CommandAck,
    EngineRequest,
    GeofenceRequest,
    HistoryEntry,
    HistoryResponse,
    LoginRequest,
    PasswordRequest,
    SessionResponse,
)

PlatformDep = Annotated[Platform, Depends(Dependencies.get_platform)]

SESSION_COOKIE = "session"

router = APIRouter(tags=["portal"])

logger = logging.getLogger("routes")


def _session_id(cookie: Optional[str], header: Optional[str]) -> Optional[str]:
    return header or cookie


@router.post("/login", name="login")
async def login(platform: PlatformDep, credentials: LoginRequest):
    try:
        session = platform.portal_login(credentials.user, credentials.password)
        body = SessionResponse(session_id=session.session_id, serial=session.bound_serial)
        response = responses.JSONResponse(body.model_dump())
        response.set_cookie(SESSION_COOKIE, session.session_id, httponly=True)
        return response
    except PortalError as ex:
        return portal_error(ex)
    except Exception as e:
        logger.error(e)
        return response_error_handler({"status": 500})


@router.get("/history", name="history")
async def history(
    platform: PlatformDep,
    serial: str,
    session: Annotated[Optional[str], Cookie()] = None,
    x_session: Annotated[Optional[str], Header()] = None,
):
    try:
        records = platform.portal_history(_session_id(session, x_session), serial)
        body = HistoryResponse(
            serial=serial, records=[HistoryEntry.from_record(r) for r in records]
        )
        return responses.JSONResponse(body.model_dump())
    except PortalError as ex:
        return portal_error(ex)
    except Exception as e:
        logger.error(e)
        return response_error_handler({"status": 500})


@router.post("/geofence", name="geofence")
async def geofence(platform: PlatformDep, request: GeofenceRequest):
    try:
        fence = Geofence(
            center=GeoPosition(lat_deg=request.lat, lon_deg=request.lon),
            radius_m=request.radius_m,
            action=request.action,
        )
        ack = platform.portal_add_geofence(request.serial, fence)
        return responses.JSONResponse(CommandAck(**ack).model_dump())
    except PortalError as ex:
        return portal_error(ex)
    except Exception as e:
        logger.error(e)
        return response_error_handler({"status": 500})


@router.post("/engine", name="engine")
async def engine(platform: PlatformDep, request: EngineRequest):
    try:
        if request.action == "stop":
            ack = platform.portal_engine_stop(request.serial)
        else:
            ack = platform.portal_engine_resume(request.serial)
        return responses.JSONResponse(CommandAck(**ack).model_dump())
    except PortalError as ex:
        return portal_error(ex)
    except Exception as e:
        logger.error(e)
        return response_error_handler({"status": 500})


@router.post("/password", name="password")
async def password(
    platform: PlatformDep,
    request: PasswordRequest,
    session: Annotated[Optional[str], Cookie()] = None,
    x_session: Annotated[Optional[str], Header()] = None,
):
    try:
        platform.portal_change_password(
            _session_id(session, x_session), request.old_password, request.new_password
        )
        return responses.JSONResponse({"changed": True})
    except PortalError as ex:
        return portal_error(ex)
    except Exception as e:
        logger.error(e)
        return response_error_handler({"status": 500})
