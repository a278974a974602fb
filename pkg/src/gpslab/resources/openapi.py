"""
The vendor's `OpenAPIV2.asmx` web service over plain HTTP.

SOAP 1.1 envelopes are posted to the service path; the result is a JSON
string wrapped in a `<Operation>Result` element. The ASMX-style
`/<Operation>` form endpoints, the `?WSDL` description and the debug page are
served too. No operation checks who is asking.
"""

import logging
from typing import Annotated, Callable
from urllib.parse import parse_qs

import ujson
from fastapi import APIRouter, Depends, Request, responses
from lxml import etree
from lxml.html import builder as E, tostring as html_tostring

from gpslab.codecs import soap
from gpslab.codecs.soap import NAMESPACE, XSD, field
from gpslab.config import API_PATH
from gpslab.dependencies import Dependencies
from gpslab.error_response import response_error_handler
from gpslab.exceptions import MalformedEnvelope
from gpslab.platform.service import Platform

PlatformDep = Annotated[Platform, Depends(Dependencies.get_platform)]

router = APIRouter(tags=["openapi"], prefix=API_PATH)

logger = logging.getLogger("routes")

XML_MEDIA_TYPE = "text/xml; charset=utf-8"
WSDL = "http://schemas.xmlsoap.org/wsdl/"
WSDL_SOAP = "http://schemas.xmlsoap.org/wsdl/soap/"

# operation -> (parameters, platform method)
OPERATIONS: dict[str, tuple[tuple[str, ...], Callable[[Platform, int], dict]]] = {
    "GetTracking": (("DeviceID", "TimeZone", "MapType"), Platform.api_get_tracking),
    "GetDeviceDetail": (("DeviceID", "TimeZones"), Platform.api_get_device_detail),
}


def render_result(payload: dict) -> str:
    return ujson.dumps(payload, ensure_ascii=True, escape_forward_slashes=False)


def soap_response(operation: str, payload: dict) -> bytes:
    return soap.build_response(operation, render_result(payload))


def device_id(params: dict[str, str]) -> int:
    try:
        return int(params.get("DeviceID", "").strip())
    except ValueError:
        raise MalformedEnvelope("DeviceID must be an integer")


def _invoke(platform: Platform, operation: str, params: dict[str, str]) -> dict:
    if operation not in OPERATIONS:
        raise MalformedEnvelope(f"unknown operation {operation}")
    _, method = OPERATIONS[operation]
    payload = method(platform, device_id(params))
    logger.info(
        "API call",
        extra={"api.operation": operation, "api.device_id": params.get("DeviceID")},
    )
    return payload


@router.post("", name="soap")
async def soap_call(platform: PlatformDep, request: Request):
    try:
        operation, params = soap.parse_request(await request.body())
        payload = _invoke(platform, operation, params)
        return responses.Response(
            soap_response(operation, payload), media_type=XML_MEDIA_TYPE
        )
    except MalformedEnvelope as ex:
        return response_error_handler({"status": 400, "details": str(ex)})
    except Exception as e:
        logger.error(e)
        return response_error_handler({"status": 500})


@router.api_route("/{operation}", methods=["GET", "POST"], name="http_operation")
async def http_operation(platform: PlatformDep, request: Request, operation: str):
    try:
        params = dict(request.query_params)
        if request.method == "POST":
            form = parse_qs((await request.body()).decode("ascii", "replace"))
            params.update({key: values[0] for key, values in form.items()})
        payload = _invoke(platform, operation, params)
        return responses.Response(
            soap.build_string(render_result(payload)), media_type=XML_MEDIA_TYPE
        )
    except MalformedEnvelope as ex:
        return response_error_handler({"status": 400, "details": str(ex)})
    except Exception as e:
        logger.error(e)
        return response_error_handler({"status": 500})


@router.get("", name="describe")
async def describe(request: Request):
    if any(key.upper() == "WSDL" for key in request.query_params):
        location = str(request.base_url).rstrip("/") + API_PATH
        return responses.Response(wsdl(location), media_type=XML_MEDIA_TYPE)
    return responses.HTMLResponse(debug_page())


def _schema_elements(schema: etree._Element, name: str, params: tuple[str, ...]) -> None:
    request = field(schema, XSD, "element", name=name)
    sequence = field(field(request, XSD, "complexType"), XSD, "sequence")
    for param in params:
        if param == "DeviceID":
            field(sequence, XSD, "element", minOccurs="1", maxOccurs="1", name=param, type="s:int")
        else:
            field(sequence, XSD, "element", minOccurs="0", maxOccurs="1", name=param, type="s:string")

    response = field(schema, XSD, "element", name=f"{name}Response")
    sequence = field(field(response, XSD, "complexType"), XSD, "sequence")
    field(sequence, XSD, "element", minOccurs="0", maxOccurs="1", name=f"{name}Result", type="s:string")


def wsdl(location: str) -> bytes:
    definitions = etree.Element(
        f"{{{WSDL}}}definitions",
        nsmap={"s": XSD, "soap": WSDL_SOAP, "wsdl": WSDL, "tns": NAMESPACE},
        targetNamespace=NAMESPACE,
    )
    types = field(definitions, WSDL, "types")
    schema = field(types, XSD, "schema", elementFormDefault="qualified", targetNamespace=NAMESPACE)
    for name, (params, _) in OPERATIONS.items():
        _schema_elements(schema, name, params)

    for name in OPERATIONS:
        message = field(definitions, WSDL, "message", name=f"{name}SoapIn")
        field(message, WSDL, "part", name="parameters", element=f"tns:{name}")
        message = field(definitions, WSDL, "message", name=f"{name}SoapOut")
        field(message, WSDL, "part", name="parameters", element=f"tns:{name}Response")

    port_type = field(definitions, WSDL, "portType", name="OpenAPIV2Soap")
    for name in OPERATIONS:
        operation = field(port_type, WSDL, "operation", name=name)
        field(operation, WSDL, "input", message=f"tns:{name}SoapIn")
        field(operation, WSDL, "output", message=f"tns:{name}SoapOut")

    binding = field(definitions, WSDL, "binding", name="OpenAPIV2Soap", type="tns:OpenAPIV2Soap")
    field(binding, WSDL_SOAP, "binding", transport="http://schemas.xmlsoap.org/soap/http")
    for name in OPERATIONS:
        operation = field(binding, WSDL, "operation", name=name)
        field(operation, WSDL_SOAP, "operation", soapAction=f"{NAMESPACE}{name}", style="document")

    service = field(definitions, WSDL, "service", name="OpenAPIV2")
    port = field(service, WSDL, "port", name="OpenAPIV2Soap", binding="tns:OpenAPIV2Soap")
    field(port, WSDL_SOAP, "address", location=location)
    return soap.to_bytes(definitions)


def debug_page() -> str:
    forms = []
    for name, (params, _) in OPERATIONS.items():
        rows = [E.TR(E.TD(f"{param}:"), E.TD(E.INPUT(name=param))) for param in params]
        forms.append(E.H2(name))
        forms.append(
            E.FORM(
                E.TABLE(*rows),
                E.INPUT(type="submit", value="Invoke"),
                method="post",
                action=f"{API_PATH}/{name}",
            )
        )
    page = E.HTML(
        E.HEAD(E.TITLE("OpenAPIV2")),
        E.BODY(
            E.H1("OpenAPIV2"),
            E.P("Click ", E.A("here", href=f"{API_PATH}?WSDL"), " for a complete list of operations."),
            *forms,
        ),
    )
    return html_tostring(page, encoding="unicode")
