import unittest

import ujson
from fastapi.testclient import TestClient
from lxml import etree

from gpslab.config import API_PATH
from gpslab.main import get_application
from gpslab.models.fleetfile import parse_fleet
from gpslab.models.simclock import SimClock, parse_iso
from gpslab.platform.service import Platform
from gpslab.codecs.soap import NAMESPACE, parse_request
from gpslab.resources.openapi import soap_response

FLEET = parse_fleet(
    """
device serial=1700061234 family=HQ phone=+440025241 home=22.680193,114.146846
device serial=690217122612463 family=YY phone=+440025240 iccid=8988211000000276405F home=22.543096,114.057865
"""
)
V1 = b"*HQ,1700061234,V1,105417,A,2240.8116,N,11408.8108,E,000.0,000.00,090119,FFFFFFFF#"

platform = Platform(FLEET, clock=SimClock(parse_iso("2019-01-09T10:54:17Z")))
platform.hq_connection().receive(V1)
client = TestClient(get_application(platform))

SOAP_REQUEST = """<?xml version="1.0" encoding="utf-8"?>
<soap:Envelope xmlns:soap="http://schemas.xmlsoap.org/soap/envelope/">
  <soap:Body>
    <{op} xmlns="http://tempuri.org/">
      <DeviceID>{device_id}</DeviceID>
      <TimeZone>China Standard Time</TimeZone>
      <MapType>Google</MapType>
    </{op}>
  </soap:Body>
</soap:Envelope>"""


CAPTURED_REQUEST = (
    b'<v:Envelope xmlns:i="http://www.w3.org/2001/XMLSchema-instance" '
    b'xmlns:d="http://www.w3.org/2001/XMLSchema" '
    b'xmlns:c="http://schemas.xmlsoap.org/soap/encoding/" '
    b'xmlns:v="http://schemas.xmlsoap.org/soap/envelope/"><v:Header/><v:Body>'
    b'<GetTracking xmlns="http://tempuri.org/" id="o0" c:root="1">'
    b'<DeviceID i:type="d:int">82383</DeviceID><TimeZone i:type="d:string">UTC</TimeZone>'
    b'<MapType i:type="d:string">Google</MapType></GetTracking></v:Body></v:Envelope>'
)


def soap_result(body: bytes, operation: str) -> dict:
    root = etree.fromstring(body)
    result = root.find(f".//{{{NAMESPACE}}}{operation}Result")
    return ujson.loads(result.text)


def test_metrics():
    client.get(f"{API_PATH}/GetTracking?DeviceID=82383")
    response = client.get("/metrics")

    assert response.status_code == 200
    assert "http_requests_total" in response.text


def test_envelope_round_trip():
    operation, params = parse_request(
        SOAP_REQUEST.format(op="GetTracking", device_id=82383).encode()
    )
    assert operation == "GetTracking"
    assert params["DeviceID"] == "82383"
    assert soap_result(soap_response("GetTracking", {"state": "1"}), "GetTracking") == {
        "state": "1"
    }


class OpenApiTestCase(unittest.TestCase):
    def soap(self, operation, device_id):
        return client.post(
            API_PATH,
            content=SOAP_REQUEST.format(op=operation, device_id=device_id),
            headers={
                "Content-Type": "text/xml; charset=utf-8",
                "SOAPAction": f'"{NAMESPACE}{operation}"',
            },
        )

    def test_get_tracking_over_soap(self):
        response = self.soap("GetTracking", 82383)
        assert response.status_code == 200
        assert response.headers["content-type"].startswith("text/xml")
        result = soap_result(response.content, "GetTracking")
        assert result["state"] == "0"
        assert result["latitude"] == "22.680193"
        assert result["longitude"] == "114.146846"

    def test_unknown_device_id(self):
        response = self.soap("GetTracking", 99999)
        assert soap_result(response.content, "GetTracking") == {"state": "1"}

    def test_device_detail_of_a_neighbour(self):
        response = self.soap("GetDeviceDetail", 82384)
        result = soap_result(response.content, "GetDeviceDetail")
        assert result["sn"] == "690217122612463"
        assert result["phone"] == "+440025240"

    def test_http_get_and_post_forms(self):
        for response in (
            client.get(f"{API_PATH}/GetTracking", params={"DeviceID": "82383"}),
            client.post(f"{API_PATH}/GetTracking", data={"DeviceID": "82383"}),
        ):
            assert response.status_code == 200
            root = etree.fromstring(response.content)
            assert root.tag == f"{{{NAMESPACE}}}string"
            assert ujson.loads(root.text)["latitude"] == "22.680193"

    def test_bad_requests(self):
        response = client.post(API_PATH, content=b"<not-xml")
        assert response.status_code == 400
        assert ujson.loads(response.text)["status_code"] == 400

        response = self.soap("DeleteEverything", 82383)
        assert response.status_code == 400

        response = client.get(f"{API_PATH}/GetTracking", params={"DeviceID": "abc"})
        assert response.status_code == 400

    def test_wsdl_and_debug_page(self):
        response = client.get(f"{API_PATH}?WSDL")
        assert response.status_code == 200
        assert 'name="GetTracking"' in response.text
        assert f"{API_PATH}" in response.text

        response = client.get(API_PATH)
        assert response.headers["content-type"].startswith("text/html")
        assert "GetDeviceDetail" in response.text

    def test_captured_app_request(self):
        response = client.post(
            API_PATH,
            content=CAPTURED_REQUEST,
            headers={"Content-Type": "text/xml; charset=utf-8"},
        )
        assert response.status_code == 200
        result = soap_result(response.content, "GetTracking")
        assert result["state"] == "0"
        assert result["olatitude"] == result["latitude"] == "22.680193"

    def test_external_entities_are_not_loaded(self):
        body = (
            b'<?xml version="1.0"?><!DOCTYPE x [<!ENTITY id SYSTEM "file:///etc/hostname">]>'
            + SOAP_REQUEST.split("?>", 1)[1].format(op="GetTracking", device_id="&id;").encode()
        )
        response = client.post(API_PATH, content=body)
        assert response.status_code == 400


def test_get_tracking_sweep(benchmark):
    found = []
    for device_id in range(82380, 82390):
        response = client.get(f"{API_PATH}/GetTracking", params={"DeviceID": device_id})
        assert response.status_code == 200
        if ujson.loads(etree.fromstring(response.content).text)["state"] == "0":
            found.append(device_id)
    assert found == [82383]

    runnable = lambda: client.get(f"{API_PATH}/GetTracking", params={"DeviceID": 82383})
    benchmark(runnable)
