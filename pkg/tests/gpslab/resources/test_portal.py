import unittest

from fastapi.testclient import TestClient

from gpslab.main import get_application
from gpslab.models.fleetfile import parse_fleet
from gpslab.models.simclock import SimClock, parse_iso
from gpslab.platform.service import Platform

FLEET = parse_fleet(
    """
device serial=1700061234 family=HQ phone=+440025241 home=22.680193,114.146846 engine_relay=yes
device serial=1700098765 family=HQ phone=+440025277 home=22.396428,114.109497
device serial=1700055555 family=HQ phone=+440025310 home=22.319304,114.169361
"""
)
OTHER = b"*HQ,1700098765,V1,105417,A,2223.7857,N,11406.5698,E,000.0,000.00,090119,FFFFFFFF#"

platform = Platform(FLEET, clock=SimClock(parse_iso("2019-01-09T10:54:17Z")))
platform.hq_connection().receive(OTHER)
client = TestClient(get_application(platform))


def test_metrics():
    client.post("/login", json={"user": "nobody", "password": "nothing"})
    response = client.get("/metrics")

    assert response.status_code == 200
    assert "http_requests_total" in response.text


class PortalTestCase(unittest.TestCase):
    def setUp(self):
        client.cookies.clear()

    def login(self, user, password):
        return client.post("/login", json={"user": user, "password": password})

    def test_login_with_default_credentials(self):
        response = self.login("0061234", "0061234")
        assert response.status_code == 200
        assert response.json()["serial"] == "1700061234"
        assert "session" in response.cookies

    def test_login_failure(self):
        response = self.login("0061234", "guess")
        assert response.status_code == 401
        assert response.json()["status_code"] == 401

    def test_history_with_someone_elses_session(self):
        session_id = self.login("0061234", "0061234").json()["session_id"]
        client.cookies.clear()
        response = client.get(
            "/history", params={"serial": "1700098765"}, headers={"X-Session": session_id}
        )
        assert response.status_code == 200
        body = response.json()
        assert body["count"] == 1
        assert body["records"][0]["serial"] == "1700098765"
        assert body["records"][0]["raw"] == OTHER.hex().upper()

    def test_history_with_the_cookie(self):
        self.login("0061234", "0061234")
        response = client.get("/history", params={"serial": "1700061234"})
        assert response.status_code == 200
        assert response.json()["count"] == 0

    def test_history_needs_a_session(self):
        response = client.get("/history", params={"serial": "1700098765"})
        assert response.status_code == 401
        response = client.get(
            "/history", params={"serial": "1700098765"}, headers={"X-Session": "forged"}
        )
        assert response.status_code == 401

    def test_history_of_an_unknown_serial(self):
        self.login("0061234", "0061234")
        response = client.get("/history", params={"serial": "1799999999"})
        assert response.status_code == 404

    def test_geofence_without_a_session(self):
        response = client.post(
            "/geofence",
            json={"serial": "1700061234", "lat": 22.68, "lon": 114.14, "radius_m": 50},
        )
        assert response.status_code == 200
        assert response.json() == {"serial": "1700061234", "delivered": False}

    def test_geofence_validation(self):
        response = client.post(
            "/geofence",
            json={"serial": "1700061234", "lat": 95, "lon": 114.14, "radius_m": 50},
        )
        assert response.status_code == 422

    def test_engine_commands(self):
        response = client.post("/engine", json={"serial": "1700061234", "action": "stop"})
        assert response.status_code == 200
        response = client.post("/engine", json={"serial": "1700061234", "action": "resume"})
        assert response.status_code == 200
        response = client.post("/engine", json={"serial": "1700098765"})
        assert response.status_code == 501
        response = client.post("/engine", json={"serial": "1799999999"})
        assert response.status_code == 404

    def test_password_change(self):
        self.login("0055555", "0055555")
        response = client.post(
            "/password", json={"old_password": "0055555", "new_password": "rotated"}
        )
        assert response.status_code == 200
        assert response.json() == {"changed": True}
        assert self.login("0055555", "0055555").status_code == 401
        assert self.login("0055555", "rotated").status_code == 200

    def test_password_change_needs_a_session(self):
        response = client.post("/password", json={"old_password": "x", "new_password": "y"})
        assert response.status_code == 401
