import ipaddress
import unittest

from starlette.datastructures import CommaSeparatedStrings

import gpslab.config as config


class ConfigTestCase(unittest.TestCase):
    def test_environment_variables(self):
        assert type(config.ALLOWED_HOSTS) == CommaSeparatedStrings

    def test_network_defaults_stay_on_loopback(self):
        assert ipaddress.ip_address(config.BIND_HOST).is_loopback
        assert config.UNSAFE_BIND is False
        ports = [config.HQ_PORT, config.YY_PORT, config.AGPS_PORT, config.HTTP_PORT]
        assert len(set(ports)) == len(ports)

    def test_platform_defaults(self):
        assert config.DEVICE_ID_BASE == 82383
        assert config.API_PATH == "/OpenAPIV2.asmx"


if __name__ == "__main__":
    unittest.main()
